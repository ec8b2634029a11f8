#pragma once

#include <string>
#include <vector>

namespace e2p {

// One language-modeling example: a dense user vector plus a chat-formatted
// text whose final <|model|> turn is the training target.
struct LMRecord {
    std::vector<double> uservector;
    std::string text;
};

// One preference example with a binary engagement label.
struct PrefRecord {
    std::vector<double> uservector;
    std::string prompt;
    std::string completion;
    int label = 0;
};

enum class RecordKind { LM, Pref };

std::vector<LMRecord> load_lm_jsonl(const std::string& path);
std::vector<PrefRecord> load_pref_jsonl(const std::string& path);

void save_lm_jsonl(const std::string& path, const std::vector<LMRecord>& records);
void save_pref_jsonl(const std::string& path, const std::vector<PrefRecord>& records);

} // namespace e2p
