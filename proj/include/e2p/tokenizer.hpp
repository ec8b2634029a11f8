#pragma once

#include <string>
#include <vector>

namespace e2p {

using TokenSequence = std::vector<int>;

// Byte-level tokenizer: ids 0..255 are raw bytes, followed by one id per
// chat marker. <|eot_id|> is the end-of-turn/end-of-text marker; generation
// halts on it. No learned merges, so encode/decode is exact on any byte
// string and every marker round-trips as a single token.
class Tokenizer {
  public:
    static constexpr int kSystem = 256;
    static constexpr int kUser = 257;
    static constexpr int kModel = 258;
    static constexpr int kEot = 259;
    static constexpr int kVocabSize = 260;

    static const std::vector<std::pair<std::string, int>>& specials();

    TokenSequence tokenize(const std::string& text) const;
    std::string detokenize(const TokenSequence& tokens) const;

    int vocab_size() const { return kVocabSize; }
    int eot_id() const { return kEot; }
    int model_id() const { return kModel; }
};

} // namespace e2p
