#include "e2p/tokenizer.hpp"

#include <stdexcept>

namespace e2p {

const std::vector<std::pair<std::string, int>>& Tokenizer::specials() {
    static const std::vector<std::pair<std::string, int>> table = {
        {"<|system|>", kSystem},
        {"<|user|>", kUser},
        {"<|model|>", kModel},
        {"<|eot_id|>", kEot},
    };
    return table;
}

TokenSequence Tokenizer::tokenize(const std::string& text) const {
    TokenSequence out;
    out.reserve(text.size());
    const auto& table = specials();
    std::size_t i = 0;
    while (i < text.size()) {
        bool matched = false;
        if (text[i] == '<') {
            for (const auto& [marker, id] : table) {
                if (text.compare(i, marker.size(), marker) == 0) {
                    out.push_back(id);
                    i += marker.size();
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) {
            out.push_back(static_cast<int>(static_cast<unsigned char>(text[i])));
            ++i;
        }
    }
    return out;
}

std::string Tokenizer::detokenize(const TokenSequence& tokens) const {
    std::string out;
    out.reserve(tokens.size());
    for (int t : tokens) {
        if (t >= 0 && t < 256) {
            out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
        } else {
            bool found = false;
            for (const auto& [marker, id] : specials()) {
                if (id == t) {
                    out += marker;
                    found = true;
                    break;
                }
            }
            if (!found)
                throw std::out_of_range("detokenize: unknown token id " + std::to_string(t));
        }
    }
    return out;
}

} // namespace e2p
