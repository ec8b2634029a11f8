#pragma once

// Shared hand-built models for metric and objective tests.

#include "e2p/tokenizer.hpp"
#include "e2p/transformer.hpp"

namespace testutil {

// A model whose every prediction is a point mass on a chosen token per
// position: attention and feed-forward are zeroed, the token embedding is a
// scaled one-hot basis, and position t's embedding points at the token
// expected at row t (tokens living at positions 1..T behind a prefix row,
// or 0..T-1 without one — pass the per-row expectation accordingly).
inline e2p::FrozenLMWeights point_mass_model(const e2p::TokenSequence& expected_at_row,
                                             std::size_t vocab = e2p::Tokenizer::kVocabSize,
                                             std::size_t max_seq_len = 32) {
    e2p::LMConfig cfg;
    cfg.vocab_size = vocab;
    cfg.hidden_dim = vocab;
    cfg.n_layers = 1;
    cfg.n_heads = 1;
    cfg.max_seq_len = max_seq_len;
    e2p::FrozenLMWeights lm = e2p::FrozenLMWeights::init(cfg);
    for (auto& [name, t] : lm.named_params()) {
        e2p::Tensor mut = t;
        if (name.find("gamma") != std::string::npos)
            std::fill(mut.data().begin(), mut.data().end(), 1.0);
        else
            std::fill(mut.data().begin(), mut.data().end(), 0.0);
    }
    e2p::Tensor emb = lm.token_embedding();
    for (std::size_t v = 0; v < cfg.vocab_size; ++v) emb.data()[v * cfg.hidden_dim + v] = 10.0;
    e2p::Tensor pos = lm.position_embedding();
    for (std::size_t t = 0; t < expected_at_row.size(); ++t)
        pos.data()[t * cfg.hidden_dim + std::size_t(expected_at_row[t])] = 40.0;
    lm.freeze();
    return lm;
}

// zero weights everywhere: the next-token distribution is exactly uniform
inline e2p::FrozenLMWeights uniform_model(std::size_t vocab, std::size_t hidden_dim = 8,
                                          std::size_t max_seq_len = 64) {
    e2p::LMConfig cfg;
    cfg.vocab_size = vocab;
    cfg.hidden_dim = hidden_dim;
    cfg.n_layers = 1;
    cfg.n_heads = 1;
    cfg.max_seq_len = max_seq_len;
    e2p::FrozenLMWeights lm = e2p::FrozenLMWeights::init(cfg);
    for (auto& [name, t] : lm.named_params()) {
        e2p::Tensor mut = t;
        std::fill(mut.data().begin(), mut.data().end(), 0.0);
    }
    lm.freeze();
    return lm;
}

} // namespace testutil
