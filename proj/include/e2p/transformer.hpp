#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "e2p/optim.hpp"
#include "e2p/rng.hpp"
#include "e2p/tensor.hpp"
#include "e2p/tokenizer.hpp"

namespace e2p {

struct LMConfig {
    std::size_t vocab_size = Tokenizer::kVocabSize;
    std::size_t hidden_dim = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t max_seq_len = 128;
    double layer_norm_eps = 1e-5;
    std::uint64_t seed = 42;

    void validate() const;
};

// Decoder-only transformer: pre-norm blocks, learned absolute positions,
// output projection tied to the token embedding. After freeze() the
// parameter set is immutable and digest-checked.
class FrozenLMWeights {
  public:
    struct Layer {
        Tensor ln1_gamma, ln1_beta;
        Tensor wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor ln2_gamma, ln2_beta;
        Tensor w_ff1, b_ff1, w_ff2, b_ff2;
    };

    static FrozenLMWeights init(const LMConfig& cfg);

    const LMConfig& config() const { return cfg_; }
    const Tensor& token_embedding() const { return tok_emb_; }
    const Tensor& position_embedding() const { return pos_emb_; }

    // Stable (name, tensor) view over every parameter. The output projection
    // is the embedding itself (weight tying), so it appears once.
    std::vector<std::pair<std::string, Tensor>> named_params() const;
    std::vector<Tensor> params() const;

    void freeze();
    bool frozen() const { return frozen_; }
    const std::string& digest() const; // digest captured at freeze()
    std::string compute_digest() const;
    void verify_frozen() const; // ContractError if any bit changed since freeze

    // Token embedding rows, no positions. All ids must be < vocab_size.
    Tensor embed(const TokenSequence& tokens) const;

    // Token embedding plus positions 0..T-1; the usual prefix-free input.
    Tensor input_states(const TokenSequence& tokens) const;

    // Logits [L×V] from initial hidden states [L×d_h].
    Tensor forward(const Tensor& h0, bool causal = true) const;

    void save(const std::string& path) const;
    static FrozenLMWeights load(const std::string& path);

  private:
    LMConfig cfg_;
    Tensor tok_emb_; // [V×d_h]
    Tensor pos_emb_; // [max_seq_len×d_h]
    std::vector<Layer> layers_;
    Tensor lnf_gamma_, lnf_beta_;
    bool frozen_ = false;
    std::string digest_;
};

struct PretrainReport {
    std::vector<double> epoch_losses;
    std::uint64_t seed = 0;
    std::size_t n_sequences = 0;
};

// Next-token training from scratch; returns weights already frozen.
FrozenLMWeights pretrain(const std::vector<TokenSequence>& corpus, const LMConfig& cfg,
                         const TrainConfig& train_cfg, PretrainReport* report = nullptr);

// Autoregressive sampling. temperature 0 takes the argmax (lowest index wins
// ties); otherwise draws from softmax(logits/temperature). Stops after
// max_new tokens or at stop_id (pass -1 for no stop token). Returns only the
// newly generated tokens.
TokenSequence sample_generate(const FrozenLMWeights& lm, const TokenSequence& prompt,
                              const std::optional<Tensor>& prefix, double temperature,
                              std::size_t max_new, std::uint64_t seed, int stop_id);

} // namespace e2p
