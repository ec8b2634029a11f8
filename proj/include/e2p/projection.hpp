#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "e2p/tensor.hpp"
#include "e2p/tokenizer.hpp"
#include "e2p/transformer.hpp"

namespace e2p {

using UserEmbedding = std::vector<double>;

struct LoadedProjection;

// The trainable map from user-embedding space into the model's hidden
// space: p = LayerNorm(ReLU(W1 c)) W2 + b, with learned affine norm.
// These five tensors are the only parameters updated in prefix training.
class ProjectionParams {
  public:
    static ProjectionParams init(std::size_t input_dim, std::size_t proj_dim,
                                 std::size_t hidden_dim, std::uint64_t seed);

    std::size_t input_dim() const { return w1_.cols(); }
    std::size_t proj_dim() const { return w1_.rows(); }
    std::size_t hidden_dim() const { return b_.shape()[0]; }
    double norm_eps() const { return norm_eps_; }
    void set_norm_eps(double eps) { norm_eps_ = eps; }

    std::vector<std::pair<std::string, Tensor>> named_params() const;
    std::vector<Tensor> params() const;
    std::string compute_digest() const;

    const Tensor& w1() const { return w1_; }
    const Tensor& w2() const { return w2_; }
    const Tensor& bias() const { return b_; }
    const Tensor& norm_gamma() const { return norm_gamma_; }
    const Tensor& norm_beta() const { return norm_beta_; }

    void save(const std::string& path, const std::string& objective, double alpha,
              const std::string& lm_digest) const;

  private:
    Tensor w1_;         // [d_c × d]
    Tensor w2_;         // [d_c × d_h]
    Tensor b_;          // [d_h]
    Tensor norm_gamma_; // [d_c]
    Tensor norm_beta_;  // [d_c]
    double norm_eps_ = 1e-5;

    friend LoadedProjection load_projection(const std::string&, const std::string&);
};

struct LoadedProjection {
    ProjectionParams phi;
    std::string objective;
    double alpha = 1.0;
    std::string lm_digest;
};

// Warns on stderr when expected_lm_digest is given and does not match the
// stored one; the caller decides whether that is fatal.
LoadedProjection load_projection(const std::string& path,
                                 const std::string& expected_lm_digest = "");

// p = phi(c), returned as a [1 × d_h] row so it can be concatenated in
// front of token embeddings.
Tensor project(const ProjectionParams& phi, const UserEmbedding& c);

// H0 = [p; E(x)] with positions added over all T+1 rows.
Tensor inject(const Tensor& prefix, const TokenSequence& tokens, const FrozenLMWeights& lm);

} // namespace e2p
