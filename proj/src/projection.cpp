#include "e2p/projection.hpp"

#include <cmath>
#include <iostream>

#include "e2p/checkpoint.hpp"
#include "e2p/digest.hpp"
#include "e2p/errors.hpp"
#include "e2p/rng.hpp"

namespace e2p {

ProjectionParams ProjectionParams::init(std::size_t input_dim, std::size_t proj_dim,
                                        std::size_t hidden_dim, std::uint64_t seed) {
    if (input_dim == 0 || proj_dim == 0 || hidden_dim == 0)
        throw ConfigError("projection init: dimensions must be positive");
    ProjectionParams p;
    Rng rng(seed);
    const double s1 = 1.0 / std::sqrt(double(input_dim));
    const double s2 = 1.0 / std::sqrt(double(proj_dim));
    p.w1_ = Tensor::zeros({proj_dim, input_dim}, true);
    for (double& v : p.w1_.data()) v = rng.uniform(-s1, s1);
    p.w2_ = Tensor::zeros({proj_dim, hidden_dim}, true);
    for (double& v : p.w2_.data()) v = rng.uniform(-s2, s2);
    p.b_ = Tensor::zeros({hidden_dim}, true);
    p.norm_gamma_ = Tensor::full({proj_dim}, 1.0, true);
    p.norm_beta_ = Tensor::zeros({proj_dim}, true);
    return p;
}

std::vector<std::pair<std::string, Tensor>> ProjectionParams::named_params() const {
    return {{"w1", w1_}, {"w2", w2_}, {"b", b_}, {"norm_gamma", norm_gamma_},
            {"norm_beta", norm_beta_}};
}

std::vector<Tensor> ProjectionParams::params() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
}

std::string ProjectionParams::compute_digest() const {
    Sha256 h;
    for (const auto& [name, t] : named_params()) {
        h.update(name);
        h.update_u64(t.shape().size());
        for (std::size_t d : t.shape()) h.update_u64(d);
        h.update_doubles(t.values().data(), t.numel());
    }
    return to_hex(h.finish());
}

Tensor project(const ProjectionParams& phi, const UserEmbedding& c) {
    if (c.size() != phi.input_dim())
        throw ShapeError("project: embedding dimension " + std::to_string(c.size()) +
                         " does not match W1 columns " + std::to_string(phi.input_dim()));
    Tensor c_row = Tensor::from({1, c.size()}, c);
    Tensor u = matmul(c_row, transpose(phi.w1()));                            // [1 × d_c]
    Tensor n = layer_norm(relu(u), phi.norm_gamma(), phi.norm_beta(), phi.norm_eps());
    Tensor p = matmul(n, phi.w2());                                           // [1 × d_h]
    return add(p, as_row(phi.bias()));
}

Tensor inject(const Tensor& prefix, const TokenSequence& tokens, const FrozenLMWeights& lm) {
    if (prefix.shape() != std::vector<std::size_t>{1, lm.config().hidden_dim})
        throw ShapeError("inject: prefix must be [1 x " +
                         std::to_string(lm.config().hidden_dim) + "], got " +
                         shape_str(prefix.shape()));
    if (tokens.empty()) throw ShapeError("inject: token sequence must be nonempty");
    if (tokens.size() + 1 > lm.config().max_seq_len)
        throw ShapeError("inject: prefix plus " + std::to_string(tokens.size()) +
                         " tokens exceeds max_seq_len " + std::to_string(lm.config().max_seq_len));
    Tensor rows = concat_rows({prefix, lm.embed(tokens)});
    return add(rows, slice_rows(lm.position_embedding(), 0, tokens.size() + 1));
}

void ProjectionParams::save(const std::string& path, const std::string& objective, double alpha,
                            const std::string& lm_digest) const {
    Checkpoint ckpt;
    ckpt.header = {
        {"kind", "phi"},
        {"input_dim", input_dim()},
        {"proj_dim", proj_dim()},
        {"hidden_dim", hidden_dim()},
        {"norm_eps", norm_eps_},
        {"objective", objective},
        {"alpha", alpha},
        {"lm_digest", lm_digest},
    };
    ckpt.blocks = named_params();
    save_checkpoint(path, ckpt);
}

LoadedProjection load_projection(const std::string& path, const std::string& expected_lm_digest) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.header.value("kind", "") != "phi")
        throw DataError(path + ": not a projection checkpoint (kind=" +
                        ckpt.header.value("kind", "?") + ")");
    LoadedProjection out;
    out.phi.w1_ = ckpt.block("w1");
    out.phi.w2_ = ckpt.block("w2");
    out.phi.b_ = ckpt.block("b");
    out.phi.norm_gamma_ = ckpt.block("norm_gamma");
    out.phi.norm_beta_ = ckpt.block("norm_beta");
    out.phi.norm_eps_ = ckpt.header.value("norm_eps", 1e-5);
    for (Tensor& t : out.phi.params()) t.set_requires_grad(true);
    out.objective = ckpt.header.value("objective", "lm");
    out.alpha = ckpt.header.value("alpha", 1.0);
    out.lm_digest = ckpt.header.value("lm_digest", "");
    if (!expected_lm_digest.empty() && out.lm_digest != expected_lm_digest) {
        std::cerr << "warning: " << path
                  << " was trained against a different frozen model (digest mismatch)\n";
    }
    return out;
}

} // namespace e2p
