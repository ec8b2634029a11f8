#include "e2p/optim.hpp"

#include <cmath>

#include "e2p/errors.hpp"

namespace e2p {

TrainConfig default_train_config(const std::string& task) {
    TrainConfig cfg; // global fallback: lr 5e-6, batch 32, 5 epochs
    if (task == "personachat") {
        cfg.learning_rate = 5e-6;
        cfg.batch_size = 64;
        cfg.epochs = 3;
    } else if (task == "pens") {
        cfg.learning_rate = 5e-6;
        cfg.batch_size = 32;
        cfg.epochs = 3;
    } else if (task == "music") {
        cfg.learning_rate = 5e-7;
        cfg.batch_size = 256;
        cfg.epochs = 5;
    } else if (task == "podcast") {
        cfg.learning_rate = 1e-5;
        cfg.batch_size = 16;
        cfg.epochs = 5;
    } else if (task == "synthetic") {
        // desk-scale model trained from scratch wants a much larger step
        cfg.learning_rate = 1e-2;
        cfg.batch_size = 32;
        cfg.epochs = 1;
    }
    cfg.seed = 42;
    return cfg;
}

AdamW::AdamW(std::vector<Tensor> params) : params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void AdamW::step(const TrainConfig& cfg) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        if (!p.has_grad()) {
            // no gradient reached this parameter this step; decay still applies
            if (cfg.weight_decay != 0.0) {
                auto& w = p.data();
                for (double& x : w) x -= cfg.learning_rate * cfg.weight_decay * x;
            }
            continue;
        }
        const auto& g = p.grad();
        auto& w = p.data();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw ContractError("adamw: non-finite gradient in parameter " +
                                    std::to_string(pi) + " at index " + std::to_string(i) +
                                    "; aborting training");
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= cfg.learning_rate * (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                                         cfg.weight_decay * w[i]);
        }
        p.zero_grad();
    }
}

void AdamW::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

} // namespace e2p
