#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "e2p/tensor.hpp"

namespace e2p {

struct TrainConfig {
    double learning_rate = 5e-6;
    std::size_t batch_size = 32;
    std::size_t epochs = 5;
    std::uint64_t seed = 42;
    double alpha = 1.0; // weight on negative examples in the preference objective
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
};

// Per-task defaults; unknown tasks fall back to the global row.
TrainConfig default_train_config(const std::string& task);

// Decoupled-weight-decay Adam with bias correction.
class AdamW {
  public:
    explicit AdamW(std::vector<Tensor> params);

    // Consumes the accumulated .grad of every parameter and clears it.
    // Throws ContractError on non-finite gradients (with the parameter index).
    void step(const TrainConfig& cfg);

    void zero_grad();
    std::uint64_t steps() const { return t_; }
    const std::vector<Tensor>& params() const { return params_; }

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    std::uint64_t t_ = 0;
};

} // namespace e2p
