#pragma once

#include <string>
#include <variant>
#include <vector>

#include "e2p/objectives.hpp"
#include "e2p/optim.hpp"
#include "e2p/projection.hpp"
#include "e2p/records.hpp"
#include "e2p/tokenizer.hpp"
#include "e2p/transformer.hpp"

namespace e2p {

enum class Objective { LM, KTO };

std::string objective_name(Objective o);

struct TrainReport {
    std::vector<double> epoch_losses;
    std::uint64_t seed = 0;
    TrainConfig config;
    std::string objective;
    std::string lm_digest;
    std::size_t n_records = 0;
};

using TrainData = std::variant<std::vector<LMRecord>, std::vector<PrefRecord>>;

// Trains the projection against a frozen model. Only the five projection
// tensors receive updates; the model digest is re-verified before returning
// and any change is fatal.
ProjectionParams train_e2p(const FrozenLMWeights& lm, const TrainData& data, Objective objective,
                           const TrainConfig& cfg, const Tokenizer& tok,
                           std::size_t proj_dim = 0, // 0: use the model's hidden dim
                           TrainReport* report = nullptr);

} // namespace e2p
