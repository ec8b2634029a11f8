#include "e2p/train.hpp"

#include <cmath>

#include "e2p/errors.hpp"
#include "e2p/rng.hpp"

namespace e2p {

std::string objective_name(Objective o) { return o == Objective::LM ? "lm" : "kto"; }

ProjectionParams train_e2p(const FrozenLMWeights& lm, const TrainData& data, Objective objective,
                           const TrainConfig& cfg, const Tokenizer& tok, std::size_t proj_dim,
                           TrainReport* report) {
    if (!lm.frozen()) throw ContractError("train_e2p: model must be frozen first");
    lm.verify_frozen();
    const std::string digest_before = lm.digest();

    const std::size_t n_records = std::visit([](const auto& v) { return v.size(); }, data);
    if (n_records == 0) throw DataError("train_e2p: empty training data");
    const std::size_t input_dim = std::visit(
        [](const auto& v) { return v.front().uservector.size(); }, data);
    if (input_dim == 0) throw DataError("train_e2p: records carry empty uservectors");

    const bool is_pref = std::holds_alternative<std::vector<PrefRecord>>(data);
    if (objective == Objective::KTO && !is_pref)
        throw ConfigError("train_e2p: the kto objective needs preference records");
    if (objective == Objective::LM && is_pref)
        throw ConfigError("train_e2p: the lm objective needs lm records");

    const std::size_t d_c = proj_dim == 0 ? lm.config().hidden_dim : proj_dim;
    ProjectionParams phi =
        ProjectionParams::init(input_dim, d_c, lm.config().hidden_dim, cfg.seed);
    AdamW opt(phi.params());

    std::vector<std::size_t> order(n_records);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> epoch_losses;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t batch_count = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            Tensor batch_loss;
            if (objective == Objective::LM) {
                const auto& records = std::get<std::vector<LMRecord>>(data);
                std::vector<Tensor> losses;
                losses.reserve(end - start);
                for (std::size_t bi = start; bi < end; ++bi)
                    losses.push_back(lm_loss(phi, lm, records[order[bi]], tok));
                batch_loss = mean_scalars(losses);
            } else {
                const auto& records = std::get<std::vector<PrefRecord>>(data);
                std::vector<PrefRecord> batch;
                batch.reserve(end - start);
                for (std::size_t bi = start; bi < end; ++bi) batch.push_back(records[order[bi]]);
                batch_loss = kto_loss(phi, lm, batch, cfg.alpha, tok);
            }
            if (!std::isfinite(batch_loss.item()))
                throw ContractError("train_e2p: non-finite loss at epoch " +
                                    std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_count));
            loss_sum += batch_loss.item();
            ++batch_count;
            backward(batch_loss);
            opt.step(cfg);
        }
        epoch_losses.push_back(loss_sum / double(batch_count));
    }

    lm.verify_frozen();
    if (lm.digest() != digest_before)
        throw ContractError("train_e2p: frozen model digest changed during training");

    if (report) {
        report->epoch_losses = epoch_losses;
        report->seed = cfg.seed;
        report->config = cfg;
        report->objective = objective_name(objective);
        report->lm_digest = lm.digest();
        report->n_records = n_records;
    }
    return phi;
}

} // namespace e2p
