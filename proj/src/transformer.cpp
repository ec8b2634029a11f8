#include "e2p/transformer.hpp"

#include <cmath>

#include "e2p/checkpoint.hpp"
#include "e2p/digest.hpp"
#include "e2p/errors.hpp"

namespace e2p {

void LMConfig::validate() const {
    if (hidden_dim == 0 || n_heads == 0 || hidden_dim % n_heads != 0)
        throw ConfigError("lm config: hidden_dim " + std::to_string(hidden_dim) +
                          " must be divisible by n_heads " + std::to_string(n_heads));
    if (max_seq_len < 2)
        throw ConfigError("lm config: max_seq_len must be at least 2 (prefix plus one token)");
    if (vocab_size == 0) throw ConfigError("lm config: vocab_size must be positive");
    if (layer_norm_eps <= 0.0) throw ConfigError("lm config: layer_norm_eps must be positive");
}

namespace {

Tensor init_weight(Rng& rng, std::vector<std::size_t> shape, double stddev) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (double& v : t.data()) v = rng.gaussian(0.0, stddev);
    return t;
}

} // namespace

FrozenLMWeights FrozenLMWeights::init(const LMConfig& cfg) {
    cfg.validate();
    FrozenLMWeights w;
    w.cfg_ = cfg;
    Rng rng(cfg.seed);
    const std::size_t d = cfg.hidden_dim;
    const std::size_t ff = 4 * d;

    w.tok_emb_ = init_weight(rng, {cfg.vocab_size, d}, 0.02);
    w.pos_emb_ = init_weight(rng, {cfg.max_seq_len, d}, 0.02);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        Layer layer;
        layer.ln1_gamma = Tensor::full({d}, 1.0, true);
        layer.ln1_beta = Tensor::zeros({d}, true);
        layer.wq = init_weight(rng, {d, d}, 0.02);
        layer.bq = Tensor::zeros({d}, true);
        layer.wk = init_weight(rng, {d, d}, 0.02);
        layer.bk = Tensor::zeros({d}, true);
        layer.wv = init_weight(rng, {d, d}, 0.02);
        layer.bv = Tensor::zeros({d}, true);
        layer.wo = init_weight(rng, {d, d}, 0.02);
        layer.bo = Tensor::zeros({d}, true);
        layer.ln2_gamma = Tensor::full({d}, 1.0, true);
        layer.ln2_beta = Tensor::zeros({d}, true);
        layer.w_ff1 = init_weight(rng, {d, ff}, 0.02);
        layer.b_ff1 = Tensor::zeros({ff}, true);
        layer.w_ff2 = init_weight(rng, {ff, d}, 0.02);
        layer.b_ff2 = Tensor::zeros({d}, true);
        w.layers_.push_back(std::move(layer));
    }
    w.lnf_gamma_ = Tensor::full({d}, 1.0, true);
    w.lnf_beta_ = Tensor::zeros({d}, true);
    return w;
}

std::vector<std::pair<std::string, Tensor>> FrozenLMWeights::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("tok_emb", tok_emb_);
    out.emplace_back("pos_emb", pos_emb_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        const Layer& ly = layers_[l];
        out.emplace_back(p + "ln1_gamma", ly.ln1_gamma);
        out.emplace_back(p + "ln1_beta", ly.ln1_beta);
        out.emplace_back(p + "wq", ly.wq);
        out.emplace_back(p + "bq", ly.bq);
        out.emplace_back(p + "wk", ly.wk);
        out.emplace_back(p + "bk", ly.bk);
        out.emplace_back(p + "wv", ly.wv);
        out.emplace_back(p + "bv", ly.bv);
        out.emplace_back(p + "wo", ly.wo);
        out.emplace_back(p + "bo", ly.bo);
        out.emplace_back(p + "ln2_gamma", ly.ln2_gamma);
        out.emplace_back(p + "ln2_beta", ly.ln2_beta);
        out.emplace_back(p + "w_ff1", ly.w_ff1);
        out.emplace_back(p + "b_ff1", ly.b_ff1);
        out.emplace_back(p + "w_ff2", ly.w_ff2);
        out.emplace_back(p + "b_ff2", ly.b_ff2);
    }
    out.emplace_back("lnf_gamma", lnf_gamma_);
    out.emplace_back("lnf_beta", lnf_beta_);
    return out;
}

std::vector<Tensor> FrozenLMWeights::params() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
}

std::string FrozenLMWeights::compute_digest() const {
    Sha256 h;
    for (const auto& [name, t] : named_params()) {
        h.update(name);
        h.update_u64(t.shape().size());
        for (std::size_t d : t.shape()) h.update_u64(d);
        h.update_doubles(t.values().data(), t.numel());
    }
    return to_hex(h.finish());
}

void FrozenLMWeights::freeze() {
    for (auto& [name, t] : named_params()) {
        Tensor mut = t;
        mut.zero_grad();
        mut.set_requires_grad(false);
    }
    digest_ = compute_digest();
    frozen_ = true;
}

const std::string& FrozenLMWeights::digest() const {
    if (!frozen_) throw ContractError("lm digest: weights are not frozen yet");
    return digest_;
}

void FrozenLMWeights::verify_frozen() const {
    if (!frozen_) throw ContractError("verify_frozen: weights are not frozen");
    if (compute_digest() != digest_)
        throw ContractError("freeze violation: frozen weights changed since freeze()");
}

Tensor FrozenLMWeights::embed(const TokenSequence& tokens) const {
    return gather_rows(tok_emb_, tokens);
}

Tensor FrozenLMWeights::input_states(const TokenSequence& tokens) const {
    if (tokens.empty()) throw ShapeError("input_states: empty token sequence");
    if (tokens.size() > cfg_.max_seq_len)
        throw ShapeError("input_states: sequence length " + std::to_string(tokens.size()) +
                         " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
    return add(embed(tokens), slice_rows(pos_emb_, 0, tokens.size()));
}

Tensor FrozenLMWeights::forward(const Tensor& h0, bool causal) const {
    if (h0.shape().size() != 2 || h0.shape()[1] != cfg_.hidden_dim)
        throw ShapeError("forward: expected [L x " + std::to_string(cfg_.hidden_dim) + "], got " +
                         shape_str(h0.shape()));
    const std::size_t L = h0.shape()[0];
    if (L > cfg_.max_seq_len)
        throw ShapeError("forward: length " + std::to_string(L) + " exceeds max_seq_len " +
                         std::to_string(cfg_.max_seq_len));
    const std::size_t d = cfg_.hidden_dim;
    const std::size_t dk = d / cfg_.n_heads;
    const double att_scale = 1.0 / std::sqrt(double(dk));

    Tensor h = h0;
    for (const Layer& ly : layers_) {
        Tensor x = layer_norm(h, ly.ln1_gamma, ly.ln1_beta, cfg_.layer_norm_eps);
        Tensor q = add_bias(matmul(x, ly.wq), ly.bq);
        Tensor k = add_bias(matmul(x, ly.wk), ly.bk);
        Tensor v = add_bias(matmul(x, ly.wv), ly.bv);

        std::vector<Tensor> heads;
        heads.reserve(cfg_.n_heads);
        for (std::size_t hd = 0; hd < cfg_.n_heads; ++hd) {
            Tensor qh = slice_cols(q, hd * dk, dk);
            Tensor kh = slice_cols(k, hd * dk, dk);
            Tensor vh = slice_cols(v, hd * dk, dk);
            Tensor scores = scale(matmul(qh, transpose(kh)), att_scale);
            Tensor probs = causal ? causal_softmax(scores) : softmax_rows(scores);
            heads.push_back(matmul(probs, vh));
        }
        Tensor attn = add_bias(matmul(concat_cols(heads), ly.wo), ly.bo);
        h = add(h, attn);

        Tensor y = layer_norm(h, ly.ln2_gamma, ly.ln2_beta, cfg_.layer_norm_eps);
        Tensor f = relu(add_bias(matmul(y, ly.w_ff1), ly.b_ff1));
        f = add_bias(matmul(f, ly.w_ff2), ly.b_ff2);
        h = add(h, f);
    }
    Tensor hf = layer_norm(h, lnf_gamma_, lnf_beta_, cfg_.layer_norm_eps);
    return matmul(hf, transpose(tok_emb_)); // tied output projection
}

void FrozenLMWeights::save(const std::string& path) const {
    Checkpoint ckpt;
    ckpt.header = {
        {"kind", "lm"},
        {"vocab_size", cfg_.vocab_size},
        {"hidden_dim", cfg_.hidden_dim},
        {"n_layers", cfg_.n_layers},
        {"n_heads", cfg_.n_heads},
        {"max_seq_len", cfg_.max_seq_len},
        {"layer_norm_eps", cfg_.layer_norm_eps},
        {"seed", cfg_.seed},
        {"frozen", frozen_},
    };
    if (frozen_) ckpt.header["digest"] = digest_;
    ckpt.blocks = named_params();
    save_checkpoint(path, ckpt);
}

FrozenLMWeights FrozenLMWeights::load(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.header.value("kind", "") != "lm")
        throw DataError(path + ": not an lm checkpoint (kind=" +
                        ckpt.header.value("kind", "?") + ")");
    LMConfig cfg;
    cfg.vocab_size = ckpt.header.at("vocab_size").get<std::size_t>();
    cfg.hidden_dim = ckpt.header.at("hidden_dim").get<std::size_t>();
    cfg.n_layers = ckpt.header.at("n_layers").get<std::size_t>();
    cfg.n_heads = ckpt.header.at("n_heads").get<std::size_t>();
    cfg.max_seq_len = ckpt.header.at("max_seq_len").get<std::size_t>();
    cfg.layer_norm_eps = ckpt.header.at("layer_norm_eps").get<double>();
    cfg.seed = ckpt.header.at("seed").get<std::uint64_t>();

    FrozenLMWeights w = FrozenLMWeights::init(cfg);
    for (auto& [name, t] : w.named_params()) {
        const Tensor& loaded = ckpt.block(name);
        if (loaded.shape() != t.shape())
            throw DataError(path + ": block " + name + " has shape " + shape_str(loaded.shape()) +
                            ", expected " + shape_str(t.shape()));
        Tensor mut = t;
        mut.data() = loaded.values();
    }
    if (ckpt.header.value("frozen", false)) {
        w.freeze();
        const std::string want = ckpt.header.value("digest", "");
        if (!want.empty() && want != w.digest())
            throw DataError(path + ": stored digest does not match recomputed parameter digest");
    }
    return w;
}

FrozenLMWeights pretrain(const std::vector<TokenSequence>& corpus, const LMConfig& cfg,
                         const TrainConfig& train_cfg, PretrainReport* report) {
    if (corpus.empty()) throw DataError("pretrain: empty corpus");
    for (const TokenSequence& seq : corpus) {
        if (seq.size() < 2) throw DataError("pretrain: sequences need at least 2 tokens");
        if (seq.size() > cfg.max_seq_len)
            throw DataError("pretrain: sequence of length " + std::to_string(seq.size()) +
                            " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    }

    FrozenLMWeights w = FrozenLMWeights::init(cfg);
    AdamW opt(w.params());

    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> epoch_losses;
    for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(train_cfg.seed, epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + train_cfg.batch_size);
            std::vector<Tensor> seq_losses;
            seq_losses.reserve(end - start);
            for (std::size_t bi = start; bi < end; ++bi) {
                const TokenSequence& seq = corpus[order[bi]];
                Tensor logits = w.forward(w.input_states(seq));
                std::vector<Tensor> terms;
                terms.reserve(seq.size() - 1);
                for (std::size_t t = 0; t + 1 < seq.size(); ++t)
                    terms.push_back(softmax_cross_entropy(row(logits, t), std::size_t(seq[t + 1])));
                seq_losses.push_back(mean_scalars(terms));
            }
            Tensor batch_loss = mean_scalars(seq_losses);
            loss_sum += batch_loss.item() * double(end - start);
            loss_count += end - start;
            backward(batch_loss);
            opt.step(train_cfg);
        }
        epoch_losses.push_back(loss_sum / double(loss_count));
    }

    w.freeze();
    if (report) {
        report->epoch_losses = epoch_losses;
        report->seed = train_cfg.seed;
        report->n_sequences = corpus.size();
    }
    return w;
}

TokenSequence sample_generate(const FrozenLMWeights& lm, const TokenSequence& prompt,
                              const std::optional<Tensor>& prefix, double temperature,
                              std::size_t max_new, std::uint64_t seed, int stop_id) {
    if (prompt.empty()) throw ShapeError("sample_generate: prompt must be nonempty");
    if (temperature < 0.0) throw ShapeError("sample_generate: temperature must be >= 0");

    NoGradGuard no_grad;
    Rng rng(seed);
    const std::size_t V = lm.config().vocab_size;
    const std::size_t budget = lm.config().max_seq_len - (prefix ? 1 : 0);

    TokenSequence tokens = prompt;
    TokenSequence generated;
    while (generated.size() < max_new && tokens.size() < budget) {
        Tensor h0;
        if (prefix) {
            Tensor rows = concat_rows({*prefix, lm.embed(tokens)});
            h0 = add(rows, slice_rows(lm.position_embedding(), 0, tokens.size() + 1));
        } else {
            h0 = lm.input_states(tokens);
        }
        Tensor logits = lm.forward(h0);
        const std::size_t last = logits.rows() - 1;

        int next = 0;
        if (temperature == 0.0) {
            double best = logits.at(last, 0);
            for (std::size_t j = 1; j < V; ++j) {
                if (logits.at(last, j) > best) { // strict: lowest index wins ties
                    best = logits.at(last, j);
                    next = int(j);
                }
            }
        } else {
            std::vector<double> p(V);
            double mx = -1e300;
            for (std::size_t j = 0; j < V; ++j) mx = std::max(mx, logits.at(last, j));
            double z = 0.0;
            for (std::size_t j = 0; j < V; ++j) {
                p[j] = std::exp((logits.at(last, j) - mx) / temperature);
                z += p[j];
            }
            const double u = rng.uniform() * z;
            double cum = 0.0;
            next = int(V) - 1;
            for (std::size_t j = 0; j < V; ++j) {
                cum += p[j];
                if (u < cum) {
                    next = int(j);
                    break;
                }
            }
        }
        generated.push_back(next);
        if (next == stop_id) break;
        tokens.push_back(next);
    }
    return generated;
}

} // namespace e2p
