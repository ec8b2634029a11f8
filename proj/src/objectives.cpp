#include "e2p/objectives.hpp"

#include <algorithm>

#include "e2p/errors.hpp"

namespace e2p {

namespace {

constexpr double kProbFloor = 1e-12;

std::size_t target_after_last_model_marker(const TokenSequence& tokens) {
    std::size_t begin = 0;
    bool found = false;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == Tokenizer::kModel) {
            begin = i + 1;
            found = true;
        }
    }
    if (!found) return 0;
    if (begin < tokens.size() && tokens[begin] == '\n') ++begin; // template newline
    return begin;
}

} // namespace

MaskedSequence mask_lm_record(const LMRecord& record, const Tokenizer& tok) {
    MaskedSequence seq;
    seq.tokens = tok.tokenize(record.text);
    if (seq.tokens.size() < 2)
        throw DataError("lm record text tokenizes to fewer than 2 tokens");
    seq.target_begin = target_after_last_model_marker(seq.tokens);
    return seq;
}

MaskedSequence mask_pref_record(const PrefRecord& record, const Tokenizer& tok) {
    MaskedSequence seq;
    seq.tokens = tok.tokenize(record.prompt);
    seq.target_begin = seq.tokens.size();
    const TokenSequence completion = tok.tokenize(record.completion);
    if (completion.empty()) throw DataError("pref record has empty completion");
    seq.tokens.insert(seq.tokens.end(), completion.begin(), completion.end());
    return seq;
}

MaskedSequence fit_sequence(MaskedSequence seq, std::size_t max_seq_len, bool with_prefix) {
    const std::size_t budget = max_seq_len - (with_prefix ? 1 : 0);
    if (seq.tokens.size() <= budget) return seq;
    const std::size_t excess = seq.tokens.size() - budget;
    if (excess > seq.target_begin)
        throw DataError("sequence target region alone exceeds max_seq_len");
    seq.tokens.erase(seq.tokens.begin(), seq.tokens.begin() + std::ptrdiff_t(excess));
    seq.target_begin -= excess;
    return seq;
}

std::vector<Tensor> nll_terms(const FrozenLMWeights& lm, const std::optional<Tensor>& prefix,
                              const MaskedSequence& seq) {
    const MaskedSequence fitted = fit_sequence(seq, lm.config().max_seq_len, prefix.has_value());
    const TokenSequence& toks = fitted.tokens;
    // without a prefix there is no row predicting token 0
    const std::size_t begin = std::max<std::size_t>(fitted.target_begin, prefix ? 0 : 1);
    if (begin >= toks.size())
        throw DataError("no target tokens left after masking and truncation");

    Tensor logits;
    if (prefix) {
        logits = lm.forward(inject(*prefix, toks, lm));
    } else {
        logits = lm.forward(lm.input_states(toks));
    }
    // with a prefix, row t predicts token t; without, row t predicts token t+1
    const std::size_t row_shift = prefix ? 0 : 1;
    std::vector<Tensor> terms;
    terms.reserve(toks.size() - begin);
    for (std::size_t t = begin; t < toks.size(); ++t)
        terms.push_back(softmax_cross_entropy(row(logits, t - row_shift), std::size_t(toks[t])));
    return terms;
}

Tensor lm_loss(const ProjectionParams& phi, const FrozenLMWeights& lm, const LMRecord& record,
               const Tokenizer& tok) {
    Tensor prefix = project(phi, record.uservector);
    return mean_scalars(nll_terms(lm, prefix, mask_lm_record(record, tok)));
}

Tensor kto_objective(const std::vector<std::pair<Tensor, int>>& prob_label_pairs, double alpha) {
    if (prob_label_pairs.empty()) throw DataError("kto objective: empty batch");
    if (alpha < 0.0) throw ConfigError("kto objective: alpha must be >= 0");
    std::vector<Tensor> terms;
    terms.reserve(prob_label_pairs.size());
    for (const auto& [p, label] : prob_label_pairs) {
        if (label != 0 && label != 1)
            throw DataError("kto objective: label must be 0 or 1, got " + std::to_string(label));
        Tensor pc = clamp(p, kProbFloor, 1.0 - kProbFloor);
        if (label == 1) {
            terms.push_back(log_op(pc));
        } else if (alpha == 0.0) {
            // negatives vanish exactly: no graph, no gradient
            terms.push_back(Tensor::scalar(0.0));
        } else {
            terms.push_back(scale(log_op(affine(pc, -1.0, 1.0)), alpha));
        }
    }
    return scale(mean_scalars(terms), -1.0);
}

Tensor kto_loss(const ProjectionParams& phi, const FrozenLMWeights& lm,
                const std::vector<PrefRecord>& batch, double alpha, const Tokenizer& tok) {
    if (batch.empty()) throw DataError("kto loss: empty batch");
    std::vector<std::pair<Tensor, int>> pairs;
    pairs.reserve(batch.size());
    for (const PrefRecord& rec : batch) {
        Tensor prefix = project(phi, rec.uservector);
        Tensor mean_nll = mean_scalars(nll_terms(lm, prefix, mask_pref_record(rec, tok)));
        // geometric-mean sequence probability
        pairs.emplace_back(exp_op(scale(mean_nll, -1.0)), rec.label);
    }
    return kto_objective(pairs, alpha);
}

} // namespace e2p
