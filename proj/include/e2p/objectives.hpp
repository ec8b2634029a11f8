#pragma once

#include <optional>
#include <vector>

#include "e2p/projection.hpp"
#include "e2p/records.hpp"
#include "e2p/tensor.hpp"
#include "e2p/tokenizer.hpp"
#include "e2p/transformer.hpp"

namespace e2p {

// A tokenized example with its loss region. Only tokens at positions
// >= target_begin count toward the objective; everything earlier is context
// (persona, chat scaffolding, prompt).
struct MaskedSequence {
    TokenSequence tokens;
    std::size_t target_begin = 0;
};

// Splits at the last <|model|> turn (skipping the newline that follows the
// marker). Texts without a marker are treated as all-target.
MaskedSequence mask_lm_record(const LMRecord& record, const Tokenizer& tok);

MaskedSequence mask_pref_record(const PrefRecord& record, const Tokenizer& tok);

// Drops tokens from the left of the context region until the sequence (plus
// prefix slot, when present) fits max_seq_len. The target is never cut.
MaskedSequence fit_sequence(MaskedSequence seq, std::size_t max_seq_len, bool with_prefix);

// Per-target-token cross-entropy terms, prefix injected when given.
// With a prefix, logits row t predicts token t; without one, predictions
// start at token 1, so target_begin is raised to at least 1.
std::vector<Tensor> nll_terms(const FrozenLMWeights& lm, const std::optional<Tensor>& prefix,
                              const MaskedSequence& seq);

// Mean negative log-likelihood of the target region given [p; x].
Tensor lm_loss(const ProjectionParams& phi, const FrozenLMWeights& lm, const LMRecord& record,
               const Tokenizer& tok);

// Preference objective over sequence-level probabilities: each example
// contributes y*log(p) + alpha*(1-y)*log(1-p) where p is the
// length-normalized (geometric mean) probability of the completion. The
// returned loss is the negated batch mean. Probabilities are clamped to
// [1e-12, 1-1e-12] before the logs.
Tensor kto_loss(const ProjectionParams& phi, const FrozenLMWeights& lm,
                const std::vector<PrefRecord>& batch, double alpha, const Tokenizer& tok);

// Term assembly behind kto_loss, exposed so the arithmetic can be checked
// against hand-set probabilities.
Tensor kto_objective(const std::vector<std::pair<Tensor, int>>& prob_label_pairs, double alpha);

} // namespace e2p
