#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "s4c/draft.hpp"
#include "s4c/model.hpp"
#include "s4c/rng.hpp"
#include "s4c/stats.hpp"
#include "s4c/tensor.hpp"
#include "s4c/tree.hpp"

namespace s4c {

// Speculative acceptance test: true iff u < min(1, p_target / p_draft).
// p_draft must be positive (a zero-probability token cannot be drafted).
bool accept_token(double p_target, double p_draft, double u);

// Correction distribution normalize(max(0, target - draft)). If the residual has
// no mass (target == draft), returns the target itself.
ProbDist residual_distribution(const ProbDist& target, const ProbDist& draft);

// Ablation variant: normalize(elementwise max(draft, target)). Not lossless; kept
// behind the --eq12-correction flag for comparison runs.
ProbDist eq12_correction_distribution(const ProbDist& target, const ProbDist& draft);

// Closed-form distribution of one draft-then-verify step with a single candidate
// sampled from `draft`: P(x) = min(draft, target)(x) + reject_mass * residual(x).
// Integrates the acceptance uniform analytically; equals `target` exactly when the
// standard residual is used.
ProbDist exact_output_distribution(const ProbDist& target, const ProbDist& draft,
                                   bool eq12 = false);

struct VerifyOptions {
    double temperature = 0.0;
    bool eq12_correction = false;
};

struct VerifyOutcome {
    std::vector<int> accepted_nodes;   // tree node indices along the accepted path
    std::vector<int> accepted_tokens;
    int correction_token = -1;         // resampled correction or bonus token
    bool bonus = false;                // correction came from a fully accepted path
    std::vector<double> next_feature;  // frontier feature for the next round
    int next_feature_row = 0;          // row in target_out the feature came from
    int nodes_tested = 0;
};

// Walks the tree against the target rows. target_out row 0 is the root context
// (t0); row i+1 belongs to tree node i. Acceptance at each position composes the
// ratio test for the sampled candidate (full draft-distribution residual on
// rejection) with without-replacement tests for deterministic alternates (point
// mass removal on rejection); the closing correction samples the remaining
// residual. Greedy mode (temperature 0) accepts exactly the target argmax chain
// and emits the argmax as correction/bonus. Consumes rng only at temperature > 0.
VerifyOutcome verify_round(const DraftTree& tree, const ForwardResult& target_out,
                           Rng& rng, const VerifyOptions& opt);

struct GenConfig {
    int max_new = 64;
    double temperature = 0.0;
    DraftConfig draft;
    uint64_t seed = 0;
    bool eq12_correction = false;
    int eot_token = -1;  // < 0 disables end-of-text stopping
};

// Speculative generation: rounds of draft -> flatten -> one masked target pass ->
// verify, with the cache compacted to prefix + accepted path after each round.
std::pair<std::vector<int>, GenStats> generate(TargetBackend& target, Drafter& drafter,
                                               std::span<const int> prompt,
                                               const GenConfig& cfg);

// Plain autoregressive decode with the same sampling semantics; reference for
// greedy equivalence and benchmark baselines.
std::pair<std::vector<int>, GenStats> baseline_generate(TargetBackend& target,
                                                        std::span<const int> prompt,
                                                        const GenConfig& cfg);

} // namespace s4c
