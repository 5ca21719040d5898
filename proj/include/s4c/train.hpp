#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "s4c/draft.hpp"
#include "s4c/model.hpp"
#include "s4c/tensor.hpp"

namespace s4c {

// Probabilities are floored at this value before any log.
constexpr double kProbFloor = 1e-12;

struct LossBreakdown {
    double lm = 0.0;
    double teacher = 0.0;
    double smooth = 0.0;
    double total = 0.0;
    double w1 = 0.1;
    double w2 = 1.0;
    double w3 = 0.1;
};

// total = w1*lm + w2*teacher + w3*smooth
LossBreakdown total_loss(double lm, double teacher, double smooth, double w1 = 0.1,
                         double w2 = 1.0, double w3 = 0.1);

// Mean over rows of -log pred[label].
double loss_lm(const Matrix& pred_rows, std::span<const int> labels);
// Mean over rows of -sum target * log(pred); target rows act as soft labels.
double loss_teacher(const Matrix& pred_rows, const Matrix& target_rows);
// Mean over every coordinate of 0.5*d^2 (|d| < 1) else |d| - 0.5, d = pred - target.
double loss_smooth(const Matrix& pred_feat, const Matrix& target_feat);

struct TrainConfig {
    int epochs = 5;
    double lr = 1e-2;
    double momentum = 0.9;
    double w1 = 0.1;
    double w2 = 1.0;
    double w3 = 0.1;
    int window = 128;
    uint64_t seed = 0;

    void validate() const;
};

// Tri-component loss over one contiguous token window with the teacher signals
// (features, soft distributions, labels) taken from the frozen target model.
// Every head trains on every eligible position. When grads is non-null the
// analytic gradient of .total accumulates into it (same shapes as the weights;
// zero it first). The target model itself receives no gradient.
LossBreakdown draft_window_loss(const Model& target, const DraftWeights& w,
                                std::span<const int> window, const TrainConfig& cfg,
                                DraftWeights* grads);

// Plain next-token cross-entropy of the target transformer over one window,
// with the full backward pass when grads is non-null.
double target_window_loss(const ModelSpec& spec, const Weights& w, std::span<const int> window,
                          Weights* grads);

// One-step draft prediction under teacher inputs: fuse the embedding of `token`
// with `feature`, run the head, read out through the frozen target norm + LM
// head at temperature 1. Matches the generation-time advance bit for bit.
ProbDist draft_teacher_predict(const Model& target, const DraftHeadWeights& head, int token,
                               std::span<const double> feature);

// Mutable views over every trainable tensor / coordinate, in one fixed order
// (shared by gradients, momentum buffers and the finite-difference checker).
std::vector<std::span<double>> tensor_views(Weights& w);
std::vector<std::span<double>> tensor_views(DraftWeights& w);
std::vector<double*> param_view(Weights& w);
std::vector<double*> param_view(DraftWeights& w);
Weights zero_like(const Weights& w);
DraftWeights zero_like(const DraftWeights& w);

// Central finite differences on a random subset of at least min(n_coords, #params)
// coordinates. Returns max |analytic - numeric| / max(1e-8, |numeric|).
// epsilon must lie in [1e-6, 1e-3].
double grad_check(const std::function<double()>& loss, std::span<double* const> params,
                  std::span<const double> analytic, double epsilon, size_t n_coords,
                  uint64_t seed);

// SGD with momentum over full windows; emits one JSON line per epoch to `log`
// (epoch 0 is a no-update evaluation pass). Throws TrainError on divergence.
DraftWeights train_draft(std::span<const int> corpus, const Model& target, DraftWeights init,
                         const TrainConfig& cfg, std::ostream* log);

Weights train_target(std::span<const int> corpus, const ModelSpec& spec, Weights init,
                     const TrainConfig& cfg, std::ostream* log);

// Fraction of (head, position) pairs where the draft's greedy prediction equals
// the target's own greedy next token, under teacher-forced inputs.
double greedy_agreement(const Model& target, const DraftWeights& w,
                        std::span<const int> held_out, int window);

} // namespace s4c
