#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "s4c/model.hpp"
#include "s4c/rng.hpp"
#include "s4c/tensor.hpp"
#include "s4c/tree.hpp"

namespace s4c {

struct DraftConfig {
    int n_heads = 3;
    int tokens_per_head = 2;     // vertical tokens emitted per head per branch
    int head1_branches = 2;      // depth-1 candidates that grow full chains
    int horizontal_top_k = 3;    // candidates considered per position (1 chain + k-1 alts)
    int draft_layers_per_head = 1;

    int max_depth() const { return n_heads * tokens_per_head; }
    // worst-case tree size: depth 1 holds horizontal_top_k candidates, every
    // deeper level holds head1_branches chains x horizontal_top_k candidates
    int max_nodes() const {
        return horizontal_top_k + (max_depth() - 1) * head1_branches * horizontal_top_k;
    }
    void validate() const;
};

// One head: fusion of concat(embedding, feature) followed by decoder layers applied
// position-wise (rows never attend each other or any history).
struct DraftHeadWeights {
    Matrix fuse;  // (2*hidden x hidden)
    std::vector<LayerWeights> layers;
};

struct DraftWeights {
    std::vector<DraftHeadWeights> heads;

    uint64_t checksum_all() const;
    size_t param_count() const;
    size_t byte_size_f32() const { return param_count() * sizeof(float); }
};

DraftWeights init_draft_weights(const ModelSpec& spec, const DraftConfig& cfg, uint64_t seed);

// h = concat(e, f) * fuse
std::vector<double> fuse(const DraftHeadWeights& head, std::span<const double> embedding,
                         std::span<const double> feature);

// Position-wise decoder stack of one head over a batch of fused rows. Rows are
// independent: permuting inputs permutes outputs identically.
Matrix draft_head_forward(const DraftHeadWeights& head, const Matrix& h_rows);

struct DraftCandidate {
    int token;
    double prob;
};

// Shared LM head + temperature softmax + top-k selection over a draft feature.
std::vector<DraftCandidate> draft_next(const Model& target, std::span<const double> feature,
                                       double temperature, int k);

struct DraftTelemetry {
    long long forward_calls = 0;   // head advances performed (per row, per micro-step)
    size_t static_bytes = 0;       // serialized weight footprint
    size_t round_bytes_peak = 0;   // largest transient tree + feature footprint
};

class Drafter {
public:
    virtual ~Drafter() = default;
    // f0: feature of the last token that went through the target (may be empty or
    // zero for 1-token prompts / tabular). t0: last committed token.
    virtual DraftTree run_round(std::span<const double> f0, int t0, const DraftConfig& cfg,
                                double temperature, Rng& rng) = 0;
    virtual const DraftTelemetry& telemetry() const { return telemetry_; }

protected:
    DraftTelemetry telemetry_;
};

// Multi-head autoregressive drafter. Head 1 fuses (f0, e(t0)) into the first draft
// feature; its top candidates seed head1_branches vertical chains; each head then
// advances its chains tokens_per_head steps, handing its last emitted token's
// embedding to the next head. Every vertical node gets horizontal_top_k - 1
// terminal sibling alternatives. Zero-probability candidates are never drafted,
// so at temperature 0 the tree degenerates to the argmax chain.
class S4CDrafter final : public Drafter {
public:
    S4CDrafter(const Model& target, DraftWeights weights);
    DraftTree run_round(std::span<const double> f0, int t0, const DraftConfig& cfg,
                        double temperature, Rng& rng) override;
    const DraftWeights& weights() const { return w_; }
    DraftWeights& mutable_weights() { return w_; }

private:
    const Model& target_;
    DraftWeights w_;
};

// Conditional-table drafter for the tabular backend; same topology, candidates
// drawn from the draft table rows.
class TabularDrafter final : public Drafter {
public:
    explicit TabularDrafter(const TabularModel& table);
    DraftTree run_round(std::span<const double> f0, int t0, const DraftConfig& cfg,
                        double temperature, Rng& rng) override;
    const TabularModel& table() const { return table_; }

private:
    const TabularModel& table_;
};

} // namespace s4c
