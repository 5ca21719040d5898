#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "s4c/tensor.hpp"
#include "s4c/tree.hpp"

namespace s4c {

constexpr double kRmsEps = 1e-5;

enum class Backend : uint8_t { transformer, tabular };

struct ModelSpec {
    int vocab_size = 257;   // 256 bytes + end-of-text id 0
    int hidden_dim = 64;
    int n_layers = 2;
    int n_heads = 4;
    int context_limit = 512;
    Backend backend = Backend::transformer;

    int head_dim() const { return hidden_dim / n_heads; }
    void validate() const;
};

// Pre-norm decoder block, no biases.
struct LayerWeights {
    std::vector<double> attn_gain;  // (hidden)
    Matrix wq, wk, wv, wo;          // (hidden x hidden)
    std::vector<double> mlp_gain;   // (hidden)
    Matrix w1;                      // (hidden x 4*hidden)
    Matrix w2;                      // (4*hidden x hidden)
};

struct Weights {
    Matrix tok_emb;                  // (vocab x hidden)
    Matrix pos_emb;                  // (context x hidden)
    std::vector<LayerWeights> layers;
    std::vector<double> final_gain;  // (hidden)
    Matrix lm_head;                  // (hidden x vocab)

    uint64_t checksum_all() const;
    void check_finite() const;
};

Weights init_weights(const ModelSpec& spec, uint64_t seed);

// Per-layer K/V rows for every committed position.
struct KVCache {
    std::vector<Matrix> k, v;  // n_layers entries, each (len x hidden), len shared
    size_t len = 0;

    void init(int n_layers, int hidden, int capacity);
    void truncate(size_t new_len);
    // Compact to rows [0, prefix) plus the listed absolute rows, preserving order.
    void keep(size_t prefix, std::span<const size_t> extra_rows);
    size_t byte_size() const;
};

// features: hidden state after the final norm, one row per fed token.
// logits:   features x lm_head, row for row.
struct ForwardResult {
    Matrix features;
    Matrix logits;
};

// Decoder-only transformer. forward() appends the fed tokens to the cache.
// mask == nullptr means plain causal attention among the new tokens; otherwise
// mask.at(i, j) governs visibility of new token j to new token i (cached positions
// are always visible). positions empty means cache_len + i for token i.
class Model {
public:
    Model(ModelSpec spec, Weights w);

    const ModelSpec& spec() const { return spec_; }
    const Weights& weights() const { return w_; }
    Weights& mutable_weights() { return w_; }

    ForwardResult forward(std::span<const int> tokens, KVCache& cache,
                          const TreeMask* mask = nullptr,
                          std::span<const int> positions = {}) const;

    std::vector<double> embed(int token) const;
    std::vector<double> lm_logits(std::span<const double> feature) const;

private:
    ModelSpec spec_;
    Weights w_;
};

// Order-1 conditional table: row t is the next-token distribution after token t.
// Serves as the exactly-enumerable oracle backend.
struct TabularModel {
    int vocab = 0;
    std::vector<ProbDist> rows;

    const ProbDist& next_dist(int context_token) const;
    void validate() const;
    size_t byte_size() const { return static_cast<size_t>(vocab) * vocab * sizeof(double); }
};

TabularModel random_table(int vocab, uint64_t seed, double concentration = 1.0);

// Uniform generation-time interface over the two backends. forward() rows carry
// next-token scores for each fed token; softmax at the session temperature turns
// them into distributions (tabular rows store ln p so the same path serves both).
class TargetBackend {
public:
    virtual ~TargetBackend() = default;
    virtual int vocab_size() const = 0;
    virtual int context_limit() const = 0;
    virtual size_t cache_len() const = 0;
    virtual bool has_features() const = 0;
    virtual ForwardResult forward(std::span<const int> tokens, const TreeMask* mask,
                                  std::span<const int> positions) = 0;
    virtual void keep(size_t prefix, std::span<const size_t> extra_rows) = 0;
    virtual void reset() = 0;
    virtual size_t cache_byte_size() const = 0;
};

class TransformerBackend final : public TargetBackend {
public:
    explicit TransformerBackend(const Model& model);
    int vocab_size() const override { return model_.spec().vocab_size; }
    int context_limit() const override { return model_.spec().context_limit; }
    size_t cache_len() const override { return cache_.len; }
    bool has_features() const override { return true; }
    ForwardResult forward(std::span<const int> tokens, const TreeMask* mask,
                          std::span<const int> positions) override;
    void keep(size_t prefix, std::span<const size_t> extra_rows) override;
    void reset() override;
    size_t cache_byte_size() const override { return cache_.byte_size(); }
    const Model& model() const { return model_; }

private:
    const Model& model_;
    KVCache cache_;
};

class TabularBackend final : public TargetBackend {
public:
    explicit TabularBackend(const TabularModel& table) : table_(table) { table_.validate(); }
    int vocab_size() const override { return table_.vocab; }
    int context_limit() const override { return 1 << 20; }
    size_t cache_len() const override { return len_; }
    bool has_features() const override { return false; }
    ForwardResult forward(std::span<const int> tokens, const TreeMask* mask,
                          std::span<const int> positions) override;
    void keep(size_t prefix, std::span<const size_t> extra_rows) override;
    void reset() override { len_ = 0; }
    size_t cache_byte_size() const override { return 0; }
    const TabularModel& table() const { return table_; }

private:
    const TabularModel& table_;
    size_t len_ = 0;
};

} // namespace s4c
