#include "s4c/draft.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "s4c/errors.hpp"

namespace s4c {

void DraftConfig::validate() const {
    if (n_heads < 1 || tokens_per_head < 1 || draft_layers_per_head < 1)
        throw ArgError("draft config: counts must be positive");
    if (horizontal_top_k < 1) throw ArgError("draft config: horizontal_top_k must be >= 1");
    if (head1_branches < 1 || head1_branches > horizontal_top_k)
        throw ArgError("draft config: head1_branches must be in [1, horizontal_top_k]");
}

uint64_t DraftWeights::checksum_all() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& hd : heads) {
        h = h * 1099511628211ull ^ checksum(hd.fuse);
        for (const auto& l : hd.layers) {
            h = h * 1099511628211ull ^ checksum(std::span<const double>(l.attn_gain));
            h = h * 1099511628211ull ^ checksum(l.wq) ^ checksum(l.wk);
            h = h * 1099511628211ull ^ checksum(l.wv) ^ checksum(l.wo);
            h = h * 1099511628211ull ^ checksum(std::span<const double>(l.mlp_gain));
            h = h * 1099511628211ull ^ checksum(l.w1) ^ checksum(l.w2);
        }
    }
    return h;
}

size_t DraftWeights::param_count() const {
    size_t n = 0;
    for (const auto& hd : heads) {
        n += hd.fuse.data.size();
        for (const auto& l : hd.layers) {
            n += l.attn_gain.size() + l.mlp_gain.size();
            n += l.wq.data.size() + l.wk.data.size() + l.wv.data.size() + l.wo.data.size();
            n += l.w1.data.size() + l.w2.data.size();
        }
    }
    return n;
}

DraftWeights init_draft_weights(const ModelSpec& spec, const DraftConfig& cfg, uint64_t seed) {
    cfg.validate();
    const size_t h = static_cast<size_t>(spec.hidden_dim);
    Rng rng(seed, /*stream=*/0xd4afull);
    const double std0 = 0.08;
    auto gauss = [&](size_t r, size_t c) {
        Matrix m(r, c);
        for (double& v : m.data) v = rng.gaussian(0.0, std0);
        return m;
    };
    DraftWeights w;
    w.heads.resize(static_cast<size_t>(cfg.n_heads));
    for (auto& hd : w.heads) {
        hd.fuse = gauss(2 * h, h);
        hd.layers.resize(static_cast<size_t>(cfg.draft_layers_per_head));
        for (auto& l : hd.layers) {
            l.attn_gain.assign(h, 1.0);
            l.wq = gauss(h, h);
            l.wk = gauss(h, h);
            l.wv = gauss(h, h);
            l.wo = gauss(h, h);
            l.mlp_gain.assign(h, 1.0);
            l.w1 = gauss(h, 4 * h);
            l.w2 = gauss(4 * h, h);
        }
    }
    return w;
}

std::vector<double> fuse(const DraftHeadWeights& head, std::span<const double> embedding,
                         std::span<const double> feature) {
    if (embedding.size() != feature.size())
        throw ShapeError("fuse: embedding/feature length mismatch");
    if (head.fuse.rows != 2 * embedding.size())
        throw ShapeError("fuse: matrix rows != 2 * hidden");
    std::vector<double> cat(2 * embedding.size());
    std::memcpy(cat.data(), embedding.data(), embedding.size() * sizeof(double));
    std::memcpy(cat.data() + embedding.size(), feature.data(), feature.size() * sizeof(double));
    return vecmat(cat, head.fuse);
}

static double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

Matrix draft_head_forward(const DraftHeadWeights& head, const Matrix& h_rows) {
    // Single-position decoder blocks: self-attention over one token degenerates to
    // attention weight 1 on itself, so the attended value is just the normalized
    // row through Wv*Wo (Wq/Wk cannot influence the output). Rows stay independent.
    const size_t h = h_rows.cols;
    Matrix x = h_rows;
    for (const auto& L : head.layers) {
        if (L.wv.rows != h) throw ShapeError("draft head: layer width mismatch");
        for (size_t i = 0; i < x.rows; ++i) {
            auto a = rms_normalize(x.row(i), L.attn_gain, kRmsEps);
            auto attn = vecmat(vecmat(a, L.wv), L.wo);
            for (size_t d = 0; d < h; ++d) x.at(i, d) += attn[d];
            auto b = rms_normalize(x.row(i), L.mlp_gain, kRmsEps);
            auto mid = vecmat(b, L.w1);
            for (double& v : mid) v = gelu(v);
            auto mlp = vecmat(mid, L.w2);
            for (size_t d = 0; d < h; ++d) x.at(i, d) += mlp[d];
        }
    }
    return x;
}

std::vector<DraftCandidate> draft_next(const Model& target, std::span<const double> feature,
                                       double temperature, int k) {
    ProbDist q = softmax(target.lm_logits(feature), temperature);
    auto ranked = top_k(q, std::min<int>(k, static_cast<int>(q.size())));
    std::vector<DraftCandidate> out;
    for (auto& [tok, p] : ranked)
        if (p > 0.0) out.push_back({tok, p});
    return out;
}

// ---- shared tree assembly ---------------------------------------------------

namespace {

struct Picked {
    int token;
    double prob;
    bool sampled;
};

// One sampled (or argmax) primary candidate plus deterministic next-best
// alternates, zero-mass tokens excluded.
std::vector<Picked> pick_candidates(const ProbDist& q, double temperature, int k, Rng& rng) {
    std::vector<Picked> out;
    int primary;
    if (temperature == 0.0) {
        primary = argmax(q.span());
    } else {
        primary = rng.sample(q.span());
    }
    out.push_back({primary, q[static_cast<size_t>(primary)], true});
    if (k > 1) {
        auto ranked = top_k(q, static_cast<int>(q.size()));
        for (auto& [tok, p] : ranked) {
            if (static_cast<int>(out.size()) >= k) break;
            if (tok == primary || p <= 0.0) continue;
            out.push_back({tok, p, false});
        }
    }
    return out;
}

// Grows one vertical chain from a depth-1 branch root down to max_depth, adding
// leaf alternates beside every vertical node. advance(token, feature) supplies the
// next context (dist + feature).
template <typename AdvanceFn>
void grow_branch(DraftTree& tree, int branch_root, const DraftConfig& cfg, double temperature,
                 Rng& rng, AdvanceFn&& advance) {
    int prev = branch_root;
    for (int depth = 2; depth <= cfg.max_depth(); ++depth) {
        const TreeNode& pn = tree.nodes[static_cast<size_t>(prev)];
        DraftContext ctx = advance(pn.token, tree.contexts[static_cast<size_t>(pn.ctx)].feature,
                                   depth);
        tree.contexts.push_back(std::move(ctx));
        int ctx_id = static_cast<int>(tree.contexts.size()) - 1;
        auto cands = pick_candidates(tree.contexts.back().dist, temperature,
                                     cfg.horizontal_top_k, rng);
        int vertical = -1;
        for (size_t c = 0; c < cands.size(); ++c) {
            TreeNode n;
            n.token = cands[c].token;
            n.parent = prev;
            n.depth = depth;
            n.draft_prob = cands[c].prob;
            n.sampled = cands[c].sampled;
            n.kind = c == 0 ? NodeKind::vertical_top1 : NodeKind::horizontal_alt;
            n.ctx = ctx_id;
            tree.nodes.push_back(n);
            if (c == 0) vertical = static_cast<int>(tree.nodes.size()) - 1;
        }
        prev = vertical;
    }
}

size_t tree_bytes(const DraftTree& t) {
    size_t b = t.nodes.size() * sizeof(TreeNode);
    for (const auto& c : t.contexts)
        b += (c.dist.size() + c.feature.size()) * sizeof(double);
    return b;
}

} // namespace

// ---- S4C drafter ------------------------------------------------------------

S4CDrafter::S4CDrafter(const Model& target, DraftWeights weights)
    : target_(target), w_(std::move(weights)) {
    const size_t h = static_cast<size_t>(target_.spec().hidden_dim);
    for (const auto& hd : w_.heads)
        if (hd.fuse.rows != 2 * h || hd.fuse.cols != h)
            throw ShapeError("draft weights: fusion shape mismatch");
    telemetry_.static_bytes = w_.byte_size_f32();
}

DraftTree S4CDrafter::run_round(std::span<const double> f0, int t0, const DraftConfig& cfg,
                                double temperature, Rng& rng) {
    cfg.validate();
    if (static_cast<int>(w_.heads.size()) < cfg.n_heads)
        throw ArgError("draft: config requests more heads than weights provide");
    if (t0 < 0 || t0 >= target_.spec().vocab_size) throw ArgError("draft: t0 out of range");
    const size_t h = static_cast<size_t>(target_.spec().hidden_dim);
    std::vector<double> feat0(h, 0.0);
    if (!f0.empty()) {
        if (f0.size() != h) throw ShapeError("draft: f0 length mismatch");
        std::copy(f0.begin(), f0.end(), feat0.begin());
    }

    // Head for the advance that PRODUCES depth-d candidates.
    auto head_for = [&](int depth) -> const DraftHeadWeights& {
        return w_.heads[static_cast<size_t>((depth - 1) / cfg.tokens_per_head)];
    };
    auto advance = [&](int token, const std::vector<double>& feature,
                       int depth) -> DraftContext {
        const DraftHeadWeights& head = head_for(depth);
        Matrix hrow(1, h);
        auto fused = fuse(head, target_.embed(token), feature);
        std::memcpy(hrow.row(0).data(), fused.data(), h * sizeof(double));
        Matrix out = draft_head_forward(head, hrow);
        // shared frozen read-out: final norm + LM head live in target space
        auto f = rms_normalize(out.row(0), target_.weights().final_gain, kRmsEps);
        ++telemetry_.forward_calls;
        DraftContext ctx;
        ctx.dist = softmax(target_.lm_logits(f), temperature);
        ctx.feature = std::move(f);
        return ctx;
    };

    DraftTree tree;
    tree.root_token = t0;
    tree.contexts.push_back(advance(t0, feat0, 1));
    auto cands = pick_candidates(tree.contexts[0].dist, temperature, cfg.horizontal_top_k, rng);
    std::vector<int> branch_roots;
    for (size_t c = 0; c < cands.size(); ++c) {
        bool chains = static_cast<int>(c) < cfg.head1_branches;
        TreeNode n;
        n.token = cands[c].token;
        n.parent = -1;
        n.depth = 1;
        n.draft_prob = cands[c].prob;
        n.sampled = cands[c].sampled;
        n.kind = chains ? NodeKind::vertical_top1 : NodeKind::horizontal_alt;
        n.ctx = 0;
        tree.nodes.push_back(n);
        if (chains) branch_roots.push_back(static_cast<int>(tree.nodes.size()) - 1);
    }
    for (int r : branch_roots) grow_branch(tree, r, cfg, temperature, rng, advance);

    tree.validate();
    telemetry_.round_bytes_peak = std::max(telemetry_.round_bytes_peak, tree_bytes(tree));
    return tree;
}

// ---- tabular drafter --------------------------------------------------------

TabularDrafter::TabularDrafter(const TabularModel& table) : table_(table) {
    table_.validate();
    telemetry_.static_bytes = table_.byte_size();
}

DraftTree TabularDrafter::run_round(std::span<const double> f0, int t0, const DraftConfig& cfg,
                                    double temperature, Rng& rng) {
    (void)f0;
    cfg.validate();
    if (t0 < 0 || t0 >= table_.vocab) throw ArgError("draft: t0 out of range");

    auto advance = [&](int token, const std::vector<double>&, int) -> DraftContext {
        ++telemetry_.forward_calls;
        DraftContext ctx;
        ctx.dist = temper(table_.next_dist(token), temperature);
        return ctx;
    };

    DraftTree tree;
    tree.root_token = t0;
    tree.contexts.push_back(advance(t0, {}, 1));
    auto cands = pick_candidates(tree.contexts[0].dist, temperature, cfg.horizontal_top_k, rng);
    std::vector<int> branch_roots;
    for (size_t c = 0; c < cands.size(); ++c) {
        bool chains = static_cast<int>(c) < cfg.head1_branches;
        TreeNode n;
        n.token = cands[c].token;
        n.parent = -1;
        n.depth = 1;
        n.draft_prob = cands[c].prob;
        n.sampled = cands[c].sampled;
        n.kind = chains ? NodeKind::vertical_top1 : NodeKind::horizontal_alt;
        n.ctx = 0;
        tree.nodes.push_back(n);
        if (chains) branch_roots.push_back(static_cast<int>(tree.nodes.size()) - 1);
    }
    for (int r : branch_roots) grow_branch(tree, r, cfg, temperature, rng, advance);

    tree.validate();
    telemetry_.round_bytes_peak = std::max(telemetry_.round_bytes_peak, tree_bytes(tree));
    return tree;
}

} // namespace s4c
