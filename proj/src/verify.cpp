#include "s4c/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <string>

#include "s4c/errors.hpp"

namespace s4c {

double GenStats::mean_accepted() const {
    if (rounds == 0) throw ArgError("stats: mean accepted undefined with zero rounds");
    return static_cast<double>(tokens_emitted) / static_cast<double>(rounds);
}

void GenStats::merge(const GenStats& other) {
    rounds += other.rounds;
    tokens_emitted += other.tokens_emitted;
    target_forward_calls += other.target_forward_calls;
    draft_forward_calls += other.draft_forward_calls;
    for (auto& [k, v] : other.accepted_hist) accepted_hist[k] += v;
    wall_time_ns += other.wall_time_ns;
    peak_extra_bytes = std::max(peak_extra_bytes, other.peak_extra_bytes);
}

bool accept_token(double p_target, double p_draft, double u) {
    if (!(p_draft > 0.0)) throw ArgError("accept_token: drafted probability must be positive");
    if (p_target < 0.0 || u < 0.0 || u >= 1.0)
        throw ArgError("accept_token: inputs out of range");
    double ratio = p_target / p_draft;
    return u < std::min(1.0, ratio);
}

ProbDist residual_distribution(const ProbDist& target, const ProbDist& draft) {
    if (target.size() != draft.size())
        throw ShapeError("residual: distribution sizes differ");
    ProbDist out(target.size());
    double sum = 0.0;
    for (size_t i = 0; i < target.size(); ++i) {
        double d = target[i] - draft[i];
        out[i] = d > 0.0 ? d : 0.0;
        sum += out[i];
    }
    if (sum <= 0.0) return target;  // target == draft: nothing left to correct
    for (size_t i = 0; i < out.size(); ++i) out[i] /= sum;
    return out;
}

ProbDist eq12_correction_distribution(const ProbDist& target, const ProbDist& draft) {
    if (target.size() != draft.size())
        throw ShapeError("eq12 correction: distribution sizes differ");
    ProbDist out(target.size());
    double sum = 0.0;
    for (size_t i = 0; i < target.size(); ++i) {
        out[i] = std::max(draft[i], target[i]);
        sum += out[i];
    }
    for (size_t i = 0; i < out.size(); ++i) out[i] /= sum;
    return out;
}

ProbDist exact_output_distribution(const ProbDist& target, const ProbDist& draft, bool eq12) {
    if (target.size() != draft.size())
        throw ShapeError("exact output: distribution sizes differ");
    // accept mass per token: q(x) * min(1, p(x)/q(x)) = min(q(x), p(x))
    double accept_mass = 0.0;
    ProbDist out(target.size());
    for (size_t i = 0; i < target.size(); ++i) {
        double m = std::min(draft[i], target[i]);
        out[i] = m;
        accept_mass += m;
    }
    double reject_mass = 1.0 - accept_mass;
    if (reject_mass > 0.0) {
        ProbDist corr = eq12 ? eq12_correction_distribution(target, draft)
                             : residual_distribution(target, draft);
        for (size_t i = 0; i < out.size(); ++i) out[i] += reject_mass * corr[i];
    }
    return out;
}

// ---- verify_round -----------------------------------------------------------

namespace {

// Sampled chain child first: its ratio test accepts with probability 1 when the
// draft equals the target, so an identical draft gets full-depth acceptance every
// round. Deterministic siblings follow in draft-probability order. Any order is
// lossless (the correction absorbs whatever mass remains), this one also makes
// the identical-draft case deterministic.
std::vector<int> order_children(const DraftTree& tree, const std::vector<int>& c) {
    std::vector<int> s = c;
    std::stable_sort(s.begin(), s.end(), [&](int a, int b) {
        const TreeNode& na = tree.nodes[static_cast<size_t>(a)];
        const TreeNode& nb = tree.nodes[static_cast<size_t>(b)];
        if (na.sampled != nb.sampled) return na.sampled;
        if (na.draft_prob != nb.draft_prob) return na.draft_prob > nb.draft_prob;
        bool va = na.kind == NodeKind::vertical_top1;
        bool vb = nb.kind == NodeKind::vertical_top1;
        if (va != vb) return va;
        return a < b;
    });
    return s;
}

} // namespace

VerifyOutcome verify_round(const DraftTree& tree, const ForwardResult& target_out, Rng& rng,
                           const VerifyOptions& opt) {
    tree.validate();
    if (target_out.logits.rows != tree.nodes.size() + 1)
        throw ShapeError("verify: target rows != tree nodes + root row");
    const bool greedy = opt.temperature == 0.0;
    auto kids = tree.children();

    VerifyOutcome res;
    int cur_row = 0;
    std::vector<int> children = tree.root_children();

    while (true) {
        if (children.empty()) {
            // fully accepted chain: bonus token from the frontier distribution
            if (greedy) {
                res.correction_token = argmax(target_out.logits.row(static_cast<size_t>(cur_row)));
            } else {
                ProbDist p = softmax(target_out.logits.row(static_cast<size_t>(cur_row)),
                                     opt.temperature);
                res.correction_token = rng.sample(p.span());
            }
            res.bonus = true;
            break;
        }

        int accepted = -1;
        if (greedy) {
            int am = argmax(target_out.logits.row(static_cast<size_t>(cur_row)));
            for (int c : order_children(tree, children)) {
                ++res.nodes_tested;
                if (tree.nodes[static_cast<size_t>(c)].token == am) { accepted = c; break; }
            }
            if (accepted < 0) {
                res.correction_token = am;
                res.bonus = false;
                break;
            }
        } else {
            ProbDist p = softmax(target_out.logits.row(static_cast<size_t>(cur_row)),
                                 opt.temperature);
            ProbDist pcur = p;
            for (int c : order_children(tree, children)) {
                const TreeNode& n = tree.nodes[static_cast<size_t>(c)];
                double u = rng.uniform();
                ++res.nodes_tested;
                if (n.sampled) {
                    // candidate drawn from the draft distribution: classic ratio test,
                    // reject -> subtract the whole draft distribution from the residual
                    if (accept_token(pcur[static_cast<size_t>(n.token)], n.draft_prob, u)) {
                        accepted = c;
                        break;
                    }
                    pcur = residual_distribution(pcur, tree.contexts[static_cast<size_t>(n.ctx)].dist);
                } else {
                    // deterministic alternate: accept with its remaining target mass,
                    // reject -> remove exactly that point mass
                    if (accept_token(pcur[static_cast<size_t>(n.token)], 1.0, u)) {
                        accepted = c;
                        break;
                    }
                    pcur[static_cast<size_t>(n.token)] = 0.0;
                    normalize(pcur.p);
                }
            }
            if (accepted < 0) {
                if (opt.eq12_correction) {
                    int ctx = tree.nodes[static_cast<size_t>(children[0])].ctx;
                    ProbDist corr = eq12_correction_distribution(
                        p, tree.contexts[static_cast<size_t>(ctx)].dist);
                    res.correction_token = rng.sample(corr.span());
                } else {
                    res.correction_token = rng.sample(pcur.span());
                }
                res.bonus = false;
                break;
            }
        }

        res.accepted_nodes.push_back(accepted);
        res.accepted_tokens.push_back(tree.nodes[static_cast<size_t>(accepted)].token);
        cur_row = accepted + 1;
        children = kids[static_cast<size_t>(accepted)];
    }

    res.next_feature_row = cur_row;
    if (!target_out.features.empty()) {
        auto f = target_out.features.row(static_cast<size_t>(cur_row));
        res.next_feature.assign(f.begin(), f.end());
    }
    return res;
}

// ---- generation engine ------------------------------------------------------

namespace {

TreeMask combined_mask(const FlatTree& flat) {
    const size_t n = flat.tokens.size();
    TreeMask m(n + 1);
    m.set(0, 0);
    for (size_t i = 0; i < n; ++i) {
        m.set(i + 1, 0);  // the pending root token is every node's ancestor
        for (size_t j = 0; j < n; ++j)
            if (flat.mask.at(i, j)) m.set(i + 1, j + 1);
    }
    return m;
}

void check_prompt(std::span<const int> prompt, int vocab) {
    if (prompt.empty()) throw ArgError("generate: prompt must be non-empty");
    for (int t : prompt)
        if (t < 0 || t >= vocab) throw ArgError("generate: prompt token out of range");
}

} // namespace

std::pair<std::vector<int>, GenStats> generate(TargetBackend& target, Drafter& drafter,
                                               std::span<const int> prompt,
                                               const GenConfig& cfg) {
    check_prompt(prompt, target.vocab_size());
    cfg.draft.validate();
    if (cfg.max_new < 0) throw ArgError("generate: negative budget");
    if (cfg.temperature < 0.0) throw ArgError("generate: negative temperature");

    const auto t_start = std::chrono::steady_clock::now();
    target.reset();
    Rng base(cfg.seed);
    Rng draft_rng = base.split(1);
    Rng verify_rng = base.split(2);
    GenStats st;
    const long long draft_calls_before = drafter.telemetry().forward_calls;

    // prefill everything but the last prompt token; that token is the first
    // round's pending context (it reaches the cache via the round's masked pass)
    std::vector<int> prefix(prompt.begin(), prompt.end() - 1);
    ForwardResult pre = target.forward(prefix, nullptr, {});
    ++st.target_forward_calls;
    std::vector<double> f0;
    if (target.has_features() && pre.features.rows > 0) {
        auto f = pre.features.row(pre.features.rows - 1);
        f0.assign(f.begin(), f.end());
    }
    int t0 = prompt.back();

    std::vector<int> emitted;
    size_t cache_extra_peak = 0;
    bool stop = false;
    // a round feeds t0 plus up to max_nodes tree rows; once that no longer fits
    // the context window, generation ends early rather than failing mid-round
    const size_t round_rows = 1 + static_cast<size_t>(cfg.draft.max_nodes());
    while (!stop && static_cast<int>(emitted.size()) < cfg.max_new &&
           target.cache_len() + round_rows <= static_cast<size_t>(target.context_limit())) {
        DraftTree tree = drafter.run_round(f0, t0, cfg.draft, cfg.temperature, draft_rng);
        const size_t base_pos = target.cache_len() + 1;
        FlatTree flat = flatten(tree, static_cast<int>(base_pos));

        std::vector<int> feed;
        feed.reserve(1 + flat.tokens.size());
        feed.push_back(t0);
        feed.insert(feed.end(), flat.tokens.begin(), flat.tokens.end());
        std::vector<int> pos;
        pos.reserve(feed.size());
        pos.push_back(static_cast<int>(base_pos) - 1);
        pos.insert(pos.end(), flat.positions.begin(), flat.positions.end());
        TreeMask mask = combined_mask(flat);

        ForwardResult out = target.forward(feed, &mask, pos);
        ++st.target_forward_calls;
        if (target.cache_len() > 0) {
            // tree rows sit in the cache until compaction; that transient footprint
            // is the speculative overhead a plain decoder would not pay
            size_t per_row = target.cache_byte_size() / target.cache_len();
            cache_extra_peak = std::max(cache_extra_peak, flat.tokens.size() * per_row);
        }

        VerifyOutcome vo =
            verify_round(tree, out, verify_rng, {cfg.temperature, cfg.eq12_correction});
        ++st.rounds;

        int taken = 0;
        for (int tok : vo.accepted_tokens) {
            if (static_cast<int>(emitted.size()) >= cfg.max_new) break;
            emitted.push_back(tok);
            ++taken;
            if (cfg.eot_token >= 0 && tok == cfg.eot_token) { stop = true; break; }
        }
        bool full_take = taken == static_cast<int>(vo.accepted_tokens.size());
        if (!stop && full_take && static_cast<int>(emitted.size()) < cfg.max_new) {
            emitted.push_back(vo.correction_token);
            if (cfg.eot_token >= 0 && vo.correction_token == cfg.eot_token) stop = true;
        }
        ++st.accepted_hist[taken];

        // cache: committed prefix (incl. t0) + accepted path rows only
        std::vector<size_t> rows;
        rows.reserve(vo.accepted_nodes.size());
        for (int idx : vo.accepted_nodes) rows.push_back(base_pos + static_cast<size_t>(idx));
        target.keep(base_pos, rows);

        t0 = emitted.empty() ? t0 : emitted.back();
        f0 = vo.next_feature;
    }

    st.tokens_emitted = static_cast<long long>(emitted.size());
    st.draft_forward_calls = drafter.telemetry().forward_calls - draft_calls_before;
    st.peak_extra_bytes = drafter.telemetry().static_bytes +
                          drafter.telemetry().round_bytes_peak + cache_extra_peak;
    st.wall_time_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
    return {std::move(emitted), st};
}

std::pair<std::vector<int>, GenStats> baseline_generate(TargetBackend& target,
                                                        std::span<const int> prompt,
                                                        const GenConfig& cfg) {
    check_prompt(prompt, target.vocab_size());
    if (cfg.max_new < 0) throw ArgError("generate: negative budget");
    if (cfg.temperature < 0.0) throw ArgError("generate: negative temperature");

    const auto t_start = std::chrono::steady_clock::now();
    target.reset();
    Rng rng = Rng(cfg.seed).split(3);
    GenStats st;

    ForwardResult out = target.forward(prompt, nullptr, {});
    ++st.target_forward_calls;
    std::vector<int> emitted;
    while (static_cast<int>(emitted.size()) < cfg.max_new) {
        auto logits = out.logits.row(out.logits.rows - 1);
        int tok;
        if (cfg.temperature == 0.0) {
            tok = argmax(logits);
        } else {
            ProbDist p = softmax(logits, cfg.temperature);
            tok = rng.sample(p.span());
        }
        emitted.push_back(tok);
        if (cfg.eot_token >= 0 && tok == cfg.eot_token) break;
        if (static_cast<int>(emitted.size()) >= cfg.max_new) break;
        if (target.cache_len() + 1 > static_cast<size_t>(target.context_limit())) break;
        int feed[1] = {tok};
        out = target.forward(std::span<const int>(feed, 1), nullptr, {});
        ++st.target_forward_calls;
    }

    st.tokens_emitted = static_cast<long long>(emitted.size());
    st.wall_time_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
    return {std::move(emitted), st};
}

} // namespace s4c
