#include "s4c/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <ostream>
#include <string>

#include "json.hpp"

#include "s4c/errors.hpp"
#include "s4c/rng.hpp"

namespace s4c {

// ---- losses -----------------------------------------------------------------

LossBreakdown total_loss(double lm, double teacher, double smooth, double w1, double w2,
                         double w3) {
    LossBreakdown b;
    b.lm = lm;
    b.teacher = teacher;
    b.smooth = smooth;
    b.w1 = w1;
    b.w2 = w2;
    b.w3 = w3;
    b.total = w1 * lm + w2 * teacher + w3 * smooth;
    return b;
}

double loss_lm(const Matrix& pred_rows, std::span<const int> labels) {
    if (pred_rows.rows != labels.size()) throw ShapeError("loss_lm: one label per row required");
    if (pred_rows.rows == 0) throw ShapeError("loss_lm: no rows");
    double sum = 0.0;
    for (size_t i = 0; i < pred_rows.rows; ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<size_t>(y) >= pred_rows.cols)
            throw ArgError("loss_lm: label out of range");
        sum += -std::log(std::max(pred_rows.at(i, static_cast<size_t>(y)), kProbFloor));
    }
    return sum / static_cast<double>(pred_rows.rows);
}

double loss_teacher(const Matrix& pred_rows, const Matrix& target_rows) {
    if (pred_rows.rows != target_rows.rows || pred_rows.cols != target_rows.cols)
        throw ShapeError("loss_teacher: row shapes differ");
    if (pred_rows.rows == 0) throw ShapeError("loss_teacher: no rows");
    double sum = 0.0;
    for (size_t i = 0; i < pred_rows.rows; ++i)
        for (size_t j = 0; j < pred_rows.cols; ++j)
            sum += -target_rows.at(i, j) * std::log(std::max(pred_rows.at(i, j), kProbFloor));
    return sum / static_cast<double>(pred_rows.rows);
}

static double smooth_l1(double d) {
    double a = std::abs(d);
    return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

static double smooth_l1_grad(double d) {
    if (d > 1.0) return 1.0;
    if (d < -1.0) return -1.0;
    return d;
}

double loss_smooth(const Matrix& pred_feat, const Matrix& target_feat) {
    if (pred_feat.rows != target_feat.rows || pred_feat.cols != target_feat.cols)
        throw ShapeError("loss_smooth: feature shapes differ");
    if (pred_feat.data.empty()) throw ShapeError("loss_smooth: no coordinates");
    double sum = 0.0;
    for (size_t i = 0; i < pred_feat.data.size(); ++i)
        sum += smooth_l1(pred_feat.data[i] - target_feat.data[i]);
    return sum / static_cast<double>(pred_feat.data.size());
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ArgError("train config: negative epochs");
    if (lr < 0.0 || !std::isfinite(lr)) throw ArgError("train config: bad learning rate");
    if (momentum < 0.0 || momentum >= 1.0) throw ArgError("train config: momentum outside [0,1)");
    if (w1 < 0.0 || w2 < 0.0 || w3 < 0.0) throw ArgError("train config: negative loss weight");
    if (window < 3) throw ArgError("train config: window must be >= 3");
}

// ---- shared math helpers ----------------------------------------------------

static double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

static double gelu_grad(double x) {
    constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    double pdf = std::exp(-0.5 * x * x) * kInvSqrt2Pi;
    return cdf + x * pdf;
}

// y_i = g_i x_i / r with r = sqrt(mean(x^2) + eps). Writes dx (assign) and
// accumulates into dgain when given.
static void rms_backward(std::span<const double> x, std::span<const double> gain,
                         std::span<const double> dy, std::span<double> dx,
                         std::vector<double>* dgain) {
    const size_t n = x.size();
    double ms = 0.0;
    for (size_t i = 0; i < n; ++i) ms += x[i] * x[i];
    ms /= static_cast<double>(n);
    const double r = std::sqrt(ms + kRmsEps);
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += dy[i] * gain[i] * x[i];
    const double c = s / (static_cast<double>(n) * r * r * r);
    for (size_t i = 0; i < n; ++i) dx[i] = dy[i] * gain[i] / r - x[i] * c;
    if (dgain)
        for (size_t i = 0; i < n; ++i) (*dgain)[i] += dy[i] * x[i] / r;
}

// C += a^T b for row vectors a (1 x n), b (1 x m), C (n x m)
static void outer_acc(std::span<const double> a, std::span<const double> b, Matrix& c) {
    for (size_t i = 0; i < a.size(); ++i) {
        double ai = a[i];
        double* row = c.row(i).data();
        for (size_t j = 0; j < b.size(); ++j) row[j] += ai * b[j];
    }
}

// out = dy * W^T for dy (1 x cols): out[i] = sum_j W(i,j) dy[j]
static std::vector<double> vecmat_t(std::span<const double> dy, const Matrix& w) {
    if (dy.size() != w.cols) throw ShapeError("vecmat_t: size mismatch");
    std::vector<double> out(w.rows, 0.0);
    for (size_t i = 0; i < w.rows; ++i) {
        const double* row = w.row(i).data();
        double s = 0.0;
        for (size_t j = 0; j < w.cols; ++j) s += row[j] * dy[j];
        out[i] = s;
    }
    return out;
}

// C += A^T B; A (n x r), B (n x c), C (r x c)
static void acc_at_b(const Matrix& a, const Matrix& b, Matrix& c) {
    for (size_t k = 0; k < a.rows; ++k) {
        const double* arow = a.row(k).data();
        const double* brow = b.row(k).data();
        for (size_t i = 0; i < a.cols; ++i) {
            double v = arow[i];
            if (v == 0.0) continue;
            double* crow = c.row(i).data();
            for (size_t j = 0; j < b.cols; ++j) crow[j] += v * brow[j];
        }
    }
}

// out = A B^T; A (n x c), B (r x c), out (n x r)
static Matrix mul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw ShapeError("mul_a_bt: inner size mismatch");
    Matrix out(a.rows, b.rows);
    for (size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i).data();
        for (size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j).data();
            double s = 0.0;
            for (size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            out.at(i, j) = s;
        }
    }
    return out;
}

// ---- draft head: per-instance forward/backward ------------------------------

namespace {

struct LayerScratch {
    std::vector<double> x_in, a, av, x_mid, b, g1, gg, x_out;
};

} // namespace

ProbDist draft_teacher_predict(const Model& target, const DraftHeadWeights& head, int token,
                               std::span<const double> feature) {
    Matrix hrow(1, feature.size());
    auto fused = fuse(head, target.embed(token), feature);
    std::memcpy(hrow.row(0).data(), fused.data(), fused.size() * sizeof(double));
    Matrix out = draft_head_forward(head, hrow);
    auto f = rms_normalize(out.row(0), target.weights().final_gain, kRmsEps);
    return softmax(target.lm_logits(f), 1.0);
}

// One teacher-forced instance: forward through one head, losses against the
// frozen target's next position, backward into grads (nullable). inv_n is the
// 1/instance-count factor that turns per-instance sums into batch means.
static void draft_instance(const Model& target, const DraftHeadWeights& head,
                           std::span<const double> e_in, std::span<const double> f_in, int label,
                           std::span<const double> p_teacher, std::span<const double> f_teacher,
                           const TrainConfig& cfg, double inv_n, DraftHeadWeights* g,
                           double& lm_out, double& teacher_out, double& smooth_out) {
    const auto& tw = target.weights();
    const size_t h = e_in.size();

    // forward, storing everything the backward pass reads
    std::vector<double> cat(2 * h);
    std::memcpy(cat.data(), e_in.data(), h * sizeof(double));
    std::memcpy(cat.data() + h, f_in.data(), h * sizeof(double));
    std::vector<double> u = vecmat(cat, head.fuse);

    std::vector<LayerScratch> ls(head.layers.size());
    std::vector<double> x = u;
    for (size_t li = 0; li < head.layers.size(); ++li) {
        const LayerWeights& L = head.layers[li];
        LayerScratch& s = ls[li];
        s.x_in = x;
        s.a = rms_normalize(s.x_in, L.attn_gain, kRmsEps);
        s.av = vecmat(s.a, L.wv);
        auto attn = vecmat(s.av, L.wo);
        s.x_mid = s.x_in;
        for (size_t d = 0; d < h; ++d) s.x_mid[d] += attn[d];
        s.b = rms_normalize(s.x_mid, L.mlp_gain, kRmsEps);
        s.g1 = vecmat(s.b, L.w1);
        s.gg = s.g1;
        for (double& v : s.gg) v = gelu(v);
        auto mlp = vecmat(s.gg, L.w2);
        s.x_out = s.x_mid;
        for (size_t d = 0; d < h; ++d) s.x_out[d] += mlp[d];
        x = s.x_out;
    }
    std::vector<double> fhat = rms_normalize(x, tw.final_gain, kRmsEps);
    std::vector<double> logits = vecmat(fhat, tw.lm_head);
    ProbDist q = softmax(logits, 1.0);

    lm_out += -std::log(std::max(q[static_cast<size_t>(label)], kProbFloor));
    double tch = 0.0;
    for (size_t t = 0; t < q.size(); ++t)
        tch += -p_teacher[t] * std::log(std::max(q[t], kProbFloor));
    teacher_out += tch;
    double sm = 0.0;
    for (size_t d = 0; d < h; ++d) sm += smooth_l1(fhat[d] - f_teacher[d]);
    smooth_out += sm / static_cast<double>(h);

    if (!g) return;

    // dq with the probability floor respected (flat where the floor clamps)
    std::vector<double> dq(q.size(), 0.0);
    if (q[static_cast<size_t>(label)] > kProbFloor)
        dq[static_cast<size_t>(label)] -= cfg.w1 * inv_n / q[static_cast<size_t>(label)];
    for (size_t t = 0; t < q.size(); ++t)
        if (p_teacher[t] != 0.0 && q[t] > kProbFloor)
            dq[t] -= cfg.w2 * inv_n * p_teacher[t] / q[t];
    double dot = 0.0;
    for (size_t t = 0; t < q.size(); ++t) dot += q[t] * dq[t];
    std::vector<double> dlogits(q.size());
    for (size_t t = 0; t < q.size(); ++t) dlogits[t] = q[t] * (dq[t] - dot);

    std::vector<double> dfhat = vecmat_t(dlogits, tw.lm_head);
    const double sw = cfg.w3 * inv_n / static_cast<double>(h);
    for (size_t d = 0; d < h; ++d) dfhat[d] += sw * smooth_l1_grad(fhat[d] - f_teacher[d]);

    std::vector<double> dx(h);
    rms_backward(x, tw.final_gain, dfhat, dx, nullptr);  // read-out norm is frozen

    for (size_t li = head.layers.size(); li-- > 0;) {
        const LayerWeights& L = head.layers[li];
        LayerScratch& s = ls[li];
        LayerWeights& gl = g->layers[li];

        // mlp branch
        outer_acc(s.gg, dx, gl.w2);
        std::vector<double> dgg = vecmat_t(dx, L.w2);
        for (size_t d = 0; d < dgg.size(); ++d) dgg[d] *= gelu_grad(s.g1[d]);
        outer_acc(s.b, dgg, gl.w1);
        std::vector<double> db = vecmat_t(dgg, L.w1);
        std::vector<double> dx_mid(h);
        rms_backward(s.x_mid, L.mlp_gain, db, dx_mid, &gl.mlp_gain);
        for (size_t d = 0; d < h; ++d) dx_mid[d] += dx[d];

        // degenerate single-token attention: only Wv/Wo carry signal
        outer_acc(s.av, dx_mid, gl.wo);
        std::vector<double> dav = vecmat_t(dx_mid, L.wo);
        outer_acc(s.a, dav, gl.wv);
        std::vector<double> da = vecmat_t(dav, L.wv);
        std::vector<double> dx_in(h);
        rms_backward(s.x_in, L.attn_gain, da, dx_in, &gl.attn_gain);
        for (size_t d = 0; d < h; ++d) dx_in[d] += dx_mid[d];
        dx = std::move(dx_in);
    }
    outer_acc(cat, dx, g->fuse);
}

LossBreakdown draft_window_loss(const Model& target, const DraftWeights& w,
                                std::span<const int> window, const TrainConfig& cfg,
                                DraftWeights* grads) {
    if (window.size() < 3) throw ArgError("draft loss: window needs at least 3 tokens");
    if (w.heads.empty()) throw ArgError("draft loss: no heads");
    if (grads && grads->heads.size() != w.heads.size())
        throw ShapeError("draft loss: gradient shape mismatch");
    const size_t W = window.size();

    KVCache cache;
    cache.init(target.spec().n_layers, target.spec().hidden_dim, static_cast<int>(W));
    ForwardResult t_out = target.forward(window, cache);
    Matrix p_rows(W, t_out.logits.cols);
    for (size_t i = 0; i < W; ++i) {
        ProbDist p = softmax(t_out.logits.row(i), 1.0);
        std::memcpy(p_rows.row(i).data(), p.p.data(), p.size() * sizeof(double));
    }

    const size_t n_inst = w.heads.size() * (W - 2);
    const double inv_n = 1.0 / static_cast<double>(n_inst);
    double lm = 0.0, teacher = 0.0, smooth = 0.0;
    for (size_t hi = 0; hi < w.heads.size(); ++hi) {
        DraftHeadWeights* g = grads ? &grads->heads[hi] : nullptr;
        for (size_t j = 0; j + 2 < W; ++j) {
            std::vector<double> e_in = target.embed(window[j + 1]);
            draft_instance(target, w.heads[hi], e_in, t_out.features.row(j), window[j + 2],
                           p_rows.row(j + 1), t_out.features.row(j + 1), cfg, inv_n, g, lm,
                           teacher, smooth);
        }
    }
    return total_loss(lm * inv_n, teacher * inv_n, smooth * inv_n, cfg.w1, cfg.w2, cfg.w3);
}

// ---- target transformer: window forward/backward ----------------------------

namespace {

struct TargetLayerScratch {
    Matrix x_in, a, q, k, v, ctx, x_mid, b, g1, gg;
    std::vector<Matrix> att;  // one (n x n) weight matrix per attention head
};

} // namespace

double target_window_loss(const ModelSpec& spec, const Weights& w, std::span<const int> window,
                          Weights* grads) {
    spec.validate();
    const size_t n = window.size();
    if (n < 2) throw ArgError("target loss: window needs at least 2 tokens");
    if (n > static_cast<size_t>(spec.context_limit))
        throw CapacityError("target loss: window exceeds context limit");
    const size_t h = static_cast<size_t>(spec.hidden_dim);
    const size_t hd = static_cast<size_t>(spec.head_dim());
    const int n_heads = spec.n_heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Matrix x(n, h);
    for (size_t i = 0; i < n; ++i) {
        int tok = window[i];
        if (tok < 0 || tok >= spec.vocab_size) throw ArgError("target loss: token out of range");
        auto te = w.tok_emb.row(static_cast<size_t>(tok));
        auto pe = w.pos_emb.row(i);
        for (size_t d = 0; d < h; ++d) x.at(i, d) = te[d] + pe[d];
    }

    std::vector<TargetLayerScratch> ls(w.layers.size());
    for (size_t li = 0; li < w.layers.size(); ++li) {
        const LayerWeights& L = w.layers[li];
        TargetLayerScratch& s = ls[li];
        s.x_in = x;
        s.a = Matrix(n, h);
        for (size_t i = 0; i < n; ++i) {
            auto norm = rms_normalize(s.x_in.row(i), L.attn_gain, kRmsEps);
            std::memcpy(s.a.row(i).data(), norm.data(), h * sizeof(double));
        }
        s.q = matmul(s.a, L.wq);
        s.k = matmul(s.a, L.wk);
        s.v = matmul(s.a, L.wv);
        s.att.assign(static_cast<size_t>(n_heads), Matrix(n, n));
        s.ctx = Matrix(n, h);
        std::vector<double> scores;
        for (size_t i = 0; i < n; ++i) {
            for (int hd_i = 0; hd_i < n_heads; ++hd_i) {
                const size_t off = static_cast<size_t>(hd_i) * hd;
                scores.assign(i + 1, 0.0);
                double mx = -1e300;
                for (size_t j = 0; j <= i; ++j) {
                    double sc = 0.0;
                    const double* qrow = s.q.row(i).data() + off;
                    const double* krow = s.k.row(j).data() + off;
                    for (size_t d = 0; d < hd; ++d) sc += qrow[d] * krow[d];
                    sc *= inv_scale;
                    scores[j] = sc;
                    mx = std::max(mx, sc);
                }
                double denom = 0.0;
                for (double& sc : scores) {
                    sc = std::exp(sc - mx);
                    denom += sc;
                }
                Matrix& att = s.att[static_cast<size_t>(hd_i)];
                double* orow = s.ctx.row(i).data() + off;
                for (size_t j = 0; j <= i; ++j) {
                    double wj = scores[j] / denom;
                    att.at(i, j) = wj;
                    const double* vrow = s.v.row(j).data() + off;
                    for (size_t d = 0; d < hd; ++d) orow[d] += wj * vrow[d];
                }
            }
        }
        Matrix proj = matmul(s.ctx, L.wo);
        s.x_mid = s.x_in;
        for (size_t i = 0; i < n * h; ++i) s.x_mid.data[i] += proj.data[i];

        s.b = Matrix(n, h);
        for (size_t i = 0; i < n; ++i) {
            auto norm = rms_normalize(s.x_mid.row(i), L.mlp_gain, kRmsEps);
            std::memcpy(s.b.row(i).data(), norm.data(), h * sizeof(double));
        }
        s.g1 = matmul(s.b, L.w1);
        s.gg = s.g1;
        for (double& v : s.gg.data) v = gelu(v);
        Matrix mlp = matmul(s.gg, L.w2);
        x = s.x_mid;
        for (size_t i = 0; i < n * h; ++i) x.data[i] += mlp.data[i];
    }

    Matrix f(n, h);
    for (size_t i = 0; i < n; ++i) {
        auto norm = rms_normalize(x.row(i), w.final_gain, kRmsEps);
        std::memcpy(f.row(i).data(), norm.data(), h * sizeof(double));
    }
    Matrix logits = matmul(f, w.lm_head);
    Matrix probs(n, logits.cols);
    for (size_t i = 0; i < n; ++i) {
        ProbDist p = softmax(logits.row(i), 1.0);
        std::memcpy(probs.row(i).data(), p.p.data(), p.size() * sizeof(double));
    }

    const size_t n_pos = n - 1;
    const double inv_npos = 1.0 / static_cast<double>(n_pos);
    double loss = 0.0;
    for (size_t i = 0; i + 1 < n; ++i)
        loss += -std::log(std::max(probs.at(i, static_cast<size_t>(window[i + 1])), kProbFloor));
    loss *= inv_npos;
    if (!std::isfinite(loss)) throw NumericError("target loss: non-finite loss");
    if (!grads) return loss;

    // backward: dlogits via dq route so the probability floor stays exact
    Matrix dlogits(n, logits.cols);
    for (size_t i = 0; i + 1 < n; ++i) {
        size_t y = static_cast<size_t>(window[i + 1]);
        double qy = probs.at(i, y);
        if (qy <= kProbFloor) continue;  // clamped: locally flat
        double dqy = -inv_npos / qy;
        double dot = probs.at(i, y) * dqy;
        for (size_t t = 0; t < logits.cols; ++t)
            dlogits.at(i, t) = probs.at(i, t) * ((t == y ? dqy : 0.0) - dot);
    }

    acc_at_b(f, dlogits, grads->lm_head);
    Matrix df = mul_a_bt(dlogits, w.lm_head);
    Matrix dx(n, h);
    for (size_t i = 0; i < n; ++i)
        rms_backward(x.row(i), w.final_gain, df.row(i), dx.row(i), &grads->final_gain);

    for (size_t li = w.layers.size(); li-- > 0;) {
        const LayerWeights& L = w.layers[li];
        TargetLayerScratch& s = ls[li];
        LayerWeights& gl = grads->layers[li];

        // mlp
        acc_at_b(s.gg, dx, gl.w2);
        Matrix dgg = mul_a_bt(dx, L.w2);
        for (size_t i = 0; i < dgg.data.size(); ++i) dgg.data[i] *= gelu_grad(s.g1.data[i]);
        acc_at_b(s.b, dgg, gl.w1);
        Matrix db = mul_a_bt(dgg, L.w1);
        Matrix dx_mid(n, h);
        for (size_t i = 0; i < n; ++i)
            rms_backward(s.x_mid.row(i), L.mlp_gain, db.row(i), dx_mid.row(i), &gl.mlp_gain);
        for (size_t i = 0; i < n * h; ++i) dx_mid.data[i] += dx.data[i];

        // attention
        acc_at_b(s.ctx, dx_mid, gl.wo);
        Matrix dctx = mul_a_bt(dx_mid, L.wo);
        Matrix dq(n, h), dk(n, h), dv(n, h);
        for (int hd_i = 0; hd_i < n_heads; ++hd_i) {
            const size_t off = static_cast<size_t>(hd_i) * hd;
            const Matrix& att = s.att[static_cast<size_t>(hd_i)];
            for (size_t i = 0; i < n; ++i) {
                const double* dctx_row = dctx.row(i).data() + off;
                double rowdot = 0.0;
                std::vector<double> datt(i + 1);
                for (size_t j = 0; j <= i; ++j) {
                    const double* vrow = s.v.row(j).data() + off;
                    double d = 0.0;
                    for (size_t dd = 0; dd < hd; ++dd) d += dctx_row[dd] * vrow[dd];
                    datt[j] = d;
                    rowdot += att.at(i, j) * d;
                    double aij = att.at(i, j);
                    double* dvrow = dv.row(j).data() + off;
                    for (size_t dd = 0; dd < hd; ++dd) dvrow[dd] += aij * dctx_row[dd];
                }
                for (size_t j = 0; j <= i; ++j) {
                    double ds = att.at(i, j) * (datt[j] - rowdot) * inv_scale;
                    if (ds == 0.0) continue;
                    double* dqrow = dq.row(i).data() + off;
                    double* dkrow = dk.row(j).data() + off;
                    const double* krow = s.k.row(j).data() + off;
                    const double* qrow = s.q.row(i).data() + off;
                    for (size_t dd = 0; dd < hd; ++dd) {
                        dqrow[dd] += ds * krow[dd];
                        dkrow[dd] += ds * qrow[dd];
                    }
                }
            }
        }
        acc_at_b(s.a, dq, gl.wq);
        acc_at_b(s.a, dk, gl.wk);
        acc_at_b(s.a, dv, gl.wv);
        Matrix da = mul_a_bt(dq, L.wq);
        Matrix dak = mul_a_bt(dk, L.wk);
        Matrix dav = mul_a_bt(dv, L.wv);
        for (size_t i = 0; i < n * h; ++i) da.data[i] += dak.data[i] + dav.data[i];
        Matrix dx_in(n, h);
        for (size_t i = 0; i < n; ++i)
            rms_backward(s.x_in.row(i), L.attn_gain, da.row(i), dx_in.row(i), &gl.attn_gain);
        for (size_t i = 0; i < n * h; ++i) dx_in.data[i] += dx_mid.data[i];
        dx = std::move(dx_in);
    }

    for (size_t i = 0; i < n; ++i) {
        double* te = grads->tok_emb.row(static_cast<size_t>(window[i])).data();
        double* pe = grads->pos_emb.row(i).data();
        const double* dr = dx.row(i).data();
        for (size_t d = 0; d < h; ++d) {
            te[d] += dr[d];
            pe[d] += dr[d];
        }
    }
    return loss;
}

// ---- parameter plumbing -----------------------------------------------------

static void layer_views(LayerWeights& l, std::vector<std::span<double>>& out) {
    out.emplace_back(l.attn_gain);
    out.emplace_back(l.wq.data);
    out.emplace_back(l.wk.data);
    out.emplace_back(l.wv.data);
    out.emplace_back(l.wo.data);
    out.emplace_back(l.mlp_gain);
    out.emplace_back(l.w1.data);
    out.emplace_back(l.w2.data);
}

std::vector<std::span<double>> tensor_views(Weights& w) {
    std::vector<std::span<double>> out;
    out.emplace_back(w.tok_emb.data);
    out.emplace_back(w.pos_emb.data);
    for (auto& l : w.layers) layer_views(l, out);
    out.emplace_back(w.final_gain);
    out.emplace_back(w.lm_head.data);
    return out;
}

std::vector<std::span<double>> tensor_views(DraftWeights& w) {
    std::vector<std::span<double>> out;
    for (auto& hd : w.heads) {
        out.emplace_back(hd.fuse.data);
        for (auto& l : hd.layers) layer_views(l, out);
    }
    return out;
}

template <typename W>
static std::vector<double*> param_view_impl(W& w) {
    std::vector<double*> out;
    for (auto s : tensor_views(w))
        for (double& v : s) out.push_back(&v);
    return out;
}

std::vector<double*> param_view(Weights& w) { return param_view_impl(w); }
std::vector<double*> param_view(DraftWeights& w) { return param_view_impl(w); }

static LayerWeights zero_layer_like(const LayerWeights& l) {
    LayerWeights z;
    z.attn_gain.assign(l.attn_gain.size(), 0.0);
    z.wq = Matrix(l.wq.rows, l.wq.cols);
    z.wk = Matrix(l.wk.rows, l.wk.cols);
    z.wv = Matrix(l.wv.rows, l.wv.cols);
    z.wo = Matrix(l.wo.rows, l.wo.cols);
    z.mlp_gain.assign(l.mlp_gain.size(), 0.0);
    z.w1 = Matrix(l.w1.rows, l.w1.cols);
    z.w2 = Matrix(l.w2.rows, l.w2.cols);
    return z;
}

Weights zero_like(const Weights& w) {
    Weights z;
    z.tok_emb = Matrix(w.tok_emb.rows, w.tok_emb.cols);
    z.pos_emb = Matrix(w.pos_emb.rows, w.pos_emb.cols);
    z.layers.reserve(w.layers.size());
    for (const auto& l : w.layers) z.layers.push_back(zero_layer_like(l));
    z.final_gain.assign(w.final_gain.size(), 0.0);
    z.lm_head = Matrix(w.lm_head.rows, w.lm_head.cols);
    return z;
}

DraftWeights zero_like(const DraftWeights& w) {
    DraftWeights z;
    z.heads.resize(w.heads.size());
    for (size_t i = 0; i < w.heads.size(); ++i) {
        z.heads[i].fuse = Matrix(w.heads[i].fuse.rows, w.heads[i].fuse.cols);
        z.heads[i].layers.reserve(w.heads[i].layers.size());
        for (const auto& l : w.heads[i].layers)
            z.heads[i].layers.push_back(zero_layer_like(l));
    }
    return z;
}

double grad_check(const std::function<double()>& loss, std::span<double* const> params,
                  std::span<const double> analytic, double epsilon, size_t n_coords,
                  uint64_t seed) {
    if (epsilon < 1e-6 || epsilon > 1e-3) throw ArgError("grad check: epsilon outside [1e-6, 1e-3]");
    if (params.size() != analytic.size()) throw ShapeError("grad check: param/grad size mismatch");
    if (params.empty()) throw ArgError("grad check: no parameters");
    size_t want = std::min(n_coords, params.size());
    if (want == 0) throw ArgError("grad check: zero coordinates requested");

    std::vector<size_t> idx(params.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed, /*stream=*/0x9cc0ull);
    for (size_t i = idx.size() - 1; i > 0; --i) {
        size_t j = static_cast<size_t>(rng.next_u64() % (i + 1));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(want);

    double max_rel = 0.0;
    for (size_t i : idx) {
        double* p = params[i];
        const double save = *p;
        *p = save + epsilon;
        double up = loss();
        *p = save - epsilon;
        double down = loss();
        *p = save;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("grad check: non-finite loss during probing");
        double numeric = (up - down) / (2.0 * epsilon);
        double rel = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

// ---- training loops ---------------------------------------------------------

namespace {

void check_corpus(std::span<const int> corpus, int vocab, size_t min_tokens, int window) {
    if (corpus.size() < min_tokens)
        throw ArgError("train: corpus too small (" + std::to_string(corpus.size()) + " < " +
                       std::to_string(min_tokens) + " tokens)");
    if (corpus.size() < static_cast<size_t>(window))
        throw ArgError("train: corpus shorter than one window");
    for (int t : corpus)
        if (t < 0 || t >= vocab) throw ArgError("train: corpus token out of range");
}

void log_epoch(std::ostream* log, int epoch, const LossBreakdown& b) {
    if (!log) return;
    nlohmann::json j{{"epoch", epoch}, {"lm", b.lm},     {"teacher", b.teacher},
                     {"smooth", b.smooth}, {"total", b.total}};
    *log << j.dump() << "\n";
}

void sgd_step(std::vector<std::span<double>>& params, std::vector<std::span<double>>& grads,
              std::vector<std::span<double>>& vel, double lr, double momentum) {
    for (size_t t = 0; t < params.size(); ++t) {
        auto p = params[t];
        auto g = grads[t];
        auto v = vel[t];
        for (size_t i = 0; i < p.size(); ++i) {
            v[i] = momentum * v[i] + g[i];
            p[i] -= lr * v[i];
        }
    }
}

void zero_all(std::vector<std::span<double>>& views) {
    for (auto s : views) std::fill(s.begin(), s.end(), 0.0);
}

std::vector<size_t> shuffled_windows(size_t count, uint64_t seed, int epoch) {
    std::vector<size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed, /*stream=*/0x0e0cull).split(static_cast<uint64_t>(epoch));
    for (size_t i = order.size() - 1; i > 0; --i) {
        size_t j = static_cast<size_t>(rng.next_u64() % (i + 1));
        std::swap(order[i], order[j]);
    }
    return order;
}

} // namespace

DraftWeights train_draft(std::span<const int> corpus, const Model& target, DraftWeights init,
                         const TrainConfig& cfg, std::ostream* log) {
    cfg.validate();
    check_corpus(corpus, target.spec().vocab_size, 10000, cfg.window);
    if (cfg.window > target.spec().context_limit)
        throw ArgError("train: window exceeds target context limit");
    const size_t W = static_cast<size_t>(cfg.window);
    const size_t n_windows = corpus.size() / W;

    DraftWeights w = std::move(init);
    DraftWeights grads = zero_like(w);
    DraftWeights vel = zero_like(w);
    auto pv = tensor_views(w);
    auto gv = tensor_views(grads);
    auto vv = tensor_views(vel);

    auto window_at = [&](size_t wi) { return corpus.subspan(wi * W, W); };

    LossBreakdown ev{};
    for (size_t wi = 0; wi < n_windows; ++wi) {
        LossBreakdown b = draft_window_loss(target, w, window_at(wi), cfg, nullptr);
        ev.lm += b.lm;
        ev.teacher += b.teacher;
        ev.smooth += b.smooth;
    }
    ev = total_loss(ev.lm / static_cast<double>(n_windows),
                    ev.teacher / static_cast<double>(n_windows),
                    ev.smooth / static_cast<double>(n_windows), cfg.w1, cfg.w2, cfg.w3);
    if (!std::isfinite(ev.total)) throw TrainError("training diverged at epoch 0");
    log_epoch(log, 0, ev);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        LossBreakdown acc{};
        for (size_t wi : shuffled_windows(n_windows, cfg.seed, epoch)) {
            zero_all(gv);
            LossBreakdown b = draft_window_loss(target, w, window_at(wi), cfg, &grads);
            if (!std::isfinite(b.total))
                throw TrainError("training diverged at epoch " + std::to_string(epoch));
            acc.lm += b.lm;
            acc.teacher += b.teacher;
            acc.smooth += b.smooth;
            if (cfg.lr != 0.0) sgd_step(pv, gv, vv, cfg.lr, cfg.momentum);
        }
        acc = total_loss(acc.lm / static_cast<double>(n_windows),
                         acc.teacher / static_cast<double>(n_windows),
                         acc.smooth / static_cast<double>(n_windows), cfg.w1, cfg.w2, cfg.w3);
        log_epoch(log, epoch, acc);
    }
    return w;
}

Weights train_target(std::span<const int> corpus, const ModelSpec& spec, Weights init,
                     const TrainConfig& cfg, std::ostream* log) {
    cfg.validate();
    spec.validate();
    check_corpus(corpus, spec.vocab_size, 2 * static_cast<size_t>(cfg.window), cfg.window);
    if (cfg.window > spec.context_limit)
        throw ArgError("train: window exceeds context limit");
    const size_t W = static_cast<size_t>(cfg.window);
    const size_t n_windows = corpus.size() / W;

    Weights w = std::move(init);
    Weights grads = zero_like(w);
    Weights vel = zero_like(w);
    auto pv = tensor_views(w);
    auto gv = tensor_views(grads);
    auto vv = tensor_views(vel);

    auto window_at = [&](size_t wi) { return corpus.subspan(wi * W, W); };

    double ev = 0.0;
    for (size_t wi = 0; wi < n_windows; ++wi)
        ev += target_window_loss(spec, w, window_at(wi), nullptr);
    ev /= static_cast<double>(n_windows);
    if (!std::isfinite(ev)) throw TrainError("training diverged at epoch 0");
    log_epoch(log, 0, total_loss(ev, 0.0, 0.0, 1.0, 0.0, 0.0));

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double acc = 0.0;
        for (size_t wi : shuffled_windows(n_windows, cfg.seed, epoch)) {
            zero_all(gv);
            double loss = target_window_loss(spec, w, window_at(wi), &grads);
            if (!std::isfinite(loss))
                throw TrainError("training diverged at epoch " + std::to_string(epoch));
            acc += loss;
            if (cfg.lr != 0.0) sgd_step(pv, gv, vv, cfg.lr, cfg.momentum);
        }
        acc /= static_cast<double>(n_windows);
        log_epoch(log, epoch, total_loss(acc, 0.0, 0.0, 1.0, 0.0, 0.0));
    }
    return w;
}

double greedy_agreement(const Model& target, const DraftWeights& w,
                        std::span<const int> held_out, int window) {
    if (window < 3) throw ArgError("agreement: window must be >= 3");
    if (held_out.size() < static_cast<size_t>(window))
        throw ArgError("agreement: held-out data shorter than one window");
    const size_t W = static_cast<size_t>(window);
    const size_t n_windows = held_out.size() / W;

    long long match = 0, total = 0;
    for (size_t wi = 0; wi < n_windows; ++wi) {
        auto win = held_out.subspan(wi * W, W);
        KVCache cache;
        cache.init(target.spec().n_layers, target.spec().hidden_dim, static_cast<int>(W));
        ForwardResult t_out = target.forward(win, cache);
        for (const DraftHeadWeights& head : w.heads) {
            for (size_t j = 0; j + 2 < W; ++j) {
                ProbDist q = draft_teacher_predict(target, head, win[j + 1],
                                                   t_out.features.row(j));
                int target_top = argmax(t_out.logits.row(j + 1));
                if (argmax(q.span()) == target_top) ++match;
                ++total;
            }
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(match) / static_cast<double>(total);
}

} // namespace s4c
