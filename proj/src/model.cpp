#include "s4c/model.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "s4c/errors.hpp"
#include "s4c/rng.hpp"

namespace s4c {

void ModelSpec::validate() const {
    if (vocab_size < 2) throw ArgError("spec: vocab_size must be >= 2");
    if (hidden_dim < 1 || n_layers < 1 || n_heads < 1)
        throw ArgError("spec: dims must be positive");
    if (hidden_dim % n_heads != 0)
        throw ArgError("spec: hidden_dim must be divisible by n_heads");
    if (context_limit < 2) throw ArgError("spec: context_limit must be >= 2");
}

uint64_t Weights::checksum_all() const {
    uint64_t h = checksum(tok_emb) ^ (checksum(pos_emb) << 1);
    for (const auto& l : layers) {
        h = h * 1099511628211ull ^ checksum(std::span<const double>(l.attn_gain));
        h = h * 1099511628211ull ^ checksum(l.wq) ^ checksum(l.wk);
        h = h * 1099511628211ull ^ checksum(l.wv) ^ checksum(l.wo);
        h = h * 1099511628211ull ^ checksum(std::span<const double>(l.mlp_gain));
        h = h * 1099511628211ull ^ checksum(l.w1) ^ checksum(l.w2);
    }
    h = h * 1099511628211ull ^ checksum(std::span<const double>(final_gain));
    h = h * 1099511628211ull ^ checksum(lm_head);
    return h;
}

void Weights::check_finite() const {
    auto chk = [](const Matrix& m, const char* name) {
        if (!all_finite(m.data)) throw NumericError(std::string("weights: non-finite ") + name);
    };
    chk(tok_emb, "tok_emb");
    chk(pos_emb, "pos_emb");
    for (const auto& l : layers) {
        if (!all_finite(l.attn_gain) || !all_finite(l.mlp_gain))
            throw NumericError("weights: non-finite norm gain");
        chk(l.wq, "wq"); chk(l.wk, "wk"); chk(l.wv, "wv"); chk(l.wo, "wo");
        chk(l.w1, "w1"); chk(l.w2, "w2");
    }
    if (!all_finite(final_gain)) throw NumericError("weights: non-finite final gain");
    chk(lm_head, "lm_head");
}

static Matrix gauss_matrix(size_t r, size_t c, double stddev, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.gaussian(0.0, stddev);
    return m;
}

Weights init_weights(const ModelSpec& spec, uint64_t seed) {
    spec.validate();
    Rng rng(seed, /*stream=*/0x57a7ull);
    const size_t h = static_cast<size_t>(spec.hidden_dim);
    const double std0 = 0.08;
    Weights w;
    w.tok_emb = gauss_matrix(static_cast<size_t>(spec.vocab_size), h, std0, rng);
    w.pos_emb = gauss_matrix(static_cast<size_t>(spec.context_limit), h, std0, rng);
    w.layers.resize(static_cast<size_t>(spec.n_layers));
    for (auto& l : w.layers) {
        l.attn_gain.assign(h, 1.0);
        l.wq = gauss_matrix(h, h, std0, rng);
        l.wk = gauss_matrix(h, h, std0, rng);
        l.wv = gauss_matrix(h, h, std0, rng);
        l.wo = gauss_matrix(h, h, std0, rng);
        l.mlp_gain.assign(h, 1.0);
        l.w1 = gauss_matrix(h, 4 * h, std0, rng);
        l.w2 = gauss_matrix(4 * h, h, std0, rng);
    }
    w.final_gain.assign(h, 1.0);
    w.lm_head = gauss_matrix(h, static_cast<size_t>(spec.vocab_size), std0, rng);
    return w;
}

void KVCache::init(int n_layers, int hidden, int capacity) {
    k.assign(static_cast<size_t>(n_layers), Matrix());
    v.assign(static_cast<size_t>(n_layers), Matrix());
    for (int l = 0; l < n_layers; ++l) {
        k[static_cast<size_t>(l)] = Matrix(static_cast<size_t>(capacity), static_cast<size_t>(hidden));
        v[static_cast<size_t>(l)] = Matrix(static_cast<size_t>(capacity), static_cast<size_t>(hidden));
    }
    len = 0;
}

void KVCache::truncate(size_t new_len) {
    if (new_len > len) throw ArgError("kv cache: truncate beyond current length");
    len = new_len;
}

void KVCache::keep(size_t prefix, std::span<const size_t> extra_rows) {
    if (prefix > len) throw ArgError("kv cache: keep prefix beyond length");
    size_t dst = prefix;
    for (size_t r : extra_rows) {
        if (r < prefix || r >= len) throw ArgError("kv cache: keep row out of range");
        for (size_t l = 0; l < k.size(); ++l) {
            std::memmove(k[l].row(dst).data(), k[l].row(r).data(), k[l].cols * sizeof(double));
            std::memmove(v[l].row(dst).data(), v[l].row(r).data(), v[l].cols * sizeof(double));
        }
        ++dst;
    }
    len = dst;
}

size_t KVCache::byte_size() const {
    size_t per_layer = 2 * len * (k.empty() ? 0 : k[0].cols) * sizeof(double);
    return per_layer * k.size();
}

Model::Model(ModelSpec spec, Weights w) : spec_(spec), w_(std::move(w)) {
    spec_.validate();
    const size_t h = static_cast<size_t>(spec_.hidden_dim);
    if (w_.tok_emb.rows != static_cast<size_t>(spec_.vocab_size) || w_.tok_emb.cols != h)
        throw ShapeError("model: tok_emb shape mismatch");
    if (w_.pos_emb.rows != static_cast<size_t>(spec_.context_limit) || w_.pos_emb.cols != h)
        throw ShapeError("model: pos_emb shape mismatch");
    if (w_.layers.size() != static_cast<size_t>(spec_.n_layers))
        throw ShapeError("model: layer count mismatch");
    if (w_.lm_head.rows != h || w_.lm_head.cols != static_cast<size_t>(spec_.vocab_size))
        throw ShapeError("model: lm_head shape mismatch");
}

static double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

ForwardResult Model::forward(std::span<const int> tokens, KVCache& cache,
                             const TreeMask* mask, std::span<const int> positions) const {
    const size_t n = tokens.size();
    const size_t h = static_cast<size_t>(spec_.hidden_dim);
    if (cache.k.size() != static_cast<size_t>(spec_.n_layers))
        throw ShapeError("forward: cache layer count mismatch");
    if (mask && mask->n != n) throw ShapeError("forward: mask size != token count");
    if (!positions.empty() && positions.size() != n)
        throw ShapeError("forward: position count != token count");
    if (n == 0) return {Matrix(0, h), Matrix(0, static_cast<size_t>(spec_.vocab_size))};
    if (cache.len + n > static_cast<size_t>(spec_.context_limit))
        throw CapacityError("forward: context limit exceeded (" +
                            std::to_string(cache.len + n) + " > " +
                            std::to_string(spec_.context_limit) + ")");

    const size_t old_len = cache.len;
    const int n_heads = spec_.n_heads;
    const size_t hd = static_cast<size_t>(spec_.head_dim());
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    // input embeddings
    Matrix x(n, h);
    for (size_t i = 0; i < n; ++i) {
        int tok = tokens[i];
        if (tok < 0 || tok >= spec_.vocab_size) throw ArgError("forward: token id out of range");
        int pos = positions.empty() ? static_cast<int>(old_len + i) : positions[i];
        if (pos < 0 || pos >= spec_.context_limit)
            throw CapacityError("forward: position id outside context window");
        auto te = w_.tok_emb.row(static_cast<size_t>(tok));
        auto pe = w_.pos_emb.row(static_cast<size_t>(pos));
        for (size_t d = 0; d < h; ++d) x.at(i, d) = te[d] + pe[d];
    }

    std::vector<double> scores;
    for (size_t li = 0; li < static_cast<size_t>(spec_.n_layers); ++li) {
        const LayerWeights& L = w_.layers[li];
        Matrix& ck = cache.k[li];
        Matrix& cv = cache.v[li];

        // attention, pre-norm
        Matrix attn_in(n, h);
        for (size_t i = 0; i < n; ++i) {
            auto norm = rms_normalize(x.row(i), L.attn_gain, kRmsEps);
            std::memcpy(attn_in.row(i).data(), norm.data(), h * sizeof(double));
        }
        Matrix q = matmul(attn_in, L.wq);
        Matrix knew = matmul(attn_in, L.wk);
        Matrix vnew = matmul(attn_in, L.wv);
        for (size_t i = 0; i < n; ++i) {
            std::memcpy(ck.row(old_len + i).data(), knew.row(i).data(), h * sizeof(double));
            std::memcpy(cv.row(old_len + i).data(), vnew.row(i).data(), h * sizeof(double));
        }

        Matrix attn_out(n, h);
        for (size_t i = 0; i < n; ++i) {
            // visible set: all cached rows, then new rows allowed by the mask
            // (or causal j <= i); ascending order keeps summation deterministic
            for (int hd_i = 0; hd_i < n_heads; ++hd_i) {
                const size_t off = static_cast<size_t>(hd_i) * hd;
                scores.clear();
                double mx = -1e300;
                size_t limit = old_len + n;
                for (size_t j = 0; j < limit; ++j) {
                    bool vis;
                    if (j < old_len) vis = true;
                    else if (mask) vis = mask->at(i, j - old_len);
                    else vis = (j - old_len) <= i;
                    if (!vis) { scores.push_back(-1e300); continue; }
                    double s = 0.0;
                    const double* qrow = q.row(i).data() + off;
                    const double* krow = ck.row(j).data() + off;
                    for (size_t d = 0; d < hd; ++d) s += qrow[d] * krow[d];
                    s *= inv_scale;
                    scores.push_back(s);
                    mx = std::max(mx, s);
                }
                double denom = 0.0;
                for (double& s : scores) {
                    s = s <= -1e299 ? 0.0 : std::exp(s - mx);
                    denom += s;
                }
                double* orow = attn_out.row(i).data() + off;
                for (size_t j = 0; j < limit; ++j) {
                    if (scores[j] == 0.0) continue;
                    const double wj = scores[j] / denom;
                    const double* vrow = cv.row(j).data() + off;
                    for (size_t d = 0; d < hd; ++d) orow[d] += wj * vrow[d];
                }
            }
        }
        Matrix proj = matmul(attn_out, L.wo);
        for (size_t i = 0; i < n; ++i)
            for (size_t d = 0; d < h; ++d) x.at(i, d) += proj.at(i, d);

        // MLP, pre-norm
        Matrix mlp_in(n, h);
        for (size_t i = 0; i < n; ++i) {
            auto norm = rms_normalize(x.row(i), L.mlp_gain, kRmsEps);
            std::memcpy(mlp_in.row(i).data(), norm.data(), h * sizeof(double));
        }
        Matrix hidden = matmul(mlp_in, L.w1);
        for (double& vv : hidden.data) vv = gelu(vv);
        Matrix mlp_out = matmul(hidden, L.w2);
        for (size_t i = 0; i < n; ++i)
            for (size_t d = 0; d < h; ++d) x.at(i, d) += mlp_out.at(i, d);
    }

    cache.len = old_len + n;

    ForwardResult out;
    out.features = Matrix(n, h);
    for (size_t i = 0; i < n; ++i) {
        auto f = rms_normalize(x.row(i), w_.final_gain, kRmsEps);
        std::memcpy(out.features.row(i).data(), f.data(), h * sizeof(double));
    }
    out.logits = matmul(out.features, w_.lm_head);
    if (!all_finite(out.logits.data)) throw NumericError("forward: non-finite logits");
    return out;
}

std::vector<double> Model::embed(int token) const {
    if (token < 0 || token >= spec_.vocab_size) throw ArgError("embed: token id out of range");
    auto r = w_.tok_emb.row(static_cast<size_t>(token));
    return {r.begin(), r.end()};
}

std::vector<double> Model::lm_logits(std::span<const double> feature) const {
    return vecmat(feature, w_.lm_head);
}

const ProbDist& TabularModel::next_dist(int context_token) const {
    if (context_token < 0 || context_token >= vocab)
        throw ModelError("tabular: context token out of range");
    return rows[static_cast<size_t>(context_token)];
}

void TabularModel::validate() const {
    if (static_cast<int>(rows.size()) != vocab)
        throw ModelError("tabular: row count != vocab");
    for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != vocab)
            throw ModelError("tabular: row width != vocab");
        double sum = 0.0;
        for (size_t i = 0; i < r.size(); ++i) {
            if (r[i] < 0.0 || r[i] > 1.0) throw ModelError("tabular: entry outside [0,1]");
            sum += r[i];
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ModelError("tabular: row does not sum to 1");
    }
}

TabularModel random_table(int vocab, uint64_t seed, double concentration) {
    TabularModel t;
    t.vocab = vocab;
    t.rows.reserve(static_cast<size_t>(vocab));
    Rng rng(seed, /*stream=*/0x7ab1ull);
    for (int c = 0; c < vocab; ++c) {
        std::vector<double> row(static_cast<size_t>(vocab));
        double sum = 0.0;
        for (double& p : row) {
            double u = rng.uniform();
            p = std::pow(u + 1e-9, 1.0 / concentration);
            sum += p;
        }
        for (double& p : row) p /= sum;
        t.rows.emplace_back(std::move(row));
    }
    return t;
}

TransformerBackend::TransformerBackend(const Model& model) : model_(model) {
    cache_.init(model.spec().n_layers, model.spec().hidden_dim, model.spec().context_limit);
}

ForwardResult TransformerBackend::forward(std::span<const int> tokens, const TreeMask* mask,
                                          std::span<const int> positions) {
    return model_.forward(tokens, cache_, mask, positions);
}

void TransformerBackend::keep(size_t prefix, std::span<const size_t> extra_rows) {
    cache_.keep(prefix, extra_rows);
}

void TransformerBackend::reset() { cache_.len = 0; }

ForwardResult TabularBackend::forward(std::span<const int> tokens, const TreeMask* mask,
                                      std::span<const int> positions) {
    // Order-1 table: the next-token scores depend only on the fed token itself, so
    // tree masks and positions need no special handling here.
    (void)mask;
    (void)positions;
    ForwardResult out;
    out.features = Matrix(0, 0);
    out.logits = Matrix(tokens.size(), static_cast<size_t>(table_.vocab));
    for (size_t i = 0; i < tokens.size(); ++i) {
        const ProbDist& row = table_.next_dist(tokens[i]);
        for (size_t j = 0; j < row.size(); ++j)
            out.logits.at(i, j) = row[j] > 0.0 ? std::log(row[j])
                                               : -std::numeric_limits<double>::infinity();
    }
    len_ += tokens.size();
    return out;
}

void TabularBackend::keep(size_t prefix, std::span<const size_t> extra_rows) {
    len_ = prefix + extra_rows.size();
}

} // namespace s4c
