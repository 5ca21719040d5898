#include "s4c/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "s4c/errors.hpp"

namespace s4c {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols) +
                         " vs " + std::to_string(b.rows) + ")");
    Matrix c(a.rows, b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
        double* crow = c.data.data() + i * c.cols;
        const double* arow = a.data.data() + i * a.cols;
        for (size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.data.data() + k * b.cols;
            for (size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

std::vector<double> vecmat(std::span<const double> x, const Matrix& m) {
    if (x.size() != m.rows)
        throw ShapeError("vecmat: vector length " + std::to_string(x.size()) +
                         " vs matrix rows " + std::to_string(m.rows));
    std::vector<double> out(m.cols, 0.0);
    for (size_t k = 0; k < m.rows; ++k) {
        const double xk = x[k];
        const double* mrow = m.data.data() + k * m.cols;
        for (size_t j = 0; j < m.cols; ++j) out[j] += xk * mrow[j];
    }
    return out;
}

ProbDist softmax(std::span<const double> logits, double temperature) {
    if (logits.empty()) throw ShapeError("softmax: empty input");
    if (temperature < 0.0) throw ArgError("softmax: negative temperature");
    ProbDist out(logits.size());
    if (temperature == 0.0) {
        out.p[static_cast<size_t>(argmax(logits))] = 1.0;
        return out;
    }
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        // -inf logits (impossible tokens) map cleanly to 0 mass
        double e = std::isinf(logits[i]) && logits[i] < 0.0
                       ? 0.0
                       : std::exp((logits[i] - mx) / temperature);
        out.p[i] = e;
        sum += e;
    }
    if (!(sum > 0.0) || !std::isfinite(sum))
        throw NumericError("softmax: non-finite or zero normalizer");
    for (double& v : out.p) v /= sum;
    return out;
}

std::vector<std::pair<int, double>> top_k(const ProbDist& dist, int k) {
    if (k < 1 || static_cast<size_t>(k) > dist.size())
        throw ArgError("top_k: k out of range");
    std::vector<int> idx(dist.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (dist[a] != dist[b]) return dist[a] > dist[b];
        return a < b;
    });
    std::vector<std::pair<int, double>> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) out.emplace_back(idx[i], dist[idx[i]]);
    return out;
}

std::vector<double> rms_normalize(std::span<const double> x, std::span<const double> gain,
                                  double eps) {
    if (x.size() != gain.size()) throw ShapeError("rms_normalize: gain length mismatch");
    if (x.empty()) throw ShapeError("rms_normalize: empty input");
    double ms = 0.0;
    for (double v : x) ms += v * v;
    ms /= static_cast<double>(x.size());
    double inv = 1.0 / std::sqrt(ms + eps);
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * gain[i] * inv;
    return out;
}

ProbDist temper(const ProbDist& dist, double temperature) {
    if (temperature < 0.0) throw ArgError("temper: negative temperature");
    if (temperature == 1.0) return dist;
    std::vector<double> logs(dist.size());
    for (size_t i = 0; i < dist.size(); ++i)
        logs[i] = dist[i] > 0.0 ? std::log(dist[i]) : -std::numeric_limits<double>::infinity();
    if (temperature == 0.0) {
        // argmax over the original masses, lowest-id tie-break
        ProbDist out(dist.size());
        out.p[static_cast<size_t>(argmax(dist.span()))] = 1.0;
        return out;
    }
    return softmax(logs, temperature);
}

int argmax(std::span<const double> v) {
    if (v.empty()) throw ShapeError("argmax: empty input");
    size_t best = 0;
    for (size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return static_cast<int>(best);
}

void normalize(std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    if (!(sum > 0.0)) throw NumericError("normalize: non-positive total mass");
    for (double& x : v) x /= sum;
}

uint64_t checksum(std::span<const double> v) {
    uint64_t h = 0xcbf29ce484222325ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (size_t i = 0; i < v.size() * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t checksum(const Matrix& m) { return checksum(std::span<const double>(m.data)); }

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace s4c
