#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace s4c {

// Dense row-major matrix of doubles. All kernels below use fixed loop orders so
// repeated runs accumulate in exactly the same order (bit-reproducibility).
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    double at(size_t r, size_t c) const { return data[r * cols + c]; }

    std::span<double> row(size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(size_t r) const { return {data.data() + r * cols, cols}; }

    bool empty() const { return rows == 0 || cols == 0; }
};

// Probability vector: entries in [0,1], sums to 1 within 1e-12 of construction.
struct ProbDist {
    std::vector<double> p;

    ProbDist() = default;
    explicit ProbDist(std::vector<double> v) : p(std::move(v)) {}
    explicit ProbDist(size_t n) : p(n, 0.0) {}

    size_t size() const { return p.size(); }
    double operator[](size_t i) const { return p[i]; }
    double& operator[](size_t i) { return p[i]; }
    std::span<const double> span() const { return {p.data(), p.size()}; }
};

// c = a * b with i-k-j loops; the k-sum for every output element runs in ascending
// index order on every call.
Matrix matmul(const Matrix& a, const Matrix& b);

// out[r] = x * m  (x treated as a 1 x m.rows row vector)
std::vector<double> vecmat(std::span<const double> x, const Matrix& m);

// Temperature softmax over raw scores. temperature == 0 returns a one-hot argmax
// distribution, ties broken toward the lowest index. temperature < 0 is an error.
ProbDist softmax(std::span<const double> logits, double temperature);

// Top-k (token, probability) pairs sorted by probability descending, ties broken by
// ascending token id. k must be in [1, size].
std::vector<std::pair<int, double>> top_k(const ProbDist& dist, int k);

// y_i = x_i * gain_i / sqrt(mean(x^2) + eps)
std::vector<double> rms_normalize(std::span<const double> x, std::span<const double> gain,
                                  double eps);

// Distribution raised to 1/temperature and renormalized (softmax over its logs).
// temperature 1 is a copy, 0 is one-hot argmax.
ProbDist temper(const ProbDist& dist, double temperature);

// argmax with lowest-index tie-break.
int argmax(std::span<const double> v);

// Renormalize in place to sum 1. Throws if total mass is not positive.
void normalize(std::vector<double>& v);

// FNV-1a over the raw bytes of a double span; used for frozen-weight assertions.
uint64_t checksum(std::span<const double> v);
uint64_t checksum(const Matrix& m);

bool all_finite(std::span<const double> v);

} // namespace s4c
