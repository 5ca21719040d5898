#include <cmath>
#include <vector>

#include "doctest.h"
#include "s4c/errors.hpp"
#include "s4c/tensor.hpp"

using namespace s4c;

TEST_CASE("matrix: zero init and row access") {
    Matrix m(2, 3);
    CHECK(m.rows == 2);
    CHECK(m.cols == 3);
    for (double v : m.data) CHECK(v == 0.0);
    m.at(1, 2) = 5.0;
    CHECK(m.row(1)[2] == 5.0);
}

TEST_CASE("matmul: hand oracle") {
    Matrix a(2, 2), b(2, 2);
    a.at(0, 0) = 1; a.at(0, 1) = 2; a.at(1, 0) = 3; a.at(1, 1) = 4;
    b.at(0, 0) = 5; b.at(0, 1) = 6; b.at(1, 0) = 7; b.at(1, 1) = 8;
    Matrix c = matmul(a, b);
    CHECK(c.at(0, 0) == 19);
    CHECK(c.at(0, 1) == 22);
    CHECK(c.at(1, 0) == 43);
    CHECK(c.at(1, 1) == 50);
}

TEST_CASE("vecmat matches matmul row") {
    Matrix m(3, 2);
    for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = double(i) * 0.5 - 1.0;
    std::vector<double> x{1.0, -2.0, 3.0};
    auto y = vecmat(x, m);
    REQUIRE(y.size() == 2);
    for (size_t j = 0; j < 2; ++j) {
        double want = 0.0;
        for (size_t k = 0; k < 3; ++k) want += x[k] * m.at(k, j);
        CHECK(y[j] == doctest::Approx(want).epsilon(1e-15));
    }
}

TEST_CASE("softmax: frozen two-logit values") {
    // logits (1, 3): probabilities 1/(1+e^2) and e^2/(1+e^2)
    std::vector<double> logits{1.0, 3.0};
    ProbDist p = softmax(logits, 1.0);
    CHECK(p[0] == doctest::Approx(0.1192029220221175).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.8807970779778825).epsilon(1e-12));
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("softmax: temperature semantics") {
    std::vector<double> logits{2.0, 1.0, -1.0};
    SUBCASE("zero gives one-hot argmax") {
        ProbDist p = softmax(logits, 0.0);
        CHECK(p[0] == 1.0);
        CHECK(p[1] == 0.0);
        CHECK(p[2] == 0.0);
    }
    SUBCASE("low temperature sharpens") {
        ProbDist hot = softmax(logits, 1.0);
        ProbDist cold = softmax(logits, 0.25);
        CHECK(cold[0] > hot[0]);
    }
    SUBCASE("large shared offset does not overflow") {
        std::vector<double> shifted{2000.0, 1999.0, 1997.0};
        ProbDist base = softmax(logits, 1.0);
        ProbDist shift = softmax(shifted, 1.0);
        for (size_t i = 0; i < 3; ++i)
            CHECK(base[i] == doctest::Approx(shift[i]).epsilon(1e-12));
    }
    SUBCASE("negative temperature throws") {
        CHECK_THROWS_AS(softmax(logits, -0.5), ArgError);
    }
}

TEST_CASE("softmax: tie at temperature zero breaks to the lowest index") {
    std::vector<double> logits{4.0, 4.0, 1.0};
    ProbDist p = softmax(logits, 0.0);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 0.0);
}

TEST_CASE("temper: closed-form square at temperature one half") {
    ProbDist d(std::vector<double>{0.8, 0.2});
    ProbDist t = temper(d, 0.5);
    double z = 0.64 + 0.04;
    CHECK(t[0] == doctest::Approx(0.64 / z).epsilon(1e-12));
    CHECK(t[1] == doctest::Approx(0.04 / z).epsilon(1e-12));
    ProbDist copy = temper(d, 1.0);
    CHECK(copy[0] == doctest::Approx(0.8).epsilon(1e-12));
    ProbDist hard = temper(d, 0.0);
    CHECK(hard[0] == 1.0);
    CHECK(hard[1] == 0.0);
}

TEST_CASE("top_k: ordering and tie-break") {
    ProbDist d(std::vector<double>{0.1, 0.4, 0.4, 0.1});
    auto top = top_k(d, 3);
    REQUIRE(top.size() == 3);
    CHECK(top[0].first == 1);  // tie 0.4/0.4 broken to lower token id
    CHECK(top[1].first == 2);
    CHECK(top[2].first == 0);  // tie 0.1/0.1 broken to lower token id
    CHECK_THROWS_AS(top_k(d, 0), ArgError);
    CHECK_THROWS_AS(top_k(d, 5), ArgError);
}

TEST_CASE("argmax: lowest-index tie break") {
    std::vector<double> v{1.0, 3.0, 3.0};
    CHECK(argmax(v) == 1);
}

TEST_CASE("rms_normalize: direct formula oracle") {
    std::vector<double> x{3.0, 4.0};
    std::vector<double> g{2.0, 0.5};
    double eps = 1e-5;
    auto y = rms_normalize(x, g, eps);
    double r = std::sqrt((9.0 + 16.0) / 2.0 + eps);
    CHECK(y[0] == doctest::Approx(3.0 * 2.0 / r).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(4.0 * 0.5 / r).epsilon(1e-14));
}

TEST_CASE("normalize: sums to one, rejects nonpositive mass") {
    std::vector<double> v{1.0, 3.0};
    normalize(v);
    CHECK(v[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(v[1] == doctest::Approx(0.75).epsilon(1e-15));
    std::vector<double> z{0.0, 0.0};
    CHECK_THROWS_AS(normalize(z), NumericError);
}

TEST_CASE("checksum: sensitive to single-entry changes, stable across calls") {
    Matrix m(2, 2);
    m.data = {1.0, 2.0, 3.0, 4.0};
    uint64_t c1 = checksum(m);
    CHECK(c1 == checksum(m));
    m.at(1, 1) += 1e-9;
    CHECK(checksum(m) != c1);
}

TEST_CASE("all_finite flags inf and nan") {
    std::vector<double> ok{1.0, -2.0};
    CHECK(all_finite(ok));
    std::vector<double> bad{1.0, std::nan("")};
    CHECK(!all_finite(bad));
}
