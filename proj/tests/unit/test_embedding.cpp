// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace resadapt;
using namespace resadapt::testing;

namespace {

std::vector<float> vec(std::initializer_list<float> v) {
    return v;
}

} // namespace

TEST_CASE("cosine_sim on hand-checked vectors") {
    CHECK(cosine_sim(vec({1, 0}), vec({1, 0})) == 1.0);
    CHECK(cosine_sim(vec({1, 0}), vec({0, 1})) == 0.0);
    CHECK(cosine_sim(vec({3, 4}), vec({4, 3})) == doctest::Approx(0.96).epsilon(1e-12));
}

TEST_CASE("cosine_sim rejects bad input") {
    CHECK(error_code_of([] { cosine_sim(vec({1, 0}), vec({1, 0, 0})); }) == code(ErrorCode::DimMismatch));
    CHECK(error_code_of([] { cosine_sim(vec({0, 0}), vec({1, 0})); }) == code(ErrorCode::DegenerateVector));
    CHECK(error_code_of([] { cosine_sim(vec({1, 0}), vec({1e-13f, 0})); }) ==
          code(ErrorCode::DegenerateVector));
}

TEST_CASE("cosine_sim symmetry, bound and scale invariance") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = uniform_size(rng, 1, 64);
        const auto m = gaussian_matrix(2, d, rng);
        const auto a = m.row(0);
        const auto b = m.row(1);
        const double ab = cosine_sim(a, b);
        CHECK(ab == cosine_sim(b, a));
        CHECK(std::abs(ab) <= 1.0 + 1e-6);
        std::vector<float> scaled(a.begin(), a.end());
        for (float& x : scaled) {
            x *= 37.5f;
        }
        CHECK(cosine_sim(scaled, b) == doctest::Approx(ab).epsilon(1e-6));
    }
}

TEST_CASE("softmax_scaled matches high-precision values") {
    const std::vector<double> s{1.0, 0.0};
    const auto p = softmax_scaled(s, Temperature(1.0));
    CHECK(p[0] == doctest::Approx(0.7310585786300048792).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.2689414213699951207).epsilon(1e-15));

    const auto sharp = softmax_scaled(s, Temperature(0.01));
    CHECK(sharp[0] == 1.0);
    CHECK(sharp[1] < 1e-40);
    CHECK(sharp[1] == doctest::Approx(3.720075976020835963e-44).epsilon(1e-12));

    for (double c : {-5.0, 0.0, 0.3, 100.0}) {
        const std::vector<double> flat{c, c, c};
        for (double v : softmax_scaled(flat, Temperature(1.0))) {
            CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        }
    }
}

TEST_CASE("softmax_scaled survives CLIP-scale logits") {
    const std::vector<double> s{1.0, -1.0, 0.5};
    const auto p = softmax_scaled(s, Temperature(1e-4));
    CHECK(std::isfinite(p[0]));
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 0.0);
}

TEST_CASE("softmax_scaled properties") {
    Rng rng(2);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = uniform_size(rng, 1, 12);
        std::vector<double> s(k);
        for (double& x : s) {
            x = dist(rng);
        }
        const Temperature tau(std::uniform_real_distribution<double>(0.05, 3.0)(rng));
        const auto p = softmax_scaled(s, tau);
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
        for (double v : p) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }

        auto shifted = s;
        for (double& x : shifted) {
            x += 4.25;
        }
        const auto q = softmax_scaled(shifted, tau);
        for (std::size_t i = 0; i < k; ++i) {
            CHECK(q[i] == doctest::Approx(p[i]).epsilon(1e-6));
        }

        if (k > 1) {
            const auto colder = softmax_scaled(s, Temperature(tau.value() * 0.5));
            CHECK(*std::max_element(colder.begin(), colder.end()) >
                  *std::max_element(p.begin(), p.end()));
        }
    }
}

TEST_CASE("Temperature must be positive and finite") {
    CHECK(error_code_of([] { Temperature(0.0); }) == code(ErrorCode::InvalidArgument));
    CHECK(error_code_of([] { Temperature(-1.0); }) == code(ErrorCode::InvalidArgument));
    CHECK(error_code_of([] { Temperature(std::nan("")); }) == code(ErrorCode::InvalidArgument));
    CHECK(Temperature(0.01).value() == 0.01);
}

TEST_CASE("l2_normalize") {
    const auto a = l2_normalize(vec({2, 0}));
    CHECK(a[0] == 1.0f);
    CHECK(a[1] == 0.0f);
    const auto b = l2_normalize(vec({1, 1}));
    CHECK(b[0] == doctest::Approx(0.70710678118654752).epsilon(1e-6));
    CHECK(b[1] == doctest::Approx(0.70710678118654752).epsilon(1e-6));
    CHECK(error_code_of([] { l2_normalize(vec({0, 0})); }) == code(ErrorCode::DegenerateVector));

    Rng rng(3);
    const auto m = gaussian_matrix(50, 17, rng, 5.0);
    const auto n = normalize_rows(m);
    for (std::size_t i = 0; i < n.rows(); ++i) {
        CHECK(norm(n.row(i)) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(cosine_sim(n.row(i), m.row(i)) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("Matrix validates shape and finiteness") {
    CHECK(error_code_of([] { Matrix(2, 3, std::vector<float>(5)); }) == code(ErrorCode::SizeMismatch));
    CHECK(error_code_of([] { Matrix(1, 2, std::vector<float>{1.0f, INFINITY}); }) ==
          code(ErrorCode::NonFiniteValue));
    CHECK(error_code_of([] { Matrix(1, 1, std::vector<float>{std::nanf("")}); }) ==
          code(ErrorCode::NonFiniteValue));
    Matrix m(2, 2);
    CHECK(m(1, 1) == 0.0f);
    m(1, 0) = 3.0f;
    CHECK(m.row(1)[0] == 3.0f);
}

TEST_CASE("concat_rows stacks in order") {
    Rng rng(4);
    const auto a = gaussian_matrix(3, 4, rng);
    const auto b = gaussian_matrix(2, 4, rng);
    const std::vector<Matrix> parts{a, Matrix(), b};
    const auto c = concat_rows(parts);
    REQUIRE(c.rows() == 5);
    CHECK(c.row(4)[3] == b.row(1)[3]);
    CHECK(c.row(0)[0] == a.row(0)[0]);
    const std::vector<Matrix> bad{a, gaussian_matrix(1, 5, rng)};
    CHECK(error_code_of([&] { concat_rows(bad); }) == code(ErrorCode::DimMismatch));
}
