// SPDX-License-Identifier: Apache-2.0
//
// Seeded generators shared by unit, CLI and acceptance tests.

#pragma once

#include "resadapt/embedding.hpp"
#include "resadapt/error.hpp"
#include "resadapt/self_training.hpp"
#include "resadapt/zeroshot.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace resadapt::testing {

using Rng = std::mt19937_64;

inline Matrix gaussian_matrix(std::size_t rows, std::size_t dim, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<float> data(rows * dim);
    for (float& x : data) {
        x = static_cast<float>(dist(rng));
    }
    return Matrix(rows, dim, std::move(data));
}

inline Matrix unit_matrix(std::size_t rows, std::size_t dim, Rng& rng) {
    return normalize_rows(gaussian_matrix(rows, dim, rng));
}

inline std::vector<std::string> class_names(std::size_t k) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < k; ++i) {
        names.push_back("c" + std::to_string(i));
    }
    return names;
}

inline ClassAnchorSet anchor_set(Matrix rows) {
    const std::size_t k = rows.rows();
    return make_anchor_set(class_names(k), std::move(rows), "a photo of a {class}");
}

inline ClassAnchorSet random_anchors(std::size_t k, std::size_t dim, Rng& rng) {
    return anchor_set(unit_matrix(k, dim, rng));
}

/// Every row of `bank` retained with a random label.
inline PseudoLabelSet random_pseudo_labels(std::size_t n, std::size_t k, Rng& rng) {
    PseudoLabelSet p;
    std::uniform_int_distribution<std::size_t> label(0, k - 1);
    for (std::size_t i = 0; i < n; ++i) {
        p.sample_indices.push_back(i);
        p.labels.push_back(static_cast<ClassIndex>(label(rng)));
        p.confidences.push_back(1.0);
    }
    p.gamma = 0.0;
    p.total_candidates = n;
    p.max_confidence = 1.0;
    return p;
}

inline std::size_t uniform_size(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Runs fn and returns the code of the resadapt::Error it throws, or
/// nullopt-like sentinel -1 when nothing is thrown.
template <class Fn>
int error_code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return static_cast<int>(e.code());
    }
    return -1;
}

inline int code(ErrorCode c) {
    return static_cast<int>(c);
}

} // namespace resadapt::testing
