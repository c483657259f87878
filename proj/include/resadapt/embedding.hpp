// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace resadapt {

/// Norms at or below this are treated as zero vectors.
inline constexpr double kDegenerateNorm = 1e-12;

/// Dense row-major matrix of 32-bit reals. Rows are embeddings (image
/// banks), class anchors or residual rows. All entries are finite.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t dim);
    Matrix(std::size_t rows, std::size_t dim, std::vector<float> data);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t dim() const noexcept { return dim_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<float> row(std::size_t i);
    std::span<const float> row(std::size_t i) const;

    float& operator()(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }
    float operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && dim_ == other.dim_;
    }

    /// Bitwise equality of shape and payload.
    friend bool operator==(const Matrix& a, const Matrix& b);

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<float> data_;
};

/// Softmax temperature; strictly positive.
class Temperature {
public:
    explicit Temperature(double tau);
    double value() const noexcept { return tau_; }

private:
    double tau_;
};

double dot(std::span<const float> a, std::span<const float> b);
double norm(std::span<const float> a);

/// Cosine similarity with 64-bit accumulation. Throws DimMismatch or
/// DegenerateVector.
double cosine_sim(std::span<const float> a, std::span<const float> b);

/// exp(s_i / tau) / sum_j exp(s_j / tau), max-subtracted.
std::vector<double> softmax_scaled(std::span<const double> scores, Temperature tau);

std::vector<float> l2_normalize(std::span<const float> a);

/// Returns a copy of m with every row rescaled to unit norm.
Matrix normalize_rows(const Matrix& m);

/// Stacks the rows of several matrices with a common dimension.
Matrix concat_rows(std::span<const Matrix> parts);

} // namespace resadapt
