// SPDX-License-Identifier: Apache-2.0

#include "resadapt/embedding.hpp"

#include "resadapt/error.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <string>

namespace resadapt {

Matrix::Matrix(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim), data_(rows * dim, 0.0f) {}

Matrix::Matrix(std::size_t rows, std::size_t dim, std::vector<float> data)
    : rows_(rows), dim_(dim), data_(std::move(data)) {
    if (data_.size() != rows_ * dim_) {
        throw Error(ErrorCode::SizeMismatch, "matrix data holds " + std::to_string(data_.size()) +
                                                 " values, expected " + std::to_string(rows_ * dim_));
    }
    for (float v : data_) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::NonFiniteValue, "matrix contains a non-finite entry");
        }
    }
}

std::span<float> Matrix::row(std::size_t i) {
    return std::span<float>(data_).subspan(i * dim_, dim_);
}

std::span<const float> Matrix::row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
}

bool operator==(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        return false;
    }
    // Bitwise, so -0.0f and 0.0f differ and NaNs (which never occur) would match.
    return std::equal(a.data_.begin(), a.data_.end(), b.data_.begin(), [](float x, float y) {
        return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y);
    });
}

Temperature::Temperature(double tau) : tau_(tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw Error(ErrorCode::InvalidArgument, "temperature must be positive and finite, got " +
                                                    std::to_string(tau));
    }
}

double dot(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimMismatch, "dot of lengths " + std::to_string(a.size()) + " and " +
                                                std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return s;
}

double norm(std::span<const float> a) {
    return std::sqrt(dot(a, a));
}

double cosine_sim(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimMismatch, "cosine of lengths " + std::to_string(a.size()) +
                                                " and " + std::to_string(b.size()));
    }
    double ab = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i];
        const double y = b[i];
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    const double na = std::sqrt(aa);
    const double nb = std::sqrt(bb);
    if (na <= kDegenerateNorm || nb <= kDegenerateNorm) {
        throw Error(ErrorCode::DegenerateVector, "cosine similarity of a near-zero vector");
    }
    return std::clamp(ab / (na * nb), -1.0, 1.0);
}

std::vector<double> softmax_scaled(std::span<const double> scores, Temperature tau) {
    if (scores.empty()) {
        throw Error(ErrorCode::InvalidArgument, "softmax of an empty score vector");
    }
    const double t = tau.value();
    const double top = *std::max_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp((scores[i] - top) / t);
        total += out[i];
    }
    for (double& p : out) {
        p /= total;
    }
    return out;
}

std::vector<float> l2_normalize(std::span<const float> a) {
    const double n = norm(a);
    if (n <= kDegenerateNorm) {
        throw Error(ErrorCode::DegenerateVector, "cannot normalize a near-zero vector");
    }
    std::vector<float> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = static_cast<float>(a[i] / n);
    }
    return out;
}

Matrix normalize_rows(const Matrix& m) {
    Matrix out(m.rows(), m.dim());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto unit = l2_normalize(m.row(i));
        std::copy(unit.begin(), unit.end(), out.row(i).begin());
    }
    return out;
}

Matrix concat_rows(std::span<const Matrix> parts) {
    if (parts.empty()) {
        return {};
    }
    std::size_t dim = parts.front().dim();
    for (const auto& p : parts) {
        if (!p.empty()) {
            dim = p.dim();
            break;
        }
    }
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (!p.empty() && p.dim() != dim) {
            throw Error(ErrorCode::DimMismatch, "cannot stack matrices of dimension " +
                                                    std::to_string(dim) + " and " +
                                                    std::to_string(p.dim()));
        }
        rows += p.rows();
    }
    Matrix out(rows, dim);
    auto dst = out.data().begin();
    for (const auto& p : parts) {
        dst = std::copy(p.data().begin(), p.data().end(), dst);
    }
    return out;
}

} // namespace resadapt
