// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "resadapt/embedding.hpp"
#include "resadapt/self_training.hpp"

#include <cstdint>
#include <vector>

namespace resadapt::verify {

/// Self-training loss evaluated entirely in 64-bit arithmetic on shadow
/// copies. Shares no code with the production loss path.
double shadow_loss(const std::vector<double>& bank, std::size_t dim,
                   const std::vector<std::size_t>& rows, const std::vector<ClassIndex>& labels,
                   const std::vector<double>& adapted_anchors, std::size_t classes, double tau);

enum class FdStencil {
    /// (L(x+h) - L(x-h)) / 2h, truncation error of order h^2.
    three_point,
    /// (8(L(x+h) - L(x-h)) - (L(x+2h) - L(x-2h))) / 12h, truncation of order h^4.
    five_point,
};

/// Central finite differences of shadow_loss with respect to every
/// residual coordinate, centered on the 32-bit adapted anchors.
Matrix finite_difference_gradient(const Matrix& bank, const PseudoLabelSet& pseudo,
                                  const ClassAnchorSet& anchors, const TaskResidual& residual,
                                  double tau, double step, FdStencil stencil = FdStencil::five_point);

struct GradcheckOptions {
    std::uint64_t seed = 0;
    std::size_t instances = 20;
    std::size_t max_classes = 5;
    std::size_t max_dim = 16;
    std::size_t max_samples = 32;
    double step = 1e-3;
    FdStencil stencil = FdStencil::five_point;
    double tolerance = 1e-4;
    double fd_floor = 1e-8;
    /// Negates the analytic gradient before comparison. Negative control.
    bool inject_sign_flip = false;
};

struct CoordinateError {
    std::size_t instance = 0;
    std::size_t row = 0;
    std::size_t col = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double relative_error = 0.0;
};

struct GradcheckReport {
    std::size_t instances = 0;
    std::size_t coordinates_checked = 0;
    std::size_t violations = 0;
    CoordinateError worst;

    bool passed() const noexcept { return violations == 0; }
};

GradcheckReport run_gradcheck(const GradcheckOptions& options);

} // namespace resadapt::verify
