// SPDX-License-Identifier: Apache-2.0

#include "resadapt/gradcheck.hpp"

#include "resadapt/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace resadapt::verify {

namespace {

std::vector<double> widen(std::span<const float> values) {
    return {values.begin(), values.end()};
}

} // namespace

double shadow_loss(const std::vector<double>& bank, std::size_t dim, const std::vector<std::size_t>& rows,
                   const std::vector<ClassIndex>& labels, const std::vector<double>& adapted_anchors,
                   std::size_t classes, double tau) {
    if (rows.empty()) {
        return 0.0;
    }
    std::vector<double> anchor_norm(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        double sq = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            sq += adapted_anchors[c * dim + j] * adapted_anchors[c * dim + j];
        }
        anchor_norm[c] = std::sqrt(sq);
    }
    double total = 0.0;
    std::vector<double> logits(classes);
    for (std::size_t s = 0; s < rows.size(); ++s) {
        const double* f = &bank[rows[s] * dim];
        double ff = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            ff += f[j] * f[j];
        }
        const double f_norm = std::sqrt(ff);
        for (std::size_t c = 0; c < classes; ++c) {
            double fa = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                fa += f[j] * adapted_anchors[c * dim + j];
            }
            logits[c] = fa / (f_norm * anchor_norm[c]) / tau;
        }
        const double top = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double z : logits) {
            sum += std::exp(z - top);
        }
        total += top + std::log(sum) - logits[labels[s]];
    }
    return total / static_cast<double>(rows.size());
}

Matrix finite_difference_gradient(const Matrix& bank, const PseudoLabelSet& pseudo,
                                  const ClassAnchorSet& anchors, const TaskResidual& residual,
                                  double tau, double step, FdStencil stencil) {
    const std::size_t k = anchors.num_classes();
    const std::size_t d = anchors.dim();
    const auto shadow_bank = widen(bank.data());
    // Centered on the 32-bit sum t + r that the production path evaluates;
    // d(t + r)/dr is the identity, so perturbing the sum perturbs r.
    const auto center = widen(adapted_anchors(anchors, residual).anchors.data());
    std::vector<double> adapted = center;

    auto loss_at = [&](std::size_t i, double offset) {
        adapted[i] = center[i] + offset;
        const double value =
            shadow_loss(shadow_bank, d, pseudo.sample_indices, pseudo.labels, adapted, k, tau);
        adapted[i] = center[i];
        return value;
    };

    Matrix grad(k, d);
    for (std::size_t i = 0; i < adapted.size(); ++i) {
        double estimate = 0.0;
        if (stencil == FdStencil::three_point) {
            estimate = (loss_at(i, step) - loss_at(i, -step)) / (2.0 * step);
        } else {
            estimate = (8.0 * (loss_at(i, step) - loss_at(i, -step)) -
                        (loss_at(i, 2.0 * step) - loss_at(i, -2.0 * step))) /
                       (12.0 * step);
        }
        grad.data()[i] = static_cast<float>(estimate);
    }
    return grad;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
    if (options.max_classes < 2 || options.max_dim < 2 || options.max_samples < 1) {
        throw Error(ErrorCode::ConfigInvalid, "gradcheck sizes need K >= 2, D >= 2, N >= 1");
    }
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto uniform_size = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };

    GradcheckReport report;
    for (std::size_t inst = 0; inst < options.instances; ++inst) {
        const std::size_t k = uniform_size(2, options.max_classes);
        const std::size_t d = uniform_size(2, options.max_dim);
        const std::size_t n = uniform_size(1, options.max_samples);
        const double tau = std::uniform_real_distribution<double>(0.5, 2.0)(rng);

        auto random_matrix = [&](std::size_t rows, double scale) {
            Matrix m(rows, d);
            for (float& v : m.data()) {
                v = static_cast<float>(scale * gauss(rng));
            }
            return m;
        };
        const Matrix bank = random_matrix(n, 1.0);
        ClassAnchorSet anchors;
        anchors.anchors = normalize_rows(random_matrix(k, 1.0));
        for (std::size_t c = 0; c < k; ++c) {
            anchors.class_names.push_back("c" + std::to_string(c));
            anchors.prompt_keys.push_back(anchors.class_names.back());
        }
        const TaskResidual residual{random_matrix(k, 0.1 / std::sqrt(static_cast<double>(d)))};

        PseudoLabelSet pseudo;
        pseudo.total_candidates = n;
        for (std::size_t s = 0; s < n; ++s) {
            pseudo.sample_indices.push_back(s);
            pseudo.labels.push_back(static_cast<ClassIndex>(uniform_size(0, k - 1)));
            pseudo.confidences.push_back(1.0);
        }

        Matrix analytic = loss_gradient(bank, pseudo, anchors, residual, Temperature(tau));
        if (options.inject_sign_flip) {
            for (float& v : analytic.data()) {
                v = -v;
            }
        }
        const Matrix numeric = finite_difference_gradient(bank, pseudo, anchors, residual, tau, options.step,
                                                          options.stencil);

        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                const double fd = numeric(r, c);
                if (std::abs(fd) <= options.fd_floor) {
                    continue;
                }
                const double rel = std::abs(analytic(r, c) - fd) / std::abs(fd);
                ++report.coordinates_checked;
                if (rel >= options.tolerance) {
                    ++report.violations;
                }
                if (report.coordinates_checked == 1 || rel > report.worst.relative_error) {
                    report.worst = {inst, r, c, analytic(r, c), fd, rel};
                }
            }
        }
        ++report.instances;
    }
    return report;
}

} // namespace resadapt::verify
