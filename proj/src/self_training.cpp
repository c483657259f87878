// SPDX-License-Identifier: Apache-2.0

#include "resadapt/self_training.hpp"

#include "resadapt/error.hpp"
#include "resadapt/parallel.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

namespace resadapt {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) {
        throw Error(ErrorCode::DimMismatch,
                    std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.dim()) +
                        " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.dim()));
    }
}

void require_bank_matches(const Matrix& bank, const ClassAnchorSet& anchors) {
    if (!bank.empty() && bank.dim() != anchors.dim()) {
        throw Error(ErrorCode::DimMismatch, "bank dimension " + std::to_string(bank.dim()) +
                                                " vs anchor dimension " + std::to_string(anchors.dim()));
    }
}

// -log p_label. Uses the probability directly when it is a normal number so
// the zero-residual loss reproduces the classifier's own probabilities; falls
// back to log-sum-exp when the probability has underflowed.
double negative_log_prob(std::span<const double> scores, std::span<const double> probs,
                         ClassIndex label, double tau) {
    if (probs[label] >= DBL_MIN) {
        return -std::log(probs[label]);
    }
    const double top = *std::max_element(scores.begin(), scores.end());
    double total = 0.0;
    for (double s : scores) {
        total += std::exp((s - top) / tau);
    }
    return -((scores[label] - top) / tau) + std::log(total);
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size,
                                                       std::mt19937_64& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t begin = 0; begin < n; begin += batch_size) {
        const std::size_t end = std::min(n, begin + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

} // namespace

PseudoLabelSet PseudoLabelSet::subset(std::span<const std::size_t> positions) const {
    PseudoLabelSet out;
    out.gamma = gamma;
    out.total_candidates = total_candidates;
    out.max_confidence = max_confidence;
    out.sample_indices.reserve(positions.size());
    out.labels.reserve(positions.size());
    out.confidences.reserve(positions.size());
    for (std::size_t p : positions) {
        out.sample_indices.push_back(sample_indices.at(p));
        out.labels.push_back(labels.at(p));
        out.confidences.push_back(confidences.at(p));
    }
    return out;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); };
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        fail("gamma must lie in [0, 1], got " + std::to_string(gamma));
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        fail("learning rate must be positive, got " + std::to_string(learning_rate));
    }
    if (batch_size < 1) {
        fail("batch size must be at least 1");
    }
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        fail("tau must be positive, got " + std::to_string(tau));
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        fail("adam betas must lie in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) {
        fail("adam epsilon must be positive");
    }
}

PseudoLabelSet generate_pseudo_labels(const Matrix& bank, const ClassAnchorSet& anchors,
                                      Temperature tau, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "gamma must lie in [0, 1], got " + std::to_string(gamma));
    }
    require_bank_matches(bank, anchors);
    const auto predictions = classify_batch(bank, anchors, tau);

    PseudoLabelSet out;
    out.gamma = gamma;
    out.total_candidates = bank.rows();
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& p = predictions[i];
        out.max_confidence = std::max(out.max_confidence, p.confidence);
        if (p.confidence >= gamma) {
            out.sample_indices.push_back(i);
            out.labels.push_back(p.label);
            out.confidences.push_back(p.confidence);
        }
    }
    return out;
}

ClassAnchorSet adapted_anchors(const ClassAnchorSet& anchors, const TaskResidual& residual) {
    require_same_shape(anchors.anchors, residual.values, "residual shape");
    ClassAnchorSet out = anchors;
    auto dst = out.anchors.data();
    const auto add = residual.values.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += add[i];
    }
    return out;
}

LossGradient loss_and_gradient(const Matrix& bank, const PseudoLabelSet& pseudo,
                               const ClassAnchorSet& adapted, Temperature tau) {
    const std::size_t k = adapted.num_classes();
    const std::size_t d = adapted.dim();
    LossGradient out{0.0, Matrix(k, d)};
    if (pseudo.empty()) {
        return out;
    }
    require_bank_matches(bank, adapted);
    if (pseudo.labels.size() != pseudo.size()) {
        throw Error(ErrorCode::LengthMismatch, "pseudo-label set has inconsistent lengths");
    }
    const std::size_t n = pseudo.size();
    for (std::size_t s = 0; s < n; ++s) {
        if (pseudo.sample_indices[s] >= bank.rows() || pseudo.labels[s] >= k) {
            throw Error(ErrorCode::InvalidArgument, "pseudo-label entry out of range");
        }
    }

    std::vector<double> anchor_norm(k);
    for (std::size_t c = 0; c < k; ++c) {
        anchor_norm[c] = norm(adapted.anchors.row(c));
        if (anchor_norm[c] <= kDegenerateNorm) {
            throw Error(ErrorCode::DegenerateVector,
                        "adapted anchor for class \"" + adapted.class_names.at(c) + "\" is near zero");
        }
    }

    const double t = tau.value();
    // Per sample: cosine scores, softmax-derived coefficients and inverse norm.
    std::vector<double> cosines(n * k);
    std::vector<double> coeffs(n * k);
    std::vector<double> inv_norm(n);
    std::vector<double> sample_loss(n);
    parallel_for(n, 64, [&](std::size_t begin, std::size_t end) {
        std::vector<double> scores(k);
        for (std::size_t s = begin; s < end; ++s) {
            const auto f = bank.row(pseudo.sample_indices[s]);
            for (std::size_t c = 0; c < k; ++c) {
                scores[c] = cosine_sim(f, adapted.anchors.row(c));
            }
            const auto probs = softmax_scaled(scores, tau);
            const ClassIndex y = pseudo.labels[s];
            sample_loss[s] = negative_log_prob(scores, probs, y, t);
            inv_norm[s] = 1.0 / norm(f);
            for (std::size_t c = 0; c < k; ++c) {
                cosines[s * k + c] = scores[c];
                coeffs[s * k + c] = (probs[c] - (c == y ? 1.0 : 0.0)) / t;
            }
        }
    });

    double total = 0.0;
    for (double l : sample_loss) {
        total += l;
    }
    out.loss = total / static_cast<double>(n);

    // d cos(f, a) / d a = (f/|f| - cos * a/|a|) / |a|, summed over samples in
    // index order for each class.
    const std::size_t class_grain = std::max<std::size_t>(1, 16384 / std::max<std::size_t>(1, n * d));
    parallel_for(k, class_grain, [&](std::size_t begin, std::size_t end) {
        std::vector<double> acc(d);
        for (std::size_t c = begin; c < end; ++c) {
            std::fill(acc.begin(), acc.end(), 0.0);
            double radial = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const double w = coeffs[s * k + c];
                const double wf = w * inv_norm[s];
                const auto f = bank.row(pseudo.sample_indices[s]);
                for (std::size_t j = 0; j < d; ++j) {
                    acc[j] += wf * static_cast<double>(f[j]);
                }
                radial += w * cosines[s * k + c];
            }
            const auto a = adapted.anchors.row(c);
            const double inv_a = 1.0 / anchor_norm[c];
            const double scale = inv_a / static_cast<double>(n);
            auto g = out.gradient.row(c);
            for (std::size_t j = 0; j < d; ++j) {
                const double unit_a = static_cast<double>(a[j]) * inv_a;
                g[j] = static_cast<float>(scale * (acc[j] - radial * unit_a));
            }
        }
    });
    return out;
}

double self_training_loss(const Matrix& bank, const PseudoLabelSet& pseudo,
                          const ClassAnchorSet& anchors, const TaskResidual& residual,
                          Temperature tau) {
    return loss_and_gradient(bank, pseudo, adapted_anchors(anchors, residual), tau).loss;
}

Matrix loss_gradient(const Matrix& bank, const PseudoLabelSet& pseudo, const ClassAnchorSet& anchors,
                     const TaskResidual& residual, Temperature tau) {
    return loss_and_gradient(bank, pseudo, adapted_anchors(anchors, residual), tau).gradient;
}

void adam_step(TaskResidual& residual, const Matrix& grad, OptimizerState& state,
               const TrainConfig& cfg) {
    require_same_shape(residual.values, grad, "gradient shape");
    require_same_shape(residual.values, state.first_moment, "first moment shape");
    require_same_shape(residual.values, state.second_moment, "second moment shape");

    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const auto step = static_cast<double>(state.step_count + 1);
    const double correction1 = 1.0 - std::pow(b1, step);
    const double correction2 = 1.0 - std::pow(b2, step);

    auto r = residual.values.data();
    auto m = state.first_moment.data();
    auto v = state.second_moment.data();
    const auto g = grad.data();
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double gi = g[i];
        const double mi = b1 * m[i] + (1.0 - b1) * gi;
        const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
        m[i] = static_cast<float>(mi);
        v[i] = static_cast<float>(vi);
        const double update = cfg.learning_rate * (mi / correction1) /
                              (std::sqrt(vi / correction2) + cfg.adam_epsilon);
        r[i] = static_cast<float>(r[i] - update);
    }
    ++state.step_count;
}

void optimizer_step(TaskResidual& residual, const Matrix& grad, OptimizerState& state,
                    const TrainConfig& cfg) {
    if (cfg.optimizer == Optimizer::adam) {
        adam_step(residual, grad, state, cfg);
        return;
    }
    require_same_shape(residual.values, grad, "gradient shape");
    auto r = residual.values.data();
    const auto g = grad.data();
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = static_cast<float>(r[i] - cfg.learning_rate * static_cast<double>(g[i]));
    }
    ++state.step_count;
}

TrainResult train_task_residual(const Matrix& bank, const ClassAnchorSet& anchors,
                                const TrainConfig& cfg) {
    cfg.validate();
    if (bank.empty()) {
        throw Error(ErrorCode::InvalidArgument, "cannot self-train on an empty bank");
    }
    require_bank_matches(bank, anchors);
    const Temperature tau(cfg.tau);

    TrainResult result;
    result.initial_pseudo_labels = generate_pseudo_labels(bank, anchors, tau, cfg.gamma);
    if (result.initial_pseudo_labels.empty()) {
        std::ostringstream msg;
        msg << "gamma=" << cfg.gamma << " filtered out all " << bank.rows()
            << " samples (max confidence " << result.initial_pseudo_labels.max_confidence << ")";
        throw Error(ErrorCode::NoRetainedSamples, msg.str());
    }

    result.residual = TaskResidual::zeros(anchors.num_classes(), anchors.dim());
    auto state = OptimizerState::fresh(anchors.num_classes(), anchors.dim());
    std::mt19937_64 rng(cfg.seed);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        PseudoLabelSet refreshed;
        const PseudoLabelSet* pseudo = &result.initial_pseudo_labels;
        if (cfg.refresh_pseudo_labels_each_epoch && epoch > 0) {
            refreshed = generate_pseudo_labels(bank, adapted_anchors(anchors, result.residual), tau,
                                               cfg.gamma);
            pseudo = &refreshed;
        }
        EpochLog entry{epoch, pseudo->size(), 0, 0.0};
        if (pseudo->empty()) {
            result.log.warnings.push_back("epoch " + std::to_string(epoch) +
                                          ": no retained samples, skipped");
            result.log.epochs.push_back(entry);
            continue;
        }
        double weighted = 0.0;
        for (const auto& batch : shuffled_batches(pseudo->size(), cfg.batch_size, rng)) {
            const auto sub = pseudo->subset(batch);
            const auto lg =
                loss_and_gradient(bank, sub, adapted_anchors(anchors, result.residual), tau);
            optimizer_step(result.residual, lg.gradient, state, cfg);
            result.log.step_losses.push_back(lg.loss);
            weighted += lg.loss * static_cast<double>(sub.size());
            ++entry.steps;
        }
        entry.mean_loss = weighted / static_cast<double>(pseudo->size());
        result.log.epochs.push_back(entry);
    }
    return result;
}

} // namespace resadapt
