// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "resadapt/embedding.hpp"
#include "resadapt/zeroshot.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace resadapt {

/// Confident zero-shot predictions retained for self-training.
struct PseudoLabelSet {
    std::vector<std::size_t> sample_indices;
    std::vector<ClassIndex> labels;
    std::vector<double> confidences;
    double gamma = 0.0;
    std::size_t total_candidates = 0;
    /// Largest confidence seen over all candidates, retained or not.
    double max_confidence = 0.0;

    std::size_t size() const noexcept { return sample_indices.size(); }
    bool empty() const noexcept { return sample_indices.empty(); }

    /// Entries at the given positions; gamma and candidate count carried over.
    PseudoLabelSet subset(std::span<const std::size_t> positions) const;
};

/// Per-class additive offsets on the text anchors.
struct TaskResidual {
    Matrix values;

    static TaskResidual zeros(std::size_t classes, std::size_t dim) {
        return TaskResidual{Matrix(classes, dim)};
    }
};

enum class Optimizer {
    adam,
    /// Plain gradient descent; used by equivalence checks where adaptive
    /// moments would obscure the comparison.
    sgd,
};

struct TrainConfig {
    double learning_rate = 3e-4;
    std::size_t batch_size = 64;
    std::size_t epochs = 5;
    double gamma = 0.5;
    double tau = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    bool refresh_pseudo_labels_each_epoch = false;
    Optimizer optimizer = Optimizer::adam;

    /// Throws ConfigInvalid.
    void validate() const;
};

struct OptimizerState {
    Matrix first_moment;
    Matrix second_moment;
    std::uint64_t step_count = 0;

    static OptimizerState fresh(std::size_t classes, std::size_t dim) {
        return OptimizerState{Matrix(classes, dim), Matrix(classes, dim), 0};
    }
};

struct EpochLog {
    std::size_t epoch = 0;
    std::size_t retained = 0;
    std::size_t steps = 0;
    /// Mean per-sample loss measured on each batch before its update.
    double mean_loss = 0.0;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    /// Batch loss of every optimizer step, in order.
    std::vector<double> step_losses;
    std::vector<std::string> warnings;
};

/// Zero-shot pseudo-labels: sample i is kept iff max_k p(k | x_i) >= gamma.
PseudoLabelSet generate_pseudo_labels(const Matrix& bank, const ClassAnchorSet& anchors,
                                      Temperature tau, double gamma);

/// t'_i = t_i + r_i. Degenerate rows are reported when the result is used.
ClassAnchorSet adapted_anchors(const ClassAnchorSet& anchors, const TaskResidual& residual);

struct LossGradient {
    double loss = 0.0;
    /// d loss / d anchor row; identical to the gradient with respect to any
    /// residual added to that row.
    Matrix gradient;
};

/// Mean cross-entropy of the pseudo-labels under `adapted` anchors, and its
/// gradient with respect to each anchor row. The gradient differentiates
/// through the normalization inside the cosine similarity. Empty sets give a
/// zero loss and a zero gradient.
LossGradient loss_and_gradient(const Matrix& bank, const PseudoLabelSet& pseudo,
                               const ClassAnchorSet& adapted, Temperature tau);

double self_training_loss(const Matrix& bank, const PseudoLabelSet& pseudo,
                          const ClassAnchorSet& anchors, const TaskResidual& residual,
                          Temperature tau);

Matrix loss_gradient(const Matrix& bank, const PseudoLabelSet& pseudo, const ClassAnchorSet& anchors,
                     const TaskResidual& residual, Temperature tau);

/// Bias-corrected adaptive-moment update, in place.
void adam_step(TaskResidual& residual, const Matrix& grad, OptimizerState& state,
               const TrainConfig& cfg);

/// Dispatches on cfg.optimizer. SGD only advances step_count in `state`.
void optimizer_step(TaskResidual& residual, const Matrix& grad, OptimizerState& state,
                    const TrainConfig& cfg);

struct TrainResult {
    TaskResidual residual;
    TrainLog log;
    /// Pseudo-labels from the zero-residual anchors.
    PseudoLabelSet initial_pseudo_labels;
};

/// Self-training of a task residual on one unlabeled bank. Throws
/// NoRetainedSamples when gamma filters out every sample.
TrainResult train_task_residual(const Matrix& bank, const ClassAnchorSet& anchors,
                                const TrainConfig& cfg);

} // namespace resadapt
