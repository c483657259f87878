// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "resadapt/self_training.hpp"

#include <functional>
#include <string>
#include <vector>

namespace resadapt {

/// Unlabeled banks from several known domains.
struct MultiDomainBank {
    std::vector<Matrix> banks;
    std::vector<std::string> domain_names;

    std::size_t num_domains() const noexcept { return banks.size(); }

    /// >= 2 domains, unique names, one common dimension.
    void validate() const;
};

/// Shared residual plus one specific residual per training domain.
struct DisentangledResidual {
    Matrix shared;
    std::vector<Matrix> specific;
    std::vector<std::string> domain_names;

    static DisentangledResidual zeros(std::size_t classes, std::size_t dim,
                                      std::vector<std::string> domain_names);

    void validate() const;
};

/// t_i + shared_i + specific[domain]_i, summed in that order.
ClassAnchorSet dg_adapted_anchors(const ClassAnchorSet& anchors, const DisentangledResidual& res,
                                  std::size_t domain);

/// t_i + shared_i. Never reads the specific tables.
ClassAnchorSet inference_anchors(const ClassAnchorSet& anchors, const Matrix& shared);
ClassAnchorSet inference_anchors(const ClassAnchorSet& anchors, const DisentangledResidual& res);

struct DgStep {
    std::size_t step = 0;
    std::size_t domain = 0;
    double batch_loss = 0.0;
    const Matrix& grad_shared;
    const Matrix& grad_specific;
    /// Pseudo-labelled rows of domain `domain` that formed the batch.
    const PseudoLabelSet& batch;
    /// Tables as evaluated for this batch, before the update.
    const DisentangledResidual& residual;
};

struct DgOptions {
    /// Keep every specific table at zero; only the shared table trains.
    bool freeze_specific = false;
    /// Invoked after the gradients of each step are formed, before the update.
    std::function<void(const DgStep&)> on_step;
};

struct DgTrainResult {
    DisentangledResidual residual;
    TrainLog log;
    std::vector<PseudoLabelSet> pseudo_labels;
};

/// Each step draws a batch from one domain, visiting domains round-robin.
/// The batch loss uses that domain's specific table; its gradient updates
/// the shared table and that specific table, each with its own optimizer
/// state. Domains whose pseudo-label set is empty leave the rotation.
DgTrainResult train_disentangled(const MultiDomainBank& data, const ClassAnchorSet& anchors,
                                 const TrainConfig& cfg, const DgOptions& options = {});

/// Trains one residual on all domains pooled. Domains are pooled in name
/// order so the result does not depend on the order of `data`.
TrainResult train_common_baseline(const MultiDomainBank& data, const ClassAnchorSet& anchors,
                                  const TrainConfig& cfg);

} // namespace resadapt
