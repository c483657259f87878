// SPDX-License-Identifier: Apache-2.0

#include "resadapt/residual_dg.hpp"

#include "resadapt/error.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

namespace resadapt {

namespace {

void add_into(Matrix& dst, const Matrix& src) {
    if (!dst.same_shape(src)) {
        throw Error(ErrorCode::DimMismatch, "residual table shape does not match the anchors");
    }
    auto out = dst.data();
    const auto in = src.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += in[i];
    }
}

struct DomainCursor {
    std::size_t domain = 0;
    std::vector<std::vector<std::size_t>> batches;
    std::size_t next = 0;
};

} // namespace

void MultiDomainBank::validate() const {
    if (banks.size() != domain_names.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(banks.size()) + " banks but " +
                                                   std::to_string(domain_names.size()) + " domain names");
    }
    if (banks.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "multi-domain training needs at least two domains");
    }
    std::set<std::string> seen;
    for (const auto& name : domain_names) {
        if (!seen.insert(name).second) {
            throw Error(ErrorCode::InvalidArgument, "duplicate domain name \"" + name + "\"");
        }
    }
    const std::size_t dim = banks.front().dim();
    for (std::size_t n = 0; n < banks.size(); ++n) {
        if (!banks[n].empty() && banks[n].dim() != dim) {
            throw Error(ErrorCode::DimMismatch, "domain \"" + domain_names[n] + "\" has dimension " +
                                                    std::to_string(banks[n].dim()) + ", expected " +
                                                    std::to_string(dim));
        }
    }
}

DisentangledResidual DisentangledResidual::zeros(std::size_t classes, std::size_t dim,
                                                 std::vector<std::string> domain_names) {
    DisentangledResidual res;
    res.shared = Matrix(classes, dim);
    res.specific.assign(domain_names.size(), Matrix(classes, dim));
    res.domain_names = std::move(domain_names);
    return res;
}

void DisentangledResidual::validate() const {
    if (specific.size() != domain_names.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(specific.size()) + " specific tables but " +
                                                   std::to_string(domain_names.size()) + " domain names");
    }
    for (const auto& table : specific) {
        if (!table.same_shape(shared)) {
            throw Error(ErrorCode::DimMismatch, "specific table shape differs from the shared table");
        }
    }
}

ClassAnchorSet dg_adapted_anchors(const ClassAnchorSet& anchors, const DisentangledResidual& res,
                                  std::size_t domain) {
    if (domain >= res.specific.size()) {
        throw Error(ErrorCode::DomainIndexOutOfRange, "domain " + std::to_string(domain) + " of " +
                                                          std::to_string(res.specific.size()));
    }
    ClassAnchorSet out = anchors;
    add_into(out.anchors, res.shared);
    add_into(out.anchors, res.specific[domain]);
    return out;
}

ClassAnchorSet inference_anchors(const ClassAnchorSet& anchors, const Matrix& shared) {
    ClassAnchorSet out = anchors;
    add_into(out.anchors, shared);
    return out;
}

ClassAnchorSet inference_anchors(const ClassAnchorSet& anchors, const DisentangledResidual& res) {
    return inference_anchors(anchors, res.shared);
}

DgTrainResult train_disentangled(const MultiDomainBank& data, const ClassAnchorSet& anchors,
                                 const TrainConfig& cfg, const DgOptions& options) {
    cfg.validate();
    data.validate();
    const Temperature tau(cfg.tau);
    const std::size_t k = anchors.num_classes();
    const std::size_t d = anchors.dim();
    const std::size_t domains = data.num_domains();

    DgTrainResult result;
    result.residual = DisentangledResidual::zeros(k, d, data.domain_names);

    std::vector<std::size_t> active;
    for (std::size_t n = 0; n < domains; ++n) {
        result.pseudo_labels.push_back(data.banks[n].empty()
                                           ? PseudoLabelSet{{}, {}, {}, cfg.gamma, 0, 0.0}
                                           : generate_pseudo_labels(data.banks[n], anchors, tau, cfg.gamma));
        if (result.pseudo_labels.back().empty()) {
            result.log.warnings.push_back("domain \"" + data.domain_names[n] +
                                          "\" has no retained samples and leaves the rotation");
        } else {
            active.push_back(n);
        }
    }
    if (active.empty()) {
        std::ostringstream msg;
        msg << "gamma=" << cfg.gamma << " filtered out every sample of every domain";
        throw Error(ErrorCode::NoRetainedSamples, msg.str());
    }

    auto shared_state = OptimizerState::fresh(k, d);
    std::vector<OptimizerState> specific_state(domains, OptimizerState::fresh(k, d));
    // Domain n shuffles with seed + n, so a lone domain 0 follows the same
    // sample order as train_task_residual with the same seed.
    std::vector<std::mt19937_64> rngs;
    for (std::size_t n = 0; n < domains; ++n) {
        rngs.emplace_back(cfg.seed + n);
    }

    TaskResidual shared{std::move(result.residual.shared)};
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<PseudoLabelSet> current = result.pseudo_labels;
        if (cfg.refresh_pseudo_labels_each_epoch && epoch > 0) {
            result.residual.shared = shared.values;
            for (std::size_t n : active) {
                current[n] = generate_pseudo_labels(
                    data.banks[n], dg_adapted_anchors(anchors, result.residual, n), tau, cfg.gamma);
            }
        }

        EpochLog entry{epoch, 0, 0, 0.0};
        std::vector<DomainCursor> cursors;
        for (std::size_t n : active) {
            entry.retained += current[n].size();
            if (current[n].empty()) {
                continue;
            }
            std::vector<std::size_t> order(current[n].size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), rngs[n]);
            DomainCursor cursor{n, {}, 0};
            for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
                const std::size_t e = std::min(order.size(), b + cfg.batch_size);
                cursor.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                                            order.begin() + static_cast<std::ptrdiff_t>(e));
            }
            cursors.push_back(std::move(cursor));
        }

        double weighted = 0.0;
        bool progressed = true;
        while (progressed) {
            progressed = false;
            for (auto& cursor : cursors) {
                if (cursor.next == cursor.batches.size()) {
                    continue;
                }
                progressed = true;
                const std::size_t n = cursor.domain;
                const auto sub = current[n].subset(cursor.batches[cursor.next++]);

                result.residual.shared = shared.values;
                const auto lg = loss_and_gradient(data.banks[n], sub,
                                                  dg_adapted_anchors(anchors, result.residual, n), tau);
                // t + r_sh + r_sp: both tables receive the anchor-row gradient.
                const Matrix& grad_shared = lg.gradient;
                const Matrix& grad_specific = lg.gradient;
                if (options.on_step) {
                    options.on_step(DgStep{step, n, lg.loss, grad_shared, grad_specific, sub, result.residual});
                }
                optimizer_step(shared, grad_shared, shared_state, cfg);
                if (!options.freeze_specific) {
                    TaskResidual specific{std::move(result.residual.specific[n])};
                    optimizer_step(specific, grad_specific, specific_state[n], cfg);
                    result.residual.specific[n] = std::move(specific.values);
                }
                result.log.step_losses.push_back(lg.loss);
                weighted += lg.loss * static_cast<double>(sub.size());
                ++entry.steps;
                ++step;
            }
        }
        if (entry.retained > 0) {
            entry.mean_loss = weighted / static_cast<double>(entry.retained);
        }
        result.log.epochs.push_back(entry);
    }
    result.residual.shared = std::move(shared.values);
    return result;
}

TrainResult train_common_baseline(const MultiDomainBank& data, const ClassAnchorSet& anchors,
                                  const TrainConfig& cfg) {
    if (data.banks.size() != data.domain_names.size() || data.banks.empty()) {
        throw Error(ErrorCode::InvalidArgument, "common baseline needs at least one named domain");
    }
    std::vector<std::size_t> order(data.num_domains());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return data.domain_names[a] < data.domain_names[b];
    });
    std::vector<Matrix> parts;
    parts.reserve(order.size());
    for (std::size_t n : order) {
        parts.push_back(data.banks[n]);
    }
    return train_task_residual(concat_rows(parts), anchors, cfg);
}

} // namespace resadapt
