// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "resadapt/residual_dg.hpp"
#include "resadapt/zeroshot.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace resadapt {

/// Synthetic multi-domain classification problem on the unit sphere.
///
/// All magnitudes are vector norms. `noise` and `anchor_noise` scale
/// isotropic Gaussian perturbations with expected norm equal to the value
/// (per-coordinate deviation value / sqrt(dim)); `domain_shift` is the exact
/// norm of each per-domain prototype offset. Every emitted vector is
/// renormalized. Gaussian-plus-renormalize stands in for von Mises-Fisher
/// sampling.
struct SynthConfig {
    std::size_t num_classes = 5;
    std::size_t dim = 32;
    std::size_t num_domains = 3;
    std::size_t samples_per_class_per_domain = 200;
    /// Scale applied to each prototype's offset from the mean of the
    /// isotropic draws: 1 is isotropic, values below 1 pull the classes
    /// into a cone around the mean direction.
    double class_separation = 0.1;
    double domain_shift = 0.0;
    double noise = 0.0;
    double anchor_noise = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Prompt template recorded on generated anchor sets and manifests.
inline constexpr std::string_view kSynthPromptTemplate = "a {domain} photo of a {class}";

struct SynthProblem {
    ClassAnchorSet anchors;
    MultiDomainBank domains;
    /// Ground truth per domain; evaluation only.
    std::vector<std::vector<ClassIndex>> labels;
    Matrix base_prototypes;
    std::vector<Matrix> true_prototypes;
};

SynthProblem generate(const SynthConfig& cfg);

/// Same construction with caller-supplied base prototypes (K x D rows,
/// normalized here). `cfg.num_classes`, `cfg.dim` and `cfg.class_separation`
/// are ignored.
SynthProblem generate_from_prototypes(const SynthConfig& cfg, const Matrix& base_prototypes);

/// Accuracy of nearest true domain prototype (cosine) on one domain.
double oracle_accuracy(const SynthProblem& problem, std::size_t domain);

/// Zero-shot accuracy of the problem's anchors on one domain.
double zero_shot_accuracy(const SynthProblem& problem, std::size_t domain, Temperature tau);

} // namespace resadapt
