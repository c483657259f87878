// SPDX-License-Identifier: Apache-2.0

#include "resadapt/synth.hpp"

#include "resadapt/error.hpp"

#include <cmath>
#include <random>
#include <string>

namespace resadapt {

namespace {

using Rng = std::mt19937_64;

std::vector<double> gaussian(std::size_t dim, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(dim);
    for (double& x : v) {
        x = dist(rng);
    }
    return v;
}

std::vector<double> unit(std::vector<double> v, const char* what) {
    double sq = 0.0;
    for (double x : v) {
        sq += x * x;
    }
    const double n = std::sqrt(sq);
    if (n <= kDegenerateNorm) {
        throw Error(ErrorCode::ConfigInvalid, std::string(what) + " collapsed to a zero vector");
    }
    for (double& x : v) {
        x /= n;
    }
    return v;
}

// base + scale * g / sqrt(D) for a fresh standard Gaussian g, renormalized.
// The perturbation has expected squared norm scale^2.
std::vector<double> jitter(const std::vector<double>& base, double scale, Rng& rng, const char* what) {
    auto g = gaussian(base.size(), rng);
    const double per_coordinate = scale / std::sqrt(static_cast<double>(base.size()));
    for (std::size_t j = 0; j < base.size(); ++j) {
        g[j] = base[j] + per_coordinate * g[j];
    }
    return unit(std::move(g), what);
}

void store_row(Matrix& m, std::size_t i, const std::vector<double>& v) {
    auto row = m.row(i);
    for (std::size_t j = 0; j < v.size(); ++j) {
        row[j] = static_cast<float>(v[j]);
    }
}

std::vector<double> load_row(const Matrix& m, std::size_t i) {
    const auto row = m.row(i);
    return {row.begin(), row.end()};
}

SynthProblem synthesize(const SynthConfig& cfg, const Matrix& base, Rng& rng) {
    const std::size_t k = base.rows();
    const std::size_t d = base.dim();

    SynthProblem problem;
    problem.base_prototypes = base;

    Matrix anchors(k, d);
    for (std::size_t c = 0; c < k; ++c) {
        store_row(anchors, c, jitter(load_row(base, c), cfg.anchor_noise, rng, "anchor"));
    }
    std::vector<std::string> class_names;
    for (std::size_t c = 0; c < k; ++c) {
        class_names.push_back("class" + std::to_string(c));
    }
    problem.anchors = make_anchor_set(std::move(class_names), std::move(anchors),
                                      std::string(kSynthPromptTemplate));

    for (std::size_t n = 0; n < cfg.num_domains; ++n) {
        Matrix protos(k, d);
        for (std::size_t c = 0; c < k; ++c) {
            const auto dir = unit(gaussian(d, rng), "domain offset");
            auto p = load_row(base, c);
            for (std::size_t j = 0; j < d; ++j) {
                p[j] += cfg.domain_shift * dir[j];
            }
            store_row(protos, c, unit(std::move(p), "domain prototype"));
        }

        const std::size_t per = cfg.samples_per_class_per_domain;
        Matrix bank(k * per, d);
        std::vector<ClassIndex> labels(k * per);
        for (std::size_t c = 0; c < k; ++c) {
            const auto proto = load_row(protos, c);
            for (std::size_t s = 0; s < per; ++s) {
                const std::size_t i = c * per + s;
                store_row(bank, i, jitter(proto, cfg.noise, rng, "sample"));
                labels[i] = static_cast<ClassIndex>(c);
            }
        }
        problem.domains.banks.push_back(std::move(bank));
        problem.domains.domain_names.push_back("domain" + std::to_string(n));
        problem.labels.push_back(std::move(labels));
        problem.true_prototypes.push_back(std::move(protos));
    }
    return problem;
}

} // namespace

void SynthConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); };
    if (num_classes < 2) {
        fail("num_classes must be at least 2");
    }
    if (dim < 2) {
        fail("dim must be at least 2");
    }
    if (num_domains < 1) {
        fail("num_domains must be at least 1");
    }
    for (double v : {class_separation, domain_shift, noise, anchor_noise}) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            fail("magnitudes must be finite and nonnegative");
        }
    }
}

SynthProblem generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const std::size_t k = cfg.num_classes;
    const std::size_t d = cfg.dim;

    // Isotropic unit draws, then dispersion about their mean direction is
    // scaled by class_separation (1 keeps the isotropic spread).
    std::vector<std::vector<double>> raw;
    std::vector<double> mean(d, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        raw.push_back(unit(gaussian(d, rng), "prototype draw"));
        for (std::size_t j = 0; j < d; ++j) {
            mean[j] += raw.back()[j] / static_cast<double>(k);
        }
    }
    Matrix base(k, d);
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> p(d);
        for (std::size_t j = 0; j < d; ++j) {
            p[j] = mean[j] + cfg.class_separation * (raw[c][j] - mean[j]);
        }
        store_row(base, c, unit(std::move(p), "prototype"));
    }
    return synthesize(cfg, base, rng);
}

SynthProblem generate_from_prototypes(const SynthConfig& cfg, const Matrix& base_prototypes) {
    SynthConfig checked = cfg;
    checked.num_classes = base_prototypes.rows();
    checked.dim = base_prototypes.dim();
    checked.validate();
    Rng rng(cfg.seed);
    Matrix base(base_prototypes.rows(), base_prototypes.dim());
    for (std::size_t c = 0; c < base.rows(); ++c) {
        store_row(base, c, unit(load_row(base_prototypes, c), "prototype"));
    }
    return synthesize(checked, base, rng);
}

double oracle_accuracy(const SynthProblem& problem, std::size_t domain) {
    if (domain >= problem.domains.num_domains()) {
        throw Error(ErrorCode::DomainIndexOutOfRange, "domain " + std::to_string(domain) + " of " +
                                                          std::to_string(problem.domains.num_domains()));
    }
    const auto& protos = problem.true_prototypes[domain];
    const auto& bank = problem.domains.banks[domain];
    const auto& labels = problem.labels[domain];
    if (labels.empty()) {
        throw Error(ErrorCode::EmptyEvaluation, "domain has no samples");
    }
    std::size_t correct = 0;
    std::vector<double> scores(protos.rows());
    for (std::size_t i = 0; i < bank.rows(); ++i) {
        for (std::size_t c = 0; c < protos.rows(); ++c) {
            scores[c] = cosine_sim(bank.row(i), protos.row(c));
        }
        correct += argmax(scores) == labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double zero_shot_accuracy(const SynthProblem& problem, std::size_t domain, Temperature tau) {
    if (domain >= problem.domains.num_domains()) {
        throw Error(ErrorCode::DomainIndexOutOfRange, "domain " + std::to_string(domain) + " of " +
                                                          std::to_string(problem.domains.num_domains()));
    }
    const auto predictions = classify_batch(problem.domains.banks[domain], problem.anchors, tau);
    return accuracy(predictions, problem.labels[domain]);
}

} // namespace resadapt
