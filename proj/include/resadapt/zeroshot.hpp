// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "resadapt/embedding.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace resadapt {

using ClassIndex = std::uint32_t;

struct PromptKey {
    std::string template_text;
    std::optional<std::string> domain_description;
    std::string class_name;
};

/// Substitutes "{domain}" and "{class}". Without a domain description the
/// "{domain}" placeholder is dropped together with one adjacent space, so
/// "a {domain} photo of a {class}" renders as "a photo of a dog".
/// Throws MalformedTemplate unless "{class}" occurs exactly once.
std::string render_prompt(const PromptKey& key);

/// Text-side class prototypes: row i of `anchors` is the embedding of
/// `prompt_keys[i]`, which names `class_names[i]`.
struct ClassAnchorSet {
    std::vector<std::string> class_names;
    Matrix anchors;
    std::vector<std::string> prompt_keys;

    std::size_t num_classes() const noexcept { return anchors.rows(); }
    std::size_t dim() const noexcept { return anchors.dim(); }

    /// K >= 2, unique names, consistent sizes, non-degenerate rows.
    void validate() const;
};

/// Builds an anchor set whose prompt keys are rendered from `template_text`.
ClassAnchorSet make_anchor_set(std::vector<std::string> class_names, Matrix anchors,
                               const std::string& template_text,
                               const std::optional<std::string>& domain_description = std::nullopt);

struct Prediction {
    std::vector<double> probs;
    ClassIndex label = 0;
    double confidence = 0.0;
};

Prediction classify(std::span<const float> image, const ClassAnchorSet& anchors, Temperature tau);

/// Row-wise classify; element i is bit-identical to classify(bank.row(i)).
std::vector<Prediction> classify_batch(const Matrix& bank, const ClassAnchorSet& anchors,
                                       Temperature tau);

/// Fraction in [0, 1]. Throws LengthMismatch or EmptyEvaluation.
double accuracy(std::span<const Prediction> predictions, std::span<const ClassIndex> labels);

/// Index of the largest entry, lowest index on ties.
ClassIndex argmax(std::span<const double> values);

} // namespace resadapt
