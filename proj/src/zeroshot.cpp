// SPDX-License-Identifier: Apache-2.0

#include "resadapt/zeroshot.hpp"

#include "resadapt/error.hpp"
#include "resadapt/parallel.hpp"

#include <set>
#include <string>

namespace resadapt {

namespace {

constexpr std::string_view kClassSlot = "{class}";
constexpr std::string_view kDomainSlot = "{domain}";

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
    std::size_t count = 0;
    for (auto pos = text.find(needle); pos != std::string_view::npos;
         pos = text.find(needle, pos + needle.size())) {
        ++count;
    }
    return count;
}

void replace_all(std::string& text, std::string_view needle, std::string_view value) {
    for (auto pos = text.find(needle); pos != std::string::npos;
         pos = text.find(needle, pos + value.size())) {
        text.replace(pos, needle.size(), value);
    }
}

void drop_domain_slots(std::string& text) {
    for (auto pos = text.find(kDomainSlot); pos != std::string::npos; pos = text.find(kDomainSlot)) {
        std::size_t begin = pos;
        std::size_t end = pos + kDomainSlot.size();
        if (end < text.size() && text[end] == ' ') {
            ++end;
        } else if (begin > 0 && text[begin - 1] == ' ') {
            --begin;
        }
        text.erase(begin, end - begin);
    }
}

} // namespace

std::string render_prompt(const PromptKey& key) {
    const auto slots = count_occurrences(key.template_text, kClassSlot);
    if (slots != 1) {
        throw Error(ErrorCode::MalformedTemplate,
                    "template \"" + key.template_text + "\" must contain {class} exactly once, found " +
                        std::to_string(slots));
    }
    std::string out = key.template_text;
    if (key.domain_description) {
        replace_all(out, kDomainSlot, *key.domain_description);
    } else {
        drop_domain_slots(out);
    }
    replace_all(out, kClassSlot, key.class_name);
    return out;
}

void ClassAnchorSet::validate() const {
    const std::size_t k = anchors.rows();
    if (k < 2) {
        throw Error(ErrorCode::InvalidArgument, "an anchor set needs at least two classes");
    }
    if (class_names.size() != k || prompt_keys.size() != k) {
        throw Error(ErrorCode::LengthMismatch, "anchor set has " + std::to_string(k) + " rows, " +
                                                   std::to_string(class_names.size()) + " names and " +
                                                   std::to_string(prompt_keys.size()) + " prompt keys");
    }
    std::set<std::string> seen;
    for (const auto& name : class_names) {
        if (!seen.insert(name).second) {
            throw Error(ErrorCode::InvalidArgument, "duplicate class name \"" + name + "\"");
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        if (norm(anchors.row(i)) <= kDegenerateNorm) {
            throw Error(ErrorCode::DegenerateVector, "anchor for class \"" + class_names[i] +
                                                         "\" is a near-zero vector");
        }
    }
}

ClassAnchorSet make_anchor_set(std::vector<std::string> class_names, Matrix anchors,
                               const std::string& template_text,
                               const std::optional<std::string>& domain_description) {
    ClassAnchorSet set;
    set.prompt_keys.reserve(class_names.size());
    for (const auto& name : class_names) {
        set.prompt_keys.push_back(render_prompt({template_text, domain_description, name}));
    }
    set.class_names = std::move(class_names);
    set.anchors = std::move(anchors);
    set.validate();
    return set;
}

ClassIndex argmax(std::span<const double> values) {
    ClassIndex best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = static_cast<ClassIndex>(i);
        }
    }
    return best;
}

Prediction classify(std::span<const float> image, const ClassAnchorSet& anchors, Temperature tau) {
    if (image.size() != anchors.dim()) {
        throw Error(ErrorCode::DimMismatch, "image dimension " + std::to_string(image.size()) +
                                                " vs anchor dimension " + std::to_string(anchors.dim()));
    }
    const std::size_t k = anchors.num_classes();
    std::vector<double> scores(k);
    for (std::size_t i = 0; i < k; ++i) {
        scores[i] = cosine_sim(image, anchors.anchors.row(i));
    }
    Prediction p;
    p.probs = softmax_scaled(scores, tau);
    p.label = argmax(p.probs);
    p.confidence = p.probs[p.label];
    return p;
}

std::vector<Prediction> classify_batch(const Matrix& bank, const ClassAnchorSet& anchors,
                                       Temperature tau) {
    if (!bank.empty() && bank.dim() != anchors.dim()) {
        throw Error(ErrorCode::DimMismatch, "bank dimension " + std::to_string(bank.dim()) +
                                                " vs anchor dimension " + std::to_string(anchors.dim()));
    }
    std::vector<Prediction> out(bank.rows());
    parallel_for(bank.rows(), 256, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            out[i] = classify(bank.row(i), anchors, tau);
        }
    });
    return out;
}

double accuracy(std::span<const Prediction> predictions, std::span<const ClassIndex> labels) {
    if (predictions.size() != labels.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(predictions.size()) +
                                                   " predictions vs " + std::to_string(labels.size()) +
                                                   " labels");
    }
    if (predictions.empty()) {
        throw Error(ErrorCode::EmptyEvaluation, "accuracy over zero samples");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        correct += predictions[i].label == labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

} // namespace resadapt
