// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "resadapt/self_training.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace resadapt::cli {

using Json = nlohmann::ordered_json;

enum class Method {
    zero_shot,
    domain_prior,
    self_training,
    dg_shared,
    dg_common_baseline,
};

std::string to_string(Method method);

struct SplitRow {
    std::string split;
    std::string domain;
    std::size_t samples = 0;
    /// Accuracies in percent; absent when the split has no labels.
    std::optional<double> before;
    std::optional<double> after;
    std::optional<std::size_t> retained;
    /// Source domain -> retained pseudo-labels (domain generalization runs).
    std::vector<std::pair<std::string, std::size_t>> retained_by_domain;
    std::vector<EpochLog> epochs;
    std::optional<std::string> output;
};

struct RunReport {
    std::string command;
    Method method = Method::zero_shot;
    Json hyperparameters = Json::object();
    std::vector<SplitRow> rows;
    std::vector<std::string> warnings;

    /// Mean of the per-split accuracies when every row has one.
    std::optional<double> mean_before() const;
    std::optional<double> mean_after() const;

    Json to_json() const;
    void print(std::ostream& out) const;
};

double percent(double fraction);

void write_json(const Json& doc, const std::string& path);

} // namespace resadapt::cli
