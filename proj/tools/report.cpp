// SPDX-License-Identifier: Apache-2.0

#include "report.hpp"

#include "resadapt/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace resadapt::cli {

namespace {

std::optional<double> mean_of(const std::vector<SplitRow>& rows,
                              std::optional<double> SplitRow::*field) {
    if (rows.empty()) {
        return std::nullopt;
    }
    double sum = 0.0;
    for (const auto& row : rows) {
        if (!(row.*field)) {
            return std::nullopt;
        }
        sum += *(row.*field);
    }
    return sum / static_cast<double>(rows.size());
}

Json optional_number(const std::optional<double>& v) {
    return v ? Json(*v) : Json(nullptr);
}

std::string cell(const std::optional<double>& v) {
    if (!v) {
        return "-";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    return buf;
}

std::string padded(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

} // namespace

std::string to_string(Method method) {
    switch (method) {
    case Method::zero_shot: return "zero-shot";
    case Method::domain_prior: return "domain-prior";
    case Method::self_training: return "self-training";
    case Method::dg_shared: return "dg-shared";
    case Method::dg_common_baseline: return "dg-common-baseline";
    }
    return "unknown";
}

double percent(double fraction) {
    return 100.0 * fraction;
}

std::optional<double> RunReport::mean_before() const {
    return mean_of(rows, &SplitRow::before);
}

std::optional<double> RunReport::mean_after() const {
    return mean_of(rows, &SplitRow::after);
}

Json RunReport::to_json() const {
    Json doc;
    doc["command"] = command;
    doc["method"] = to_string(method);
    doc["hyperparameters"] = hyperparameters;
    Json splits = Json::array();
    for (const auto& row : rows) {
        Json s;
        s["split"] = row.split;
        s["domain"] = row.domain;
        s["samples"] = row.samples;
        s["accuracy_before"] = optional_number(row.before);
        s["accuracy"] = optional_number(row.after);
        s["retained"] = row.retained ? Json(*row.retained) : Json(nullptr);
        if (!row.retained_by_domain.empty()) {
            Json by = Json::object();
            for (const auto& [name, count] : row.retained_by_domain) {
                by[name] = count;
            }
            s["retained_by_domain"] = std::move(by);
        }
        if (!row.epochs.empty()) {
            Json epochs = Json::array();
            for (const auto& e : row.epochs) {
                epochs.push_back({{"epoch", e.epoch},
                                  {"retained", e.retained},
                                  {"steps", e.steps},
                                  {"mean_loss", e.mean_loss}});
            }
            s["epochs"] = std::move(epochs);
        }
        if (row.output) {
            s["output"] = *row.output;
        }
        splits.push_back(std::move(s));
    }
    doc["splits"] = std::move(splits);
    doc["mean_accuracy_before"] = optional_number(mean_before());
    doc["mean_accuracy"] = optional_number(mean_after());
    doc["warnings"] = warnings;
    return doc;
}

void RunReport::print(std::ostream& out) const {
    out << "method: " << to_string(method) << "\n";
    for (const auto& [key, value] : hyperparameters.items()) {
        out << "  " << key << " = " << value.dump() << "\n";
    }
    const bool has_before = std::any_of(rows.begin(), rows.end(),
                                        [](const SplitRow& r) { return r.before.has_value(); });
    std::size_t width = 8;
    for (const auto& row : rows) {
        width = std::max(width, row.split.size() + 2);
    }
    out << padded("split", width) << padded("samples", 10) << padded("retained", 10);
    if (has_before) {
        out << padded("before%", 10);
    }
    out << "acc%\n";
    for (const auto& row : rows) {
        out << padded(row.split, width) << padded(std::to_string(row.samples), 10)
            << padded(row.retained ? std::to_string(*row.retained) : "-", 10);
        if (has_before) {
            out << padded(cell(row.before), 10);
        }
        out << cell(row.after) << "\n";
    }
    if (rows.size() > 1) {
        out << padded("mean", width) << padded("", 20);
        if (has_before) {
            out << padded(cell(mean_before()), 10);
        }
        out << cell(mean_after()) << "\n";
    }
    for (const auto& w : warnings) {
        out << "warning: " << w << "\n";
    }
}

void write_json(const Json& doc, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
    }
    out << doc.dump(2) << "\n";
    if (!out) {
        throw Error(ErrorCode::IoError, "failed writing " + path);
    }
}

} // namespace resadapt::cli
