// SPDX-License-Identifier: Apache-2.0

#include "resadapt/io.hpp"

#include "resadapt/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace resadapt::io {

namespace {

using json = nlohmann::ordered_json;

constexpr char kBankMagic[4] = {'E', 'M', 'B', '1'};
constexpr char kLabelMagic[4] = {'L', 'B', 'L', '1'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) {
        out.push_back(static_cast<unsigned char>((v >> shift) & 0xFFu));
    }
}

std::uint32_t get_u32(std::span<const unsigned char> bytes, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
        v = (v << 8) | bytes[offset + static_cast<std::size_t>(i)];
    }
    return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xFFFFFFFFu) {
        throw Error(ErrorCode::InvalidArgument, std::string(what) + " does not fit in 32 bits");
    }
    return static_cast<std::uint32_t>(v);
}

// Validates magic, version and that the payload length matches the header.
void check_header(std::span<const unsigned char> bytes, const char (&magic)[4], std::size_t header_bytes,
                  std::uint64_t payload_bytes_per_unit, std::uint64_t units, const char* kind) {
    if (std::memcmp(bytes.data(), magic, 4) != 0) {
        throw Error(ErrorCode::BadMagic, std::string(kind) + " file does not start with \"" +
                                             std::string(magic, 4) + "\"");
    }
    const auto version = get_u32(bytes, 4);
    if (version != kFormatVersion) {
        throw Error(ErrorCode::UnsupportedVersion, std::string(kind) + " file version " +
                                                       std::to_string(version));
    }
    const std::uint64_t expected = units * payload_bytes_per_unit;
    const std::uint64_t actual = bytes.size() - header_bytes;
    if (actual < expected) {
        throw Error(ErrorCode::TruncatedFile, std::string(kind) + " payload has " + std::to_string(actual) +
                                                  " bytes, header declares " + std::to_string(expected));
    }
    if (actual > expected) {
        throw Error(ErrorCode::SizeMismatch, std::string(kind) + " payload has " + std::to_string(actual) +
                                                 " bytes, header declares " + std::to_string(expected));
    }
}

json read_json(const fs::path& path, ErrorCode code) {
    const auto bytes = read_file(path);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw Error(code, path.string() + ": " + e.what());
    }
}

void write_json(const json& doc, const fs::path& path) {
    const std::string text = doc.dump(2) + "\n";
    write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string table_file_name(const std::string& domain) {
    std::string safe;
    for (char c : domain) {
        const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                          c == '-' || c == '_' || c == '.';
        safe.push_back(keep ? c : '_');
    }
    return "specific_" + safe + ".emb";
}

[[noreturn]] void manifest_error(const std::string& message) {
    throw Error(ErrorCode::ManifestInvalid, message);
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || !obj.at(key).is_string()) {
        manifest_error(where + " is missing string key \"" + key + "\"");
    }
    return obj.at(key).get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || obj.at(key).is_null()) {
        return std::nullopt;
    }
    if (!obj.at(key).is_string()) {
        manifest_error(where + " key \"" + key + "\" must be a string");
    }
    return obj.at(key).get<std::string>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

void require_exists(const fs::path& path, const std::string& key) {
    if (!fs::exists(path)) {
        manifest_error("\"" + key + "\" refers to missing file " + path.string());
    }
}

// In-memory paths are absolute or relative to the working directory.
std::string relative_to(const fs::path& path, const fs::path& base) {
    const auto target = fs::absolute(path).lexically_normal();
    const auto from = fs::absolute(base.empty() ? fs::path(".") : base).lexically_normal();
    const auto rel = target.lexically_relative(from);
    return rel.empty() ? target.generic_string() : rel.generic_string();
}

} // namespace

std::vector<unsigned char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const unsigned char> bytes) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(ErrorCode::IoError, "write failed for " + path.string());
    }
}

std::vector<unsigned char> encode_bank(const Matrix& m) {
    std::vector<unsigned char> out(kBankMagic, kBankMagic + 4);
    out.reserve(kBankHeaderBytes + m.data().size() * 4);
    put_u32(out, kFormatVersion);
    put_u32(out, checked_u32(m.rows(), "row count"));
    put_u32(out, checked_u32(m.dim(), "dimension"));
    for (float v : m.data()) {
        put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

Matrix decode_bank(std::span<const unsigned char> bytes) {
    if (bytes.size() < kBankHeaderBytes) {
        throw Error(ErrorCode::TruncatedFile, "bank header needs " + std::to_string(kBankHeaderBytes) +
                                                  " bytes, file has " + std::to_string(bytes.size()));
    }
    const std::uint64_t rows = get_u32(bytes, 8);
    const std::uint64_t dim = get_u32(bytes, 12);
    check_header(bytes, kBankMagic, kBankHeaderBytes, 4, rows * dim, "bank");
    std::vector<float> data(rows * dim);
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = std::bit_cast<float>(get_u32(bytes, kBankHeaderBytes + 4 * i));
    }
    return Matrix(rows, dim, std::move(data));
}

std::vector<unsigned char> encode_labels(std::span<const ClassIndex> labels) {
    std::vector<unsigned char> out(kLabelMagic, kLabelMagic + 4);
    out.reserve(kLabelHeaderBytes + labels.size() * 4);
    put_u32(out, kFormatVersion);
    put_u32(out, checked_u32(labels.size(), "label count"));
    for (ClassIndex v : labels) {
        put_u32(out, v);
    }
    return out;
}

std::vector<ClassIndex> decode_labels(std::span<const unsigned char> bytes) {
    if (bytes.size() < kLabelHeaderBytes) {
        throw Error(ErrorCode::TruncatedFile, "label header needs " + std::to_string(kLabelHeaderBytes) +
                                                  " bytes, file has " + std::to_string(bytes.size()));
    }
    const std::uint64_t count = get_u32(bytes, 8);
    check_header(bytes, kLabelMagic, kLabelHeaderBytes, 4, count, "label");
    std::vector<ClassIndex> labels(count);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        labels[i] = get_u32(bytes, kLabelHeaderBytes + 4 * i);
    }
    return labels;
}

void write_bank(const Matrix& m, const fs::path& path) {
    write_file(path, encode_bank(m));
}

Matrix read_bank(const fs::path& path) {
    return decode_bank(read_file(path));
}

void write_labels(std::span<const ClassIndex> labels, const fs::path& path) {
    write_file(path, encode_labels(labels));
}

std::vector<ClassIndex> read_labels(const fs::path& path) {
    return decode_labels(read_file(path));
}

void write_residual(const TaskResidual& residual, const fs::path& path) {
    write_bank(residual.values, path);
}

TaskResidual read_residual(const fs::path& path) {
    return TaskResidual{read_bank(path)};
}

void write_dg_residual(const DisentangledResidual& residual, const fs::path& dir) {
    residual.validate();
    fs::create_directories(dir);
    json index;
    index["format"] = "dg-residual";
    index["version"] = kFormatVersion;
    index["shared"] = "shared.emb";
    json domains = json::array();
    std::set<std::string> files;
    for (std::size_t n = 0; n < residual.domain_names.size(); ++n) {
        const auto file = table_file_name(residual.domain_names[n]);
        if (!files.insert(file).second) {
            throw Error(ErrorCode::InvalidArgument,
                        "domain names map to the same table file " + file);
        }
        write_bank(residual.specific[n], dir / file);
        domains.push_back({{"name", residual.domain_names[n]}, {"table", file}});
    }
    index["domains"] = std::move(domains);
    write_bank(residual.shared, dir / "shared.emb");
    write_json(index, dir / "index.json");
}

DisentangledResidual read_dg_residual(const fs::path& dir) {
    const auto index = read_json(dir / "index.json", ErrorCode::IoError);
    DisentangledResidual res;
    res.shared = read_dg_shared(dir);
    for (const auto& entry : index.at("domains")) {
        const auto name = entry.at("name").get<std::string>();
        const auto file = dir / entry.at("table").get<std::string>();
        if (!fs::exists(file)) {
            throw Error(ErrorCode::MissingDomainTable, "no table for domain \"" + name + "\" at " +
                                                           file.string());
        }
        res.domain_names.push_back(name);
        res.specific.push_back(read_bank(file));
    }
    res.validate();
    return res;
}

Matrix read_dg_shared(const fs::path& dir) {
    const auto index = read_json(dir / "index.json", ErrorCode::IoError);
    if (!index.contains("shared") || !index.at("shared").is_string()) {
        throw Error(ErrorCode::IoError, (dir / "index.json").string() + " has no shared table entry");
    }
    return read_bank(dir / index.at("shared").get<std::string>());
}

const SplitEntry& Manifest::split(const std::string& name) const {
    for (const auto& s : splits) {
        if (s.name == name) {
            return s;
        }
    }
    manifest_error("no split named \"" + name + "\"");
}

Manifest load_manifest(const fs::path& path) {
    json doc;
    try {
        doc = read_json(path, ErrorCode::ManifestInvalid);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::IoError) {
            manifest_error(e.what());
        }
        throw;
    }
    if (!doc.is_object()) {
        manifest_error("manifest root must be an object");
    }
    Manifest m;
    m.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");

    if (!doc.contains("class_names") || !doc.at("class_names").is_array() ||
        doc.at("class_names").empty()) {
        manifest_error("manifest key \"class_names\" must be a nonempty array");
    }
    std::set<std::string> seen;
    for (const auto& name : doc.at("class_names")) {
        if (!name.is_string()) {
            manifest_error("manifest key \"class_names\" must hold strings");
        }
        if (!seen.insert(name.get<std::string>()).second) {
            manifest_error("duplicate class name \"" + name.get<std::string>() + "\" in \"class_names\"");
        }
        m.class_names.push_back(name.get<std::string>());
    }

    m.prompt_template = require_string(doc, "prompt_template", "manifest");
    m.domain_description = optional_string(doc, "domain_description", "manifest");
    m.anchor_bank_path = resolve(m.base_dir, require_string(doc, "anchor_bank_path", "manifest"));
    require_exists(m.anchor_bank_path, "anchor_bank_path");
    if (auto p = optional_string(doc, "domain_anchor_bank_path", "manifest")) {
        m.domain_anchor_bank_path = resolve(m.base_dir, *p);
        require_exists(*m.domain_anchor_bank_path, "domain_anchor_bank_path");
    }

    if (!doc.contains("splits") || !doc.at("splits").is_array() || doc.at("splits").empty()) {
        manifest_error("manifest key \"splits\" must be a nonempty array");
    }
    std::set<std::string> split_names;
    for (const auto& entry : doc.at("splits")) {
        if (!entry.is_object()) {
            manifest_error("every entry of \"splits\" must be an object");
        }
        SplitEntry s;
        s.name = require_string(entry, "name", "split");
        const std::string where = "split \"" + s.name + "\"";
        if (!split_names.insert(s.name).second) {
            manifest_error("duplicate split name \"" + s.name + "\"");
        }
        s.bank_path = resolve(m.base_dir, require_string(entry, "bank_path", where));
        require_exists(s.bank_path, where + " bank_path");
        if (auto p = optional_string(entry, "labels_path", where)) {
            s.labels_path = resolve(m.base_dir, *p);
            require_exists(*s.labels_path, where + " labels_path");
        }
        s.domain_name = optional_string(entry, "domain_name", where).value_or(s.name);
        s.domain_description = optional_string(entry, "domain_description", where);
        if (auto p = optional_string(entry, "domain_anchor_bank_path", where)) {
            s.domain_anchor_bank_path = resolve(m.base_dir, *p);
            require_exists(*s.domain_anchor_bank_path, where + " domain_anchor_bank_path");
        }
        m.splits.push_back(std::move(s));
    }
    return m;
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path();
    json doc;
    doc["class_names"] = manifest.class_names;
    doc["prompt_template"] = manifest.prompt_template;
    if (manifest.domain_description) {
        doc["domain_description"] = *manifest.domain_description;
    }
    doc["anchor_bank_path"] = relative_to(manifest.anchor_bank_path, base);
    if (manifest.domain_anchor_bank_path) {
        doc["domain_anchor_bank_path"] = relative_to(*manifest.domain_anchor_bank_path, base);
    }
    json splits = json::array();
    for (const auto& s : manifest.splits) {
        json entry;
        entry["name"] = s.name;
        entry["bank_path"] = relative_to(s.bank_path, base);
        if (s.labels_path) {
            entry["labels_path"] = relative_to(*s.labels_path, base);
        }
        entry["domain_name"] = s.domain_name;
        if (s.domain_description) {
            entry["domain_description"] = *s.domain_description;
        }
        if (s.domain_anchor_bank_path) {
            entry["domain_anchor_bank_path"] = relative_to(*s.domain_anchor_bank_path, base);
        }
        splits.push_back(std::move(entry));
    }
    doc["splits"] = std::move(splits);
    write_json(doc, path);
}

ClassAnchorSet load_anchors(const Manifest& manifest, bool domain_prior, const SplitEntry* split) {
    fs::path path = manifest.anchor_bank_path;
    std::optional<std::string> description;
    if (domain_prior) {
        if (split && split->domain_anchor_bank_path) {
            path = *split->domain_anchor_bank_path;
        } else if (manifest.domain_anchor_bank_path) {
            path = *manifest.domain_anchor_bank_path;
        } else {
            manifest_error("domain prior requested but the manifest has no \"domain_anchor_bank_path\"" +
                           (split ? " for split \"" + split->name + "\"" : std::string()));
        }
        if (split && split->domain_description) {
            description = split->domain_description;
        } else if (manifest.domain_description) {
            description = manifest.domain_description;
        } else if (split) {
            description = split->domain_name;
        }
    }
    Matrix anchors = read_bank(path);
    if (anchors.rows() != manifest.class_names.size()) {
        manifest_error("anchor bank " + path.string() + " has " + std::to_string(anchors.rows()) +
                       " rows for " + std::to_string(manifest.class_names.size()) + " classes");
    }
    try {
        return make_anchor_set(manifest.class_names, std::move(anchors), manifest.prompt_template,
                               description);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::MalformedTemplate) {
            manifest_error(std::string("\"prompt_template\": ") + e.what());
        }
        throw;
    }
}

LoadedSplit load_split(const Manifest& manifest, const SplitEntry& split) {
    LoadedSplit out;
    out.bank = read_bank(split.bank_path);
    if (split.labels_path) {
        auto labels = read_labels(*split.labels_path);
        if (labels.size() != out.bank.rows()) {
            manifest_error("split \"" + split.name + "\" has " + std::to_string(labels.size()) +
                           " labels for " + std::to_string(out.bank.rows()) + " rows");
        }
        const auto k = manifest.class_names.size();
        for (ClassIndex label : labels) {
            if (label >= k) {
                manifest_error("split \"" + split.name + "\" has label " + std::to_string(label) +
                               " outside [0, " + std::to_string(k) + ")");
            }
        }
        out.labels = std::move(labels);
    }
    return out;
}

} // namespace resadapt::io
