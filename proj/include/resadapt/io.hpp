// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "resadapt/residual_dg.hpp"
#include "resadapt/self_training.hpp"
#include "resadapt/zeroshot.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace resadapt::io {

namespace fs = std::filesystem;

// Bank files ("EMB1"):   magic[4] | version u32 | rows u32 | dim u32 | rows*dim f32
// Label files ("LBL1"):  magic[4] | version u32 | count u32 | count u32
// All integers and reals little-endian.

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kBankHeaderBytes = 16;
inline constexpr std::size_t kLabelHeaderBytes = 12;

std::vector<unsigned char> encode_bank(const Matrix& m);
Matrix decode_bank(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_labels(std::span<const ClassIndex> labels);
std::vector<ClassIndex> decode_labels(std::span<const unsigned char> bytes);

void write_bank(const Matrix& m, const fs::path& path);
Matrix read_bank(const fs::path& path);

void write_labels(std::span<const ClassIndex> labels, const fs::path& path);
std::vector<ClassIndex> read_labels(const fs::path& path);

void write_residual(const TaskResidual& residual, const fs::path& path);
TaskResidual read_residual(const fs::path& path);

/// Directory holding shared.emb, one specific_<domain>.emb per domain and
/// index.json mapping domain names to their tables.
void write_dg_residual(const DisentangledResidual& residual, const fs::path& dir);
DisentangledResidual read_dg_residual(const fs::path& dir);

/// Loads only the shared table; specific tables may be absent.
Matrix read_dg_shared(const fs::path& dir);

std::vector<unsigned char> read_file(const fs::path& path);
void write_file(const fs::path& path, std::span<const unsigned char> bytes);

struct SplitEntry {
    std::string name;
    fs::path bank_path;
    std::optional<fs::path> labels_path;
    std::string domain_name;
    std::optional<std::string> domain_description;
    std::optional<fs::path> domain_anchor_bank_path;
};

/// Dataset description. Relative paths are resolved against the manifest's
/// directory on load and written back relative to it on save.
struct Manifest {
    std::vector<std::string> class_names;
    std::string prompt_template;
    std::optional<std::string> domain_description;
    fs::path anchor_bank_path;
    std::optional<fs::path> domain_anchor_bank_path;
    std::vector<SplitEntry> splits;
    fs::path base_dir;

    const SplitEntry& split(const std::string& name) const;
};

/// Throws ManifestInvalid naming the offending key.
Manifest load_manifest(const fs::path& path);
void save_manifest(const Manifest& manifest, const fs::path& path);

/// Plain anchors, or the domain-decorated ones for `split` when
/// `domain_prior` is set (split-level entry first, then manifest-level).
ClassAnchorSet load_anchors(const Manifest& manifest, bool domain_prior,
                            const SplitEntry* split = nullptr);

struct LoadedSplit {
    Matrix bank;
    std::optional<std::vector<ClassIndex>> labels;
};

/// Label count and range are checked against the manifest here.
LoadedSplit load_split(const Manifest& manifest, const SplitEntry& split);

} // namespace resadapt::io
