// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mgfn/settings.hpp"

namespace mgfn {

struct NamedBlob {
    std::string name;
    std::vector<double> values;
};

/// Everything needed to restore a model and resume training.
///
/// On disk: "MGCK", u32 version, u32 header length + JSON header
/// (architecture, loss settings, seed, step, training config), then the
/// parameter blobs (u32 count; per blob u32 name length, name bytes,
/// u64 element count, f32 payload), then the optimizer blobs in the same
/// layout with f64 payloads. Parameters are quantized to f32 once on save;
/// optimizer moments keep full precision so resumed runs stay deterministic.
struct Checkpoint {
    ArchitectureDescriptor arch;
    LossSettings loss;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    /// Free-form training configuration snapshot.
    nlohmann::json training = nlohmann::json::object();
    std::vector<NamedBlob> params;
    std::uint64_t optimizer_step = 0;
    std::vector<NamedBlob> optimizer;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& checkpoint);
/// Throws CheckpointError on bad magic, version mismatch, or truncation.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mgfn
