// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgfn/tensor.hpp"

namespace mgfn {

enum class VideoLabel : int { kNormal = 0, kAbnormal = 1 };

/// One video's snippet features and labels.
struct VideoRecord {
    std::string id;
    VideoLabel label = VideoLabel::kNormal;
    Tensor snippets;  ///< N x P x C
    std::size_t frame_count = 0;
    /// Per-frame ground truth (1 = abnormal); evaluation splits only.
    std::optional<std::vector<std::uint8_t>> frame_mask;

    bool abnormal() const { return label == VideoLabel::kAbnormal; }
};

struct ManifestEntry {
    std::string id;
    VideoLabel label = VideoLabel::kNormal;
    std::filesystem::path path;       ///< resolved against the manifest directory
    std::size_t frame_count = 0;
    std::optional<std::filesystem::path> mask_path;
};

struct DatasetManifest {
    int version = 1;
    std::string split;
    std::size_t crops = 0;     ///< P
    std::size_t channels = 0;  ///< C
    std::vector<ManifestEntry> videos;
};

/// Manifest JSON layout:
///   {"version": 1, "split": "train", "dims": {"P": 10, "C": 2048},
///    "videos": [{"id", "label", "path", "frame_count", "mask_path"?}]}
/// Relative paths are resolved against the manifest's directory. Every
/// feature header is read to confirm (P, C). Throws LoadError naming the
/// offending entry.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes `manifest` with paths made relative to the manifest directory
/// when they live below it.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Little-endian feature file: "MGFN", u32 version=1, u32 N, u32 P, u32 C,
/// then N*P*C f32 values, N outermost and C innermost.
struct FeatureHeader {
    std::uint32_t snippets = 0;
    std::uint32_t crops = 0;
    std::uint32_t channels = 0;
};

inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 20;

void write_features(const std::filesystem::path& path, const FeatureHeader& header,
                    std::span<const float> values);
FeatureHeader read_feature_header(const std::filesystem::path& path);
std::vector<float> read_features(const std::filesystem::path& path, FeatureHeader& header);

/// Mask file: one byte per frame, each 0 or 1.
void write_mask(const std::filesystem::path& path, std::span<const std::uint8_t> mask);
std::vector<std::uint8_t> read_mask(const std::filesystem::path& path, std::size_t frame_count);

VideoRecord load_video(const ManifestEntry& entry, const DatasetManifest& manifest);
std::vector<VideoRecord> load_videos(const DatasetManifest& manifest);

/// Boundaries b[t] = floor(n * t / parts), t = 0..parts. Group t is
/// [b[t], b[t+1]); groups can be empty only when n < parts.
std::vector<std::size_t> partition_bounds(std::size_t n, std::size_t parts);

/// Mean-pools the N snippets into T contiguous groups (see
/// `partition_bounds`). Empty groups (N < T) take snippet floor(N t / T).
Tensor segment_to_clips(const VideoRecord& record, std::size_t clips);

/// Frame-level anomaly scores.
using ScoreSeries = std::vector<double>;

/// Piecewise-constant expansion: frame f takes the score of the clip whose
/// frame group, partitioned like snippets, contains f.
ScoreSeries expand_scores_to_frames(std::span<const double> clip_scores, std::size_t frame_count);

}  // namespace mgfn
