// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mgfn/feature_io.hpp"

namespace mgfn {

/// One synthetic scene: a fixed "movement" direction and level shared by all
/// of its videos, plus an optional anomaly added inside a random window.
struct SceneSpec {
    std::string name;
    double base_magnitude = 10.0;  ///< norm of the scene component
    double noise_scale = 1.0;      ///< expected norm of the per-snippet Gaussian noise
    double base_jitter = 0.0;      ///< per-video relative spread of base_magnitude
    double anomaly_boost = 5.0;    ///< norm of the component added to abnormal snippets
    /// Unit vector in R^C; empty draws one direction per dataset from the seed.
    std::vector<double> anomaly_direction;
    std::size_t normal_train = 0;
    std::size_t abnormal_train = 0;
    std::size_t normal_test = 0;
    std::size_t abnormal_test = 0;
    std::size_t snippets_per_video = 32;
    double window_min = 0.15;  ///< anomaly window length, fraction of the video
    double window_max = 0.35;
};

struct SynthDims {
    std::size_t crops = 10;      ///< P
    std::size_t channels = 2048; ///< C
    std::size_t frames_per_snippet = 16;
    /// Draw scene and anomaly directions from the positive orthant, like
    /// post-ReLU backbone features; otherwise isotropic.
    bool rectified = false;
};

struct SynthPreset {
    std::string name;
    SynthDims dims;
    std::size_t clips = 32;  ///< suggested T for training on this data
    std::vector<SceneSpec> scenes;
};

/// "fig2": a busy normal-only scene whose magnitudes exceed those of a quiet
/// scene holding the abnormal videos, anomalies included. "balanced": equal
/// base magnitudes across scenes. "micro": T=4, P=2, C=64 fixture data.
/// Throws ArgumentError on an unknown name.
SynthPreset preset(std::string_view name);

struct SynthDataset {
    DatasetManifest train;
    DatasetManifest test;
    std::filesystem::path train_manifest;  ///< <out>/train.json
    std::filesystem::path test_manifest;   ///< <out>/test.json
};

/// Generates both splits in memory. Normal snippet = base * u_scene + noise;
/// abnormal snippets inside the window add anomaly_boost * anomaly_direction.
/// Test-split records carry frame masks. Deterministic per seed.
struct SynthVideos {
    std::vector<VideoRecord> train;
    std::vector<VideoRecord> test;
};
SynthVideos generate_videos(std::span<const SceneSpec> scenes, const SynthDims& dims, std::uint64_t seed);

/// Writes features (features/<id>.mgf), test masks (masks/<id>.mask) and the
/// two manifests under `out_dir`.
SynthDataset generate(std::span<const SceneSpec> scenes, const SynthDims& dims, std::uint64_t seed,
                      const std::filesystem::path& out_dir);

}  // namespace mgfn
