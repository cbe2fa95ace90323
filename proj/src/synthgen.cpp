// SPDX-License-Identifier: Apache-2.0

#include "mgfn/synthgen.hpp"

#include <algorithm>
#include <cmath>

#include "mgfn/errors.hpp"
#include "mgfn/rng.hpp"

namespace mgfn {

namespace fs = std::filesystem;

namespace {

std::vector<double> unit_vector(std::size_t n, bool rectified, Rng rng) {
    std::vector<double> v(n);
    double norm = 0.0;
    while (norm == 0.0) {
        norm = 0.0;
        for (auto& x : v) {
            x = rectified ? std::abs(rng.normal()) : rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
    }
    for (auto& x : v) {
        x /= norm;
    }
    return v;
}

void validate(const SceneSpec& s, const SynthDims& dims) {
    if (!(s.base_magnitude > 0.0)) {
        throw ArgumentError("scene '" + s.name + "': base_magnitude must be positive");
    }
    if (!(s.window_min >= 0.0 && s.window_min <= s.window_max && s.window_max <= 1.0)) {
        throw ArgumentError("scene '" + s.name + "': anomaly window fractions must satisfy 0 <= min <= max <= 1");
    }
    if (s.snippets_per_video == 0) {
        throw ArgumentError("scene '" + s.name + "': snippets_per_video must be positive");
    }
    if (!s.anomaly_direction.empty() && s.anomaly_direction.size() != dims.channels) {
        throw ArgumentError("scene '" + s.name + "': anomaly_direction must have C entries");
    }
}

struct VideoPlan {
    std::string split;
    const SceneSpec* scene;
    VideoLabel label;
    std::size_t index;
};

VideoRecord make_video(const VideoPlan& plan, const SynthDims& dims, const std::vector<double>& scene_dir,
                       const std::vector<double>& anomaly_dir, const Rng& root) {
    const auto& s = *plan.scene;
    const bool abnormal = plan.label == VideoLabel::kAbnormal;
    const std::string id = plan.split + "_" + s.name + "_" + (abnormal ? "abnormal" : "normal") + "_" +
                           std::to_string(plan.index);
    Rng rng = root.split(plan.split).split(s.name).split(abnormal ? "abnormal" : "normal").split(plan.index);

    const std::size_t n = s.snippets_per_video;
    const std::size_t c = dims.channels;
    const double base = s.base_magnitude * std::max(0.0, 1.0 + s.base_jitter * rng.normal());

    std::size_t win_lo = 0;
    std::size_t win_hi = 0;
    if (abnormal) {
        const double frac = rng.uniform(s.window_min, s.window_max);
        const std::size_t len = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::lround(frac * static_cast<double>(n))), 1, n);
        win_lo = static_cast<std::size_t>(rng.below(n - len + 1));
        win_hi = win_lo + len;
    }

    const double noise_sd = s.noise_scale / std::sqrt(static_cast<double>(c));
    std::vector<double> values(n * dims.crops * c);
    for (std::size_t i = 0; i < n; ++i) {
        const bool in_window = i >= win_lo && i < win_hi;
        for (std::size_t p = 0; p < dims.crops; ++p) {
            double* x = &values[(i * dims.crops + p) * c];
            for (std::size_t ch = 0; ch < c; ++ch) {
                double v = base * scene_dir[ch] + noise_sd * rng.normal();
                if (in_window) {
                    v += s.anomaly_boost * anomaly_dir[ch];
                }
                // Stored as f32 on disk; round here so in-memory and loaded data agree.
                x[ch] = static_cast<double>(static_cast<float>(v));
            }
        }
    }

    VideoRecord r;
    r.id = id;
    r.label = plan.label;
    r.snippets = Tensor::from({n, dims.crops, c}, std::move(values));
    r.frame_count = n * dims.frames_per_snippet;
    if (plan.split == "test") {
        std::vector<std::uint8_t> mask(r.frame_count, 0);
        for (std::size_t f = 0; f < r.frame_count; ++f) {
            const std::size_t snippet = f / dims.frames_per_snippet;
            mask[f] = (snippet >= win_lo && snippet < win_hi) ? 1 : 0;
        }
        r.frame_mask = std::move(mask);
    }
    return r;
}

}  // namespace

SynthPreset preset(std::string_view name) {
    SynthPreset p;
    p.name = std::string(name);
    if (name == "fig2") {
        p.dims = {2, 256, 16, true};
        p.clips = 32;
        SceneSpec busy;
        busy.name = "busy";
        busy.base_magnitude = 60.0;
        busy.noise_scale = 4.0;
        busy.anomaly_boost = 0.0;
        busy.normal_train = 10;
        busy.normal_test = 5;
        SceneSpec quiet;
        quiet.name = "quiet";
        quiet.base_magnitude = 20.0;
        quiet.noise_scale = 4.0;
        quiet.anomaly_boost = 15.0;
        quiet.normal_train = 10;
        quiet.abnormal_train = 20;
        quiet.normal_test = 5;
        quiet.abnormal_test = 10;
        p.scenes = {busy, quiet};
    } else if (name == "balanced") {
        p.dims = {2, 256, 16, true};
        p.clips = 32;
        for (const char* scene : {"street", "lobby"}) {
            SceneSpec s;
            s.name = scene;
            s.base_magnitude = 30.0;
            s.noise_scale = 4.0;
            s.anomaly_boost = 15.0;
            s.normal_train = 10;
            s.abnormal_train = 10;
            s.normal_test = 5;
            s.abnormal_test = 5;
            p.scenes.push_back(s);
        }
    } else if (name == "micro") {
        p.dims = {2, 64, 4};
        p.clips = 4;
        SceneSpec s;
        s.name = "micro";
        s.base_magnitude = 10.0;
        s.noise_scale = 2.0;
        s.anomaly_boost = 8.0;
        s.normal_train = 4;
        s.abnormal_train = 4;
        s.normal_test = 2;
        s.abnormal_test = 2;
        s.snippets_per_video = 8;
        s.window_min = 0.25;
        s.window_max = 0.5;
        p.scenes = {s};
    } else {
        throw ArgumentError("unknown synthetic preset '" + std::string(name) + "' (fig2|balanced|micro)");
    }
    return p;
}

SynthVideos generate_videos(std::span<const SceneSpec> scenes, const SynthDims& dims, std::uint64_t seed) {
    if (dims.crops == 0 || dims.channels == 0 || dims.frames_per_snippet == 0) {
        throw ArgumentError("synthetic dims must be positive");
    }
    const Rng root = Rng(seed).split("synthgen");
    const auto shared_anomaly = unit_vector(dims.channels, dims.rectified, root.split("anomaly_direction"));
    SynthVideos out;
    for (const auto& scene : scenes) {
        validate(scene, dims);
        const auto scene_dir = unit_vector(dims.channels, dims.rectified, root.split("scene").split(scene.name));
        const auto& anomaly_dir = scene.anomaly_direction.empty() ? shared_anomaly : scene.anomaly_direction;
        auto emit = [&](const char* split, VideoLabel label, std::size_t count,
                        std::vector<VideoRecord>& dst) {
            for (std::size_t i = 0; i < count; ++i) {
                dst.push_back(make_video({split, &scene, label, i}, dims, scene_dir, anomaly_dir, root));
            }
        };
        emit("train", VideoLabel::kNormal, scene.normal_train, out.train);
        emit("train", VideoLabel::kAbnormal, scene.abnormal_train, out.train);
        emit("test", VideoLabel::kNormal, scene.normal_test, out.test);
        emit("test", VideoLabel::kAbnormal, scene.abnormal_test, out.test);
    }
    return out;
}

SynthDataset generate(std::span<const SceneSpec> scenes, const SynthDims& dims, std::uint64_t seed,
                      const fs::path& out_dir) {
    const auto videos = generate_videos(scenes, dims, seed);
    fs::create_directories(out_dir);
    SynthDataset ds;
    auto write_split = [&](const std::vector<VideoRecord>& records, const std::string& split,
                           DatasetManifest& manifest) {
        manifest.split = split;
        manifest.crops = dims.crops;
        manifest.channels = dims.channels;
        for (const auto& r : records) {
            ManifestEntry e;
            e.id = r.id;
            e.label = r.label;
            e.frame_count = r.frame_count;
            e.path = out_dir / "features" / (r.id + ".mgf");
            std::vector<float> raw(r.snippets.values().begin(), r.snippets.values().end());
            write_features(e.path,
                           {static_cast<std::uint32_t>(r.snippets.dim(0)),
                            static_cast<std::uint32_t>(dims.crops),
                            static_cast<std::uint32_t>(dims.channels)},
                           raw);
            if (r.frame_mask) {
                e.mask_path = out_dir / "masks" / (r.id + ".mask");
                write_mask(*e.mask_path, *r.frame_mask);
            }
            manifest.videos.push_back(std::move(e));
        }
    };
    write_split(videos.train, "train", ds.train);
    write_split(videos.test, "test", ds.test);
    ds.train_manifest = out_dir / "train.json";
    ds.test_manifest = out_dir / "test.json";
    save_manifest(ds.train_manifest, ds.train);
    save_manifest(ds.test_manifest, ds.test);
    return ds;
}

}  // namespace mgfn
