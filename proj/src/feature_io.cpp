// SPDX-License-Identifier: Apache-2.0

#include "mgfn/feature_io.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "mgfn/errors.hpp"

namespace mgfn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kFeatureMagic = "MGFN";

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError("cannot open " + path.string());
    }
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw LoadError("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw LoadError("short write to " + path.string());
    }
}

FeatureHeader parse_header(detail::ByteReader& in, const fs::path& path) {
    if (in.bytes(4) != kFeatureMagic) {
        throw LoadError(path.string() + ": not a feature file (bad magic)");
    }
    const auto version = in.u32();
    FeatureHeader h;
    h.snippets = in.u32();
    h.crops = in.u32();
    h.channels = in.u32();
    if (!in.ok()) {
        throw LoadError(path.string() + ": truncated feature header");
    }
    if (version != kFeatureVersion) {
        throw LoadError(path.string() + ": unsupported feature version " + std::to_string(version));
    }
    return h;
}

VideoLabel parse_label(const json& j, const std::string& id) {
    const int v = j.get<int>();
    if (v != 0 && v != 1) {
        throw LoadError("video '" + id + "': label must be 0 or 1, got " + std::to_string(v));
    }
    return static_cast<VideoLabel>(v);
}

}  // namespace

void write_features(const fs::path& path, const FeatureHeader& header, std::span<const float> values) {
    const std::size_t expected = std::size_t{header.snippets} * header.crops * header.channels;
    if (values.size() != expected) {
        throw DimensionError("write_features: " + std::to_string(values.size()) +
                             " values for header " + std::to_string(header.snippets) + "x" +
                             std::to_string(header.crops) + "x" + std::to_string(header.channels));
    }
    detail::ByteWriter out;
    out.bytes(kFeatureMagic);
    out.u32(kFeatureVersion);
    out.u32(header.snippets);
    out.u32(header.crops);
    out.u32(header.channels);
    for (float v : values) {
        out.f32(v);
    }
    write_file(path, out.buffer());
}

FeatureHeader read_feature_header(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError("cannot open " + path.string());
    }
    std::string head(kFeatureHeaderBytes, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    head.resize(static_cast<std::size_t>(in.gcount()));
    detail::ByteReader reader(head);
    return parse_header(reader, path);
}

std::vector<float> read_features(const fs::path& path, FeatureHeader& header) {
    const std::string bytes = read_file(path);
    detail::ByteReader in(bytes);
    header = parse_header(in, path);
    const std::size_t count = std::size_t{header.snippets} * header.crops * header.channels;
    if (in.remaining() != count * sizeof(float)) {
        throw LoadError(path.string() + ": payload holds " + std::to_string(in.remaining()) +
                        " bytes, header implies " + std::to_string(count * sizeof(float)));
    }
    std::vector<float> values(count);
    for (auto& v : values) {
        v = in.f32();
    }
    return values;
}

void write_mask(const fs::path& path, std::span<const std::uint8_t> mask) {
    std::string bytes(mask.size(), '\0');
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] > 1) {
            throw ArgumentError("write_mask: mask values must be 0 or 1");
        }
        bytes[i] = static_cast<char>(mask[i]);
    }
    write_file(path, bytes);
}

std::vector<std::uint8_t> read_mask(const fs::path& path, std::size_t frame_count) {
    const std::string bytes = read_file(path);
    if (bytes.size() != frame_count) {
        throw LoadError(path.string() + ": mask has " + std::to_string(bytes.size()) +
                        " frames, expected " + std::to_string(frame_count));
    }
    std::vector<std::uint8_t> mask(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const auto b = static_cast<std::uint8_t>(bytes[i]);
        if (b > 1) {
            throw LoadError(path.string() + ": mask byte " + std::to_string(i) + " is not 0/1");
        }
        mask[i] = b;
    }
    return mask;
}

DatasetManifest load_manifest(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw LoadError(path.string() + ": malformed manifest: " + e.what());
    }
    const fs::path base = path.parent_path();
    DatasetManifest m;
    try {
        m.version = doc.at("version").get<int>();
        if (m.version != 1) {
            throw LoadError(path.string() + ": unsupported manifest version " + std::to_string(m.version));
        }
        m.split = doc.value("split", std::string{});
        m.crops = doc.at("dims").at("P").get<std::size_t>();
        m.channels = doc.at("dims").at("C").get<std::size_t>();
        std::set<std::string> seen;
        for (const auto& v : doc.at("videos")) {
            ManifestEntry e;
            e.id = v.at("id").get<std::string>();
            if (!seen.insert(e.id).second) {
                throw LoadError(path.string() + ": duplicate video id '" + e.id + "'");
            }
            e.label = parse_label(v.at("label"), e.id);
            e.path = base / v.at("path").get<std::string>();
            e.frame_count = v.at("frame_count").get<std::size_t>();
            if (v.contains("mask_path") && !v.at("mask_path").is_null()) {
                e.mask_path = base / v.at("mask_path").get<std::string>();
            }
            m.videos.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw LoadError(path.string() + ": malformed manifest: " + e.what());
    }

    for (const auto& e : m.videos) {
        if (!fs::exists(e.path)) {
            throw LoadError("video '" + e.id + "': feature file " + e.path.string() + " not found");
        }
        if (e.mask_path && !fs::exists(*e.mask_path)) {
            throw LoadError("video '" + e.id + "': mask file " + e.mask_path->string() + " not found");
        }
        const auto h = read_feature_header(e.path);
        if (h.crops != m.crops || h.channels != m.channels) {
            throw LoadError("video '" + e.id + "': dims (P=" + std::to_string(h.crops) + ", C=" +
                            std::to_string(h.channels) + ") differ from manifest (P=" +
                            std::to_string(m.crops) + ", C=" + std::to_string(m.channels) + ")");
        }
        if (h.snippets == 0) {
            throw LoadError("video '" + e.id + "': feature file has no snippets");
        }
    }
    return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
    const fs::path base = path.parent_path();
    auto rel = [&](const fs::path& p) {
        const auto r = p.lexically_relative(base.empty() ? fs::path(".") : base);
        return (!r.empty() && *r.begin() != "..") ? r.generic_string() : p.generic_string();
    };
    json videos = json::array();
    for (const auto& e : manifest.videos) {
        json v{{"id", e.id},
               {"label", static_cast<int>(e.label)},
               {"path", rel(e.path)},
               {"frame_count", e.frame_count}};
        if (e.mask_path) {
            v["mask_path"] = rel(*e.mask_path);
        }
        videos.push_back(std::move(v));
    }
    json doc{{"version", manifest.version},
             {"split", manifest.split},
             {"dims", {{"P", manifest.crops}, {"C", manifest.channels}}},
             {"videos", std::move(videos)}};
    write_file(path, doc.dump(2) + "\n");
}

VideoRecord load_video(const ManifestEntry& entry, const DatasetManifest& manifest) {
    FeatureHeader h;
    const auto raw = read_features(entry.path, h);
    if (h.crops != manifest.crops || h.channels != manifest.channels) {
        throw LoadError("video '" + entry.id + "': feature dims differ from manifest");
    }
    VideoRecord r;
    r.id = entry.id;
    r.label = entry.label;
    r.frame_count = entry.frame_count;
    r.snippets = Tensor::from({h.snippets, h.crops, h.channels},
                              std::vector<double>(raw.begin(), raw.end()));
    if (entry.mask_path) {
        r.frame_mask = read_mask(*entry.mask_path, entry.frame_count);
        if (!r.abnormal() &&
            std::any_of(r.frame_mask->begin(), r.frame_mask->end(), [](auto b) { return b != 0; })) {
            throw LoadError("video '" + entry.id + "': normal video has abnormal frames in its mask");
        }
    }
    return r;
}

std::vector<VideoRecord> load_videos(const DatasetManifest& manifest) {
    std::vector<VideoRecord> out;
    out.reserve(manifest.videos.size());
    for (const auto& e : manifest.videos) {
        out.push_back(load_video(e, manifest));
    }
    return out;
}

std::vector<std::size_t> partition_bounds(std::size_t n, std::size_t parts) {
    std::vector<std::size_t> b(parts + 1);
    for (std::size_t t = 0; t <= parts; ++t) {
        b[t] = static_cast<std::size_t>((static_cast<unsigned __int128>(n) * t) / parts);
    }
    return b;
}

Tensor segment_to_clips(const VideoRecord& record, std::size_t clips) {
    if (clips == 0) {
        throw ArgumentError("segment_to_clips: T must be at least 1");
    }
    const auto& s = record.snippets;
    if (s.rank() != 3 || s.dim(0) == 0) {
        throw DimensionError("segment_to_clips: snippets must be N x P x C with N >= 1, got " +
                             shape_str(s.shape()));
    }
    const std::size_t n = s.dim(0);
    const std::size_t row = s.dim(1) * s.dim(2);
    const auto bounds = partition_bounds(n, clips);
    const auto x = s.data();
    std::vector<double> out(clips * row, 0.0);
    for (std::size_t t = 0; t < clips; ++t) {
        std::size_t lo = bounds[t];
        std::size_t hi = bounds[t + 1];
        if (lo == hi) {
            hi = lo + 1;  // nearest-index upsampling; lo < n whenever the group is empty
        }
        const double inv = 1.0 / static_cast<double>(hi - lo);
        double* y = &out[t * row];
        for (std::size_t i = lo; i < hi; ++i) {
            for (std::size_t j = 0; j < row; ++j) {
                y[j] += x[i * row + j];
            }
        }
        for (std::size_t j = 0; j < row; ++j) {
            y[j] *= inv;
        }
    }
    return Tensor::from({clips, s.dim(1), s.dim(2)}, std::move(out));
}

ScoreSeries expand_scores_to_frames(std::span<const double> clip_scores, std::size_t frame_count) {
    if (clip_scores.empty()) {
        throw ArgumentError("expand_scores_to_frames: no clip scores");
    }
    const auto bounds = partition_bounds(frame_count, clip_scores.size());
    ScoreSeries frames(frame_count);
    for (std::size_t t = 0; t < clip_scores.size(); ++t) {
        std::fill(frames.begin() + static_cast<std::ptrdiff_t>(bounds[t]),
                  frames.begin() + static_cast<std::ptrdiff_t>(bounds[t + 1]), clip_scores[t]);
    }
    return frames;
}

}  // namespace mgfn
