// SPDX-License-Identifier: Apache-2.0

#include "mgfn/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "binary_io.hpp"
#include "mgfn/errors.hpp"

namespace mgfn {

namespace {

constexpr std::string_view kMagic = "MGCK";

void write_blobs(detail::ByteWriter& out, const std::vector<NamedBlob>& blobs, bool single) {
    out.u32(static_cast<std::uint32_t>(blobs.size()));
    for (const auto& b : blobs) {
        out.u32(static_cast<std::uint32_t>(b.name.size()));
        out.bytes(b.name);
        out.u64(b.values.size());
        for (double v : b.values) {
            if (single) {
                out.f32(static_cast<float>(v));
            } else {
                out.f64(v);
            }
        }
    }
}

std::vector<NamedBlob> read_blobs(detail::ByteReader& in, bool single) {
    const auto count = in.u32();
    std::vector<NamedBlob> blobs;
    for (std::uint32_t i = 0; i < count && in.ok(); ++i) {
        NamedBlob b;
        b.name = std::string(in.bytes(in.u32()));
        const auto n = in.u64();
        const std::size_t width = single ? 4 : 8;
        if (!in.ok() || n > in.remaining() / width) {
            throw CheckpointError("checkpoint truncated in blob '" + b.name + "'");
        }
        b.values.resize(n);
        for (auto& v : b.values) {
            v = single ? static_cast<double>(in.f32()) : in.f64();
        }
        blobs.push_back(std::move(b));
    }
    if (!in.ok()) {
        throw CheckpointError("checkpoint truncated in blob table");
    }
    return blobs;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
    nlohmann::json header{
        {"arch", c.arch},
        {"loss", c.loss},
        {"seed", c.seed},
        {"step", c.step},
        {"training", c.training},
        {"optimizer_step", c.optimizer_step},
    };
    const std::string text = header.dump();
    detail::ByteWriter out;
    out.bytes(kMagic);
    out.u32(kCheckpointVersion);
    out.u32(static_cast<std::uint32_t>(text.size()));
    out.bytes(text);
    write_blobs(out, c.params, true);
    write_blobs(out, c.optimizer, false);
    return out.buffer();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    detail::ByteReader in(bytes);
    if (in.bytes(4) != kMagic) {
        throw CheckpointError("not a checkpoint (bad magic)");
    }
    const auto version = in.u32();
    if (!in.ok()) {
        throw CheckpointError("checkpoint truncated in header");
    }
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto len = in.u32();
    const auto text = in.bytes(len);
    if (!in.ok()) {
        throw CheckpointError("checkpoint truncated in header");
    }
    Checkpoint c;
    try {
        const auto header = nlohmann::json::parse(text);
        c.arch = header.at("arch").get<ArchitectureDescriptor>();
        c.loss = header.at("loss").get<LossSettings>();
        c.seed = header.at("seed").get<std::uint64_t>();
        c.step = header.at("step").get<std::uint64_t>();
        c.training = header.at("training");
        c.optimizer_step = header.at("optimizer_step").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    }
    c.params = read_blobs(in, true);
    c.optimizer = read_blobs(in, false);
    if (in.remaining() != 0) {
        throw CheckpointError("trailing bytes after checkpoint payload");
    }
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    const auto bytes = encode_checkpoint(checkpoint);
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    // Write-then-rename keeps a reader from seeing a half-written file.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw CheckpointError("cannot write " + tmp.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw CheckpointError("short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open checkpoint " + path.string());
    }
    const std::string bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>{});
    return decode_checkpoint(bytes);
}

}  // namespace mgfn
