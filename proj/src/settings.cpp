// SPDX-License-Identifier: Apache-2.0

#include "mgfn/settings.hpp"

#include <algorithm>
#include <cctype>

#include "mgfn/errors.hpp"

namespace mgfn {

namespace {

std::string normalize_token(std::string_view text) {
    std::string s(text);
    for (auto& c : s) {
        c = c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return s;
}

}  // namespace

std::string_view to_string(BlockOrder order) {
    switch (order) {
        case BlockOrder::kGlanceFocus: return "gf";
        case BlockOrder::kFocusFocus: return "ff";
        case BlockOrder::kFocusGlance: return "fg";
        case BlockOrder::kFusion: return "gf-fusion";
    }
    return "?";
}

BlockOrder parse_block_order(std::string_view text) {
    const auto s = normalize_token(text);
    if (s == "gf") return BlockOrder::kGlanceFocus;
    if (s == "ff") return BlockOrder::kFocusFocus;
    if (s == "fg") return BlockOrder::kFocusGlance;
    if (s == "gf-fusion") return BlockOrder::kFusion;
    throw ConfigError("unknown block order '" + std::string(text) + "' (gf|ff|fg|gf-fusion)");
}

std::string_view to_string(LossVariant variant) {
    switch (variant) {
        case LossVariant::kMagnitudeContrastive: return "mc";
        case LossVariant::kRtfm: return "rtfm";
        case LossVariant::kSceOnly: return "sce";
    }
    return "?";
}

LossVariant parse_loss_variant(std::string_view text) {
    const auto s = normalize_token(text);
    if (s == "mc") return LossVariant::kMagnitudeContrastive;
    if (s == "rtfm") return LossVariant::kRtfm;
    if (s == "sce") return LossVariant::kSceOnly;
    throw ConfigError("unknown loss variant '" + std::string(text) + "' (mc|rtfm|sce)");
}

std::size_t ArchitectureDescriptor::output_width() const {
    return block_order == BlockOrder::kFocusGlance ? glance_width() : focus_width();
}

std::size_t ArchitectureDescriptor::head_width1() const {
    return head_hidden1 != 0 ? head_hidden1 : std::max<std::size_t>(1, output_width() / 4);
}

std::size_t ArchitectureDescriptor::head_width2() const {
    return head_hidden2 != 0 ? head_hidden2 : std::max<std::size_t>(1, output_width() / 32);
}

void ArchitectureDescriptor::validate() const {
    const bool uses_glance = block_order != BlockOrder::kFocusFocus;
    const std::size_t divisor = uses_glance ? 32 : 16;
    if (channels == 0 || channels % divisor != 0) {
        throw ConfigError("channel count " + std::to_string(channels) + " must be a positive multiple of " +
                          std::to_string(divisor) + " for block order " +
                          std::string(to_string(block_order)));
    }
    if (clips == 0 || crops == 0) {
        throw ConfigError("clip and crop counts must be positive");
    }
    if (topk == 0 || topk > clips) {
        throw ConfigError("top-k " + std::to_string(topk) + " must lie in [1, T=" +
                          std::to_string(clips) + "]");
    }
    if (!(alpha >= 0.0)) {
        throw ConfigError("alpha must be non-negative");
    }
    for (auto [name, k] : {std::pair{"fam_kernel", fam_kernel}, std::pair{"scc_kernel", scc_kernel},
                           std::pair{"sac_window", sac_window}}) {
        if (k % 2 == 0) {
            throw ConfigError(std::string(name) + " must be odd, got " + std::to_string(k));
        }
    }
    if (ffn_mult == 0) {
        throw ConfigError("ffn_mult must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw ConfigError("dropout must lie in [0, 1)");
    }
}

void to_json(nlohmann::json& j, const ArchitectureDescriptor& a) {
    j = nlohmann::json{
        {"block_order", std::string(to_string(a.block_order))},
        {"C", a.channels},
        {"T", a.clips},
        {"P", a.crops},
        {"k", a.topk},
        {"alpha", a.alpha},
        {"fam_kernel", a.fam_kernel},
        {"scc_kernel", a.scc_kernel},
        {"sac_window", a.sac_window},
        {"sac_full", a.sac_full},
        {"sac_normalize", a.sac_normalize},
        {"attention_scale", a.attention_scale},
        {"ffn_mult", a.ffn_mult},
        {"head_hidden1", a.head_width1()},
        {"head_hidden2", a.head_width2()},
        {"dropout", a.dropout},
    };
}

void from_json(const nlohmann::json& j, ArchitectureDescriptor& a) {
    a.block_order = parse_block_order(j.at("block_order").get<std::string>());
    a.channels = j.at("C").get<std::size_t>();
    a.clips = j.at("T").get<std::size_t>();
    a.crops = j.at("P").get<std::size_t>();
    a.topk = j.at("k").get<std::size_t>();
    a.alpha = j.at("alpha").get<double>();
    a.fam_kernel = j.at("fam_kernel").get<std::size_t>();
    a.scc_kernel = j.at("scc_kernel").get<std::size_t>();
    a.sac_window = j.at("sac_window").get<std::size_t>();
    a.sac_full = j.at("sac_full").get<bool>();
    a.sac_normalize = j.at("sac_normalize").get<bool>();
    a.attention_scale = j.at("attention_scale").get<bool>();
    a.ffn_mult = j.at("ffn_mult").get<std::size_t>();
    a.head_hidden1 = j.at("head_hidden1").get<std::size_t>();
    a.head_hidden2 = j.at("head_hidden2").get<std::size_t>();
    a.dropout = j.at("dropout").get<double>();
}

void to_json(nlohmann::json& j, const LossSettings& s) {
    j = nlohmann::json{
        {"variant", std::string(to_string(s.variant))},
        {"lambda1", s.lambda_ts},
        {"lambda2", s.lambda_sp},
        {"lambda3", s.lambda_mc},
        {"margin", s.margin},
        {"signed_pair_distances", s.signed_pair_distances},
    };
}

void from_json(const nlohmann::json& j, LossSettings& s) {
    s.variant = parse_loss_variant(j.at("variant").get<std::string>());
    s.lambda_ts = j.at("lambda1").get<double>();
    s.lambda_sp = j.at("lambda2").get<double>();
    s.lambda_mc = j.at("lambda3").get<double>();
    s.margin = j.at("margin").get<double>();
    s.signed_pair_distances = j.at("signed_pair_distances").get<bool>();
}

}  // namespace mgfn
