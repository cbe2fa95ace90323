// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include <json.hpp>

namespace mgfn {

/// Block composition after the amplification stage.
enum class BlockOrder {
    kGlanceFocus,  ///< GF: glance (C -> C/32) then focus (C/32 -> C/16)
    kFocusFocus,   ///< FF: focus (C -> C/16) then focus (C/16 -> C/16)
    kFocusGlance,  ///< FG: focus (C -> C/16) then glance (C/16 -> C/32)
    kFusion,       ///< GF-Fusion: glance and focus in parallel on the FAM output, summed
};

std::string_view to_string(BlockOrder order);
/// Accepts "gf", "ff", "fg", "gf-fusion" (case-insensitive, '_' or '-').
BlockOrder parse_block_order(std::string_view text);

/// Shape and hyper-parameters that determine the parameter layout.
struct ArchitectureDescriptor {
    BlockOrder block_order = BlockOrder::kGlanceFocus;
    std::size_t channels = 2048;  ///< C, input feature width
    std::size_t clips = 32;       ///< T
    std::size_t crops = 10;       ///< P
    std::size_t topk = 3;         ///< k
    double alpha = 0.1;           ///< FAM residual weight
    std::size_t fam_kernel = 3;
    std::size_t scc_kernel = 3;
    std::size_t sac_window = 5;
    bool sac_full = false;        ///< literal all-channel SAC sum
    bool sac_normalize = false;
    bool attention_scale = false; ///< divide logits by sqrt(D)
    std::size_t ffn_mult = 4;
    /// Score-head hidden widths; 0 derives D_out/4 and D_out/32 (at least 1).
    std::size_t head_hidden1 = 0;
    std::size_t head_hidden2 = 0;
    double dropout = 0.7;

    std::size_t glance_width() const { return channels / 32; }
    std::size_t focus_width() const { return channels / 16; }
    /// Feature width entering the score head.
    std::size_t output_width() const;
    std::size_t head_width1() const;
    std::size_t head_width2() const;

    /// Throws ConfigError when widths do not divide or options are invalid.
    void validate() const;

    bool operator==(const ArchitectureDescriptor&) const = default;
};

enum class LossVariant { kMagnitudeContrastive, kRtfm, kSceOnly };

std::string_view to_string(LossVariant variant);
LossVariant parse_loss_variant(std::string_view text);

/// Weights and options of the training objective.
struct LossSettings {
    LossVariant variant = LossVariant::kMagnitudeContrastive;
    double lambda_ts = 1.0;   ///< lambda_1
    double lambda_sp = 1.0;   ///< lambda_2
    double lambda_mc = 0.001; ///< lambda_3, also weights the RTFM magnitude term
    double margin = 100.0;
    /// Same-class distance = signed min, cross-class distance = signed max of
    /// (m_a - m_b) over the k x k candidates, instead of the absolute
    /// hardest-pair distances. Kept for comparison runs.
    bool signed_pair_distances = false;

    bool operator==(const LossSettings&) const = default;
};

void to_json(nlohmann::json& j, const ArchitectureDescriptor& a);
void from_json(const nlohmann::json& j, ArchitectureDescriptor& a);
void to_json(nlohmann::json& j, const LossSettings& s);
void from_json(const nlohmann::json& j, LossSettings& s);

}  // namespace mgfn
