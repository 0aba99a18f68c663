#pragma once

#include <array>
#include <string_view>

#include "factorlab/panel.hpp"
#include "factorlab/transforms.hpp"

namespace factorlab::portfolio {

/// Cells of the independent 2x3 size/value sort.
enum class Leg { SG, SN, SV, BG, BN, BV };

inline constexpr std::array<Leg, 6> kAllLegs{Leg::SG, Leg::SN, Leg::SV, Leg::BG, Leg::BN, Leg::BV};

std::string_view leg_name(Leg leg);
Leg parse_leg(std::string_view name);

/// Long-only weights over member cells, proportional to `weight_by` (equal
/// weights when null) and normalized to one per date. Members without a
/// weight are excluded; non-members are missing.
Panel weights_from_membership(const Panel& member, const Panel* weight_by = nullptr, Flags* flags = nullptr);

/// Weights formed at month t earn month t+1 returns; the result is stamped
/// at t+1. Weights of assets without a t+1 return are dropped and the rest
/// renormalized.
Series portfolio_return(const Panel& weights, const Panel& returns);

/// 1 where size bin and value bin both match the leg, 0 for other doubly
/// binned assets, missing when either bin is missing.
Panel independent_sort_2x3(const Panel& size_bins, const Panel& value_bins, Leg leg);

/// 0.5 (SV + BV) - 0.5 (SG + BG). Legs in kAllLegs order.
Series spread_2x3(const std::array<const Series*, 6>& legs);

Series spread_topbottom(const Series& top, const Series& bottom);

/// 0.5 * sum |w_t - w_{t-1}| with missing weights read as zero. The first
/// date has no predecessor and is missing.
Series turnover(const Panel& weights);

}  // namespace factorlab::portfolio
