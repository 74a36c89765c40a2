#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace dxdialog {

inline constexpr std::size_t kLabelCount = 14;

/// The fourteen report categories in CheXpert order.
inline constexpr std::array<std::string_view, kLabelCount> kLabelNames = {
    "atelectasis",      "cardiomegaly",  "consolidation", "edema",
    "enlarged cardiomediastinum", "fracture", "lung lesion", "lung opacity",
    "no finding",       "pleural effusion", "pleural other", "pneumonia",
    "pneumothorax",     "support devices",
};

/// Header of the section that report assembly appends and the labeler reads back.
inline constexpr std::string_view kConditionsSentinel = "IDENTIFIED CONDITIONS:";

/// Case-insensitive; accepts underscores in place of spaces ("pleural_effusion").
std::optional<std::size_t> label_index(std::string_view name);

using BoolLabels = std::array<bool, kLabelCount>;
using LabelProbabilities = std::array<double, kLabelCount>;

}  // namespace dxdialog
