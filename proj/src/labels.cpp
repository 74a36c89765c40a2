#include "dxdialog/labels.hpp"

#include "dxdialog/text.hpp"

namespace dxdialog {

std::optional<std::size_t> label_index(std::string_view name) {
    std::string key = to_lower(trim(name));
    for (char& c : key) {
        if (c == '_') c = ' ';
    }
    for (std::size_t i = 0; i < kLabelCount; ++i) {
        if (kLabelNames[i] == key) return i;
    }
    return std::nullopt;
}

}  // namespace dxdialog
