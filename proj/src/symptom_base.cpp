#include "dxdialog/symptom_base.hpp"

#include "dxdialog/error.hpp"

namespace dxdialog {

std::string_view to_string(SymptomStatus s) {
    switch (s) {
        case SymptomStatus::present: return "present";
        case SymptomStatus::absent: return "absent";
        case SymptomStatus::asked_unanswered: return "asked_unanswered";
    }
    return "?";
}

SymptomStatus symptom_status_from_string(std::string_view s) {
    if (s == "present") return SymptomStatus::present;
    if (s == "absent") return SymptomStatus::absent;
    if (s == "asked_unanswered") return SymptomStatus::asked_unanswered;
    throw ValidationError("unknown symptom status '" + std::string(s) + "'");
}

std::string_view to_string(Polarity p) {
    return p == Polarity::present ? "present" : "absent";
}

void SymptomBase::record(const std::string& symptom_id, Polarity polarity) {
    entries_[symptom_id] =
        polarity == Polarity::present ? SymptomStatus::present : SymptomStatus::absent;
}

void SymptomBase::mark_asked(const std::string& symptom_id) {
    entries_.try_emplace(symptom_id, SymptomStatus::asked_unanswered);
}

std::optional<SymptomStatus> SymptomBase::status(std::string_view symptom_id) const {
    auto it = entries_.find(symptom_id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

bool SymptomBase::is_checked(std::string_view symptom_id) const {
    auto s = status(symptom_id);
    return s && *s != SymptomStatus::asked_unanswered;
}

bool SymptomBase::contains(std::string_view symptom_id) const {
    return entries_.find(symptom_id) != entries_.end();
}

bool SymptomBase::is_present(std::string_view symptom_id) const {
    auto s = status(symptom_id);
    return s && *s == SymptomStatus::present;
}

}  // namespace dxdialog
