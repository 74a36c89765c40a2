#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace dxdialog {

enum class SymptomStatus { present, absent, asked_unanswered };
enum class Polarity { present, absent };

std::string_view to_string(SymptomStatus s);
SymptomStatus symptom_status_from_string(std::string_view s);
std::string_view to_string(Polarity p);

/// Everything the patient has confirmed, denied, or been asked about in one session.
class SymptomBase {
public:
    using Map = std::map<std::string, SymptomStatus, std::less<>>;

    /// A patient statement. Overwrites any previous status for the symptom.
    void record(const std::string& symptom_id, Polarity polarity);
    /// Marks a question as asked; leaves an existing answer untouched.
    void mark_asked(const std::string& symptom_id);

    std::optional<SymptomStatus> status(std::string_view symptom_id) const;
    /// Answered present or absent.
    bool is_checked(std::string_view symptom_id) const;
    /// Any status at all, including asked_unanswered.
    bool contains(std::string_view symptom_id) const;
    bool is_present(std::string_view symptom_id) const;

    const Map& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }

    void set_raw(const std::string& symptom_id, SymptomStatus status) { entries_[symptom_id] = status; }

    friend bool operator==(const SymptomBase&, const SymptomBase&) = default;

private:
    Map entries_;
};

}  // namespace dxdialog
