#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "melalign/melody.hpp"

namespace melalign {

// The five musical constraints checked on every generated melody.
enum class Rule { Format = 0, Lyric = 1, Note = 2, Duration = 3, Register = 4 };
inline constexpr std::array<Rule, 5> kAllRules = {Rule::Format, Rule::Lyric, Rule::Note,
                                                  Rule::Duration, Rule::Register};
std::string_view to_string(Rule r);
std::optional<Rule> rule_from_string(std::string_view s);

enum class Verdict { Pass, Fail, NotEvaluated };

struct RuleConfig {
    double tau_note = 0.5;              // max fraction of consecutive identical pitches
    std::int64_t d_min_ms = 125;        // general note duration bounds, inclusive
    std::int64_t d_max_ms = 2000;
    std::int64_t d_final_min_ms = 250;  // final-note duration bounds, inclusive
    std::int64_t d_final_max_ms = 4000;
    int p_min = 60;                     // register bounds, inclusive (C4..C6 by default)
    int p_max = 84;

    bool operator==(const RuleConfig&) const = default;

    // Throws Error if the bounds are inconsistent.
    void validate() const;
};

struct RuleReport {
    std::array<Verdict, 5> verdicts{Verdict::NotEvaluated, Verdict::NotEvaluated,
                                    Verdict::NotEvaluated, Verdict::NotEvaluated,
                                    Verdict::NotEvaluated};
    bool compliant = false;  // true iff all five verdicts are Pass

    // Diagnostics for failed rules.
    std::optional<ParseError> format_error;
    std::string lyric_reason;
    double note_ratio = 0.0;  // measured monotony ratio (when Note was evaluated)
    std::vector<std::size_t> duration_bad_indices;
    std::vector<std::size_t> register_bad_indices;

    Verdict verdict(Rule r) const { return verdicts[static_cast<std::size_t>(r)]; }
    bool failed(Rule r) const { return verdict(r) == Verdict::Fail; }
    std::vector<Rule> failed_rules() const;
};

// Constraint 1: the text must parse into the symbolic format.
struct FormatCheck {
    Verdict verdict = Verdict::Fail;
    std::optional<Melody> melody;  // engaged on pass, for the downstream rules
    ParseError error;
};
FormatCheck check_format(std::string_view text);

// Constraint 2: the non-melisma lyric tokens must be a valid segmentation of
// the input lyric -- covering it exactly, in order, never straddling a unit
// boundary. Returns the failure reason, or empty string on pass.
std::string check_lyric(const Melody& m, const LyricLine& l_in);

// Constraint 3: monotony avoidance. Returns {verdict, measured ratio} where
// ratio = (# adjacent equal-pitch pairs) / (n - 1), defined as 0 when n == 1.
struct NoteCheck {
    Verdict verdict = Verdict::Pass;
    double ratio = 0.0;
};
NoteCheck check_note(const Melody& m, const RuleConfig& cfg);

// Constraint 4: every non-final duration in [d_min, d_max], final duration in
// [d_final_min, d_final_max]. Returns offending note indices (empty == pass).
std::vector<std::size_t> check_duration(const Melody& m, const RuleConfig& cfg);

// Constraint 5: every pitch in [p_min, p_max]. Returns offending indices.
std::vector<std::size_t> check_register(const Melody& m, const RuleConfig& cfg);

// Runs all five checks. A Format failure short-circuits: the remaining rules
// are NotEvaluated and the melody counts as violating Format only.
RuleReport evaluate(std::string_view text, const LyricLine& l_in, const RuleConfig& cfg);

// Parallel kernel over many generations, plus the serial reference used by
// tests and the benchmark. Results are index-aligned with the inputs and
// identical between the two variants.
std::vector<RuleReport> evaluate_many(const std::vector<std::string>& texts,
                                      const std::vector<LyricLine>& lyrics,
                                      const RuleConfig& cfg);
std::vector<RuleReport> evaluate_many_serial(const std::vector<std::string>& texts,
                                             const std::vector<LyricLine>& lyrics,
                                             const RuleConfig& cfg);

}  // namespace melalign
