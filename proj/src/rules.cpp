#include "melalign/rules.hpp"

#include <sstream>

#include "melalign/parallel.hpp"

namespace melalign {

std::string_view to_string(Rule r) {
    switch (r) {
        case Rule::Format: return "Format";
        case Rule::Lyric: return "Lyric";
        case Rule::Note: return "Note";
        case Rule::Duration: return "Duration";
        case Rule::Register: return "Register";
    }
    return "Unknown";
}

std::optional<Rule> rule_from_string(std::string_view s) {
    for (Rule r : kAllRules)
        if (to_string(r) == s) return r;
    return std::nullopt;
}

void RuleConfig::validate() const {
    std::ostringstream bad;
    if (!(tau_note >= 0.0 && tau_note <= 1.0)) bad << "tau_note must be in [0,1]; ";
    if (d_min_ms < 1 || d_min_ms > d_max_ms) bad << "need 1 <= d_min_ms <= d_max_ms; ";
    if (d_final_min_ms < 1 || d_final_min_ms > d_final_max_ms)
        bad << "need 1 <= d_final_min_ms <= d_final_max_ms; ";
    if (p_min < 0 || p_min > p_max || p_max > 127) bad << "need 0 <= p_min <= p_max <= 127; ";
    std::string msg = bad.str();
    if (!msg.empty()) throw Error("invalid rule config: " + msg);
}

std::vector<Rule> RuleReport::failed_rules() const {
    std::vector<Rule> out;
    for (Rule r : kAllRules)
        if (failed(r)) out.push_back(r);
    return out;
}

FormatCheck check_format(std::string_view text) {
    FormatCheck out;
    ParseResult r = parse_melody(text);
    if (r.ok()) {
        out.verdict = Verdict::Pass;
        out.melody = std::move(r.melody);
    } else {
        out.verdict = Verdict::Fail;
        out.error = r.error;
    }
    return out;
}

std::string check_lyric(const Melody& m, const LyricLine& l_in) {
    // Unit boundaries inside the concatenated input, as byte offsets.
    std::string concat;
    std::vector<std::size_t> boundaries{0};
    for (const auto& w : l_in.words) {
        concat += w;
        boundaries.push_back(concat.size());
    }

    std::size_t pos = 0;
    for (std::size_t i = 0; i < m.notes.size(); ++i) {
        const std::string& raw = m.notes[i].lyric;
        if (raw == kMelismaMarker) continue;
        std::string tok = normalize_lyric_token(raw);
        if (tok.empty()) {
            // A sung note must carry lyric content; this also catches the
            // decoder's `~` placeholder for advances past the last unit.
            std::ostringstream msg;
            msg << "note " << i << " lyric '" << raw << "' sings no lyric content";
            return msg.str();
        }

        if (concat.compare(pos, tok.size(), tok) != 0) {
            std::ostringstream msg;
            msg << "note " << i << " lyric '" << raw << "' does not continue the input lyric";
            return msg.str();
        }
        // A token may subdivide a unit but never straddle two units.
        for (std::size_t b : boundaries) {
            if (b > pos && b < pos + tok.size()) {
                std::ostringstream msg;
                msg << "note " << i << " lyric '" << raw << "' merges adjacent lyric units";
                return msg.str();
            }
        }
        pos += tok.size();
    }
    if (pos != concat.size()) {
        std::ostringstream msg;
        msg << "generated lyrics cover only " << pos << " of " << concat.size()
            << " input bytes";
        return msg.str();
    }
    return {};
}

NoteCheck check_note(const Melody& m, const RuleConfig& cfg) {
    NoteCheck out;
    const std::size_t n = m.notes.size();
    if (n >= 2) {
        std::size_t repeats = 0;
        for (std::size_t i = 0; i + 1 < n; ++i)
            if (m.notes[i].pitch == m.notes[i + 1].pitch) ++repeats;
        out.ratio = static_cast<double>(repeats) / static_cast<double>(n - 1);
    }
    out.verdict = out.ratio <= cfg.tau_note ? Verdict::Pass : Verdict::Fail;
    return out;
}

std::vector<std::size_t> check_duration(const Melody& m, const RuleConfig& cfg) {
    std::vector<std::size_t> bad;
    const std::size_t n = m.notes.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto d = m.notes[i].duration_ms;
        if (d < cfg.d_min_ms || d > cfg.d_max_ms) bad.push_back(i);
    }
    const auto d_final = m.notes[n - 1].duration_ms;
    if (d_final < cfg.d_final_min_ms || d_final > cfg.d_final_max_ms) bad.push_back(n - 1);
    return bad;
}

std::vector<std::size_t> check_register(const Melody& m, const RuleConfig& cfg) {
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < m.notes.size(); ++i) {
        const int p = m.notes[i].pitch;
        if (p < cfg.p_min || p > cfg.p_max) bad.push_back(i);
    }
    return bad;
}

RuleReport evaluate(std::string_view text, const LyricLine& l_in, const RuleConfig& cfg) {
    RuleReport report;
    auto set = [&report](Rule r, Verdict v) {
        report.verdicts[static_cast<std::size_t>(r)] = v;
    };

    FormatCheck fmt = check_format(text);
    set(Rule::Format, fmt.verdict);
    if (fmt.verdict == Verdict::Fail) {
        report.format_error = fmt.error;
        report.compliant = false;
        return report;
    }
    const Melody& m = *fmt.melody;

    report.lyric_reason = check_lyric(m, l_in);
    set(Rule::Lyric, report.lyric_reason.empty() ? Verdict::Pass : Verdict::Fail);

    NoteCheck note = check_note(m, cfg);
    report.note_ratio = note.ratio;
    set(Rule::Note, note.verdict);

    report.duration_bad_indices = check_duration(m, cfg);
    set(Rule::Duration, report.duration_bad_indices.empty() ? Verdict::Pass : Verdict::Fail);

    report.register_bad_indices = check_register(m, cfg);
    set(Rule::Register, report.register_bad_indices.empty() ? Verdict::Pass : Verdict::Fail);

    report.compliant = true;
    for (Verdict v : report.verdicts)
        if (v != Verdict::Pass) report.compliant = false;
    return report;
}

std::vector<RuleReport> evaluate_many(const std::vector<std::string>& texts,
                                      const std::vector<LyricLine>& lyrics,
                                      const RuleConfig& cfg) {
    if (texts.size() != lyrics.size())
        throw Error("evaluate_many: texts and lyrics must be index-aligned");
    std::vector<RuleReport> reports(texts.size());
    par::parallel_for(static_cast<std::int64_t>(texts.size()), [&](std::int64_t i) {
        reports[static_cast<std::size_t>(i)] =
            evaluate(texts[static_cast<std::size_t>(i)], lyrics[static_cast<std::size_t>(i)], cfg);
    });
    return reports;
}

std::vector<RuleReport> evaluate_many_serial(const std::vector<std::string>& texts,
                                             const std::vector<LyricLine>& lyrics,
                                             const RuleConfig& cfg) {
    if (texts.size() != lyrics.size())
        throw Error("evaluate_many_serial: texts and lyrics must be index-aligned");
    std::vector<RuleReport> reports;
    reports.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i)
        reports.push_back(evaluate(texts[i], lyrics[i], cfg));
    return reports;
}

}  // namespace melalign
