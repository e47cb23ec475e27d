#include "melalign/melody.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace melalign {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

// Strict integer parse of the whole (already trimmed) field.
std::optional<std::int64_t> parse_int(std::string_view s) {
    if (s.empty()) return std::nullopt;
    std::int64_t value = 0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return value;
}

bool is_huge_number(std::string_view s) {
    // from_chars overflow: all digits (optional sign) but out of int64 range
    if (s.empty()) return false;
    std::size_t i = (s[0] == '-') ? 1 : 0;
    if (i >= s.size()) return false;
    return std::all_of(s.begin() + static_cast<std::ptrdiff_t>(i), s.end(),
                       [](char c) { return c >= '0' && c <= '9'; });
}

// CJK punctuation dropped by lyric normalization.
bool is_cjk_punct(std::string_view cp) {
    static const char* kTable[] = {
        "，", "。", "！", "？", "、", "；", "：",
        "“", "”", "‘", "’", "（", "）", "《",
        "》", "　", "·", "…",
    };
    for (const char* p : kTable)
        if (cp == p) return true;
    return false;
}

}  // namespace

std::string_view to_string(Language lang) {
    return lang == Language::english ? "english" : "chinese";
}

std::optional<Language> language_from_string(std::string_view s) {
    if (s == "english") return Language::english;
    if (s == "chinese") return Language::chinese;
    return std::nullopt;
}

std::string LyricLine::joined() const {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

std::string_view to_string(ParseStatus s) {
    switch (s) {
        case ParseStatus::Ok: return "Ok";
        case ParseStatus::EmptyInput: return "EmptyInput";
        case ParseStatus::BadFieldCount: return "BadFieldCount";
        case ParseStatus::BadLyricToken: return "BadLyricToken";
        case ParseStatus::NonIntegerPitch: return "NonIntegerPitch";
        case ParseStatus::PitchOutOfMidiRange: return "PitchOutOfMidiRange";
        case ParseStatus::NonPositiveDuration: return "NonPositiveDuration";
        case ParseStatus::LeadingMelisma: return "LeadingMelisma";
    }
    return "Unknown";
}

ParseResult parse_melody(std::string_view text) {
    auto fail = [](ParseStatus code, std::size_t idx, std::string msg) {
        ParseResult r;
        r.error = ParseError{code, idx, std::move(msg)};
        return r;
    };

    if (trim(text).empty()) return fail(ParseStatus::EmptyInput, 0, "empty melody text");

    Melody melody;
    const auto events = split(text, '|');
    for (std::size_t idx = 0; idx < events.size(); ++idx) {
        const auto fields = split(events[idx], ',');
        if (fields.size() != 3) {
            std::ostringstream msg;
            msg << "expected 3 fields (lyric,pitch,duration), got " << fields.size();
            return fail(ParseStatus::BadFieldCount, idx, msg.str());
        }

        const std::string_view lyric = trim(fields[0]);
        if (lyric.empty())
            return fail(ParseStatus::BadLyricToken, idx, "empty lyric field");
        if (lyric != kMelismaMarker && lyric.find('-') != std::string_view::npos)
            return fail(ParseStatus::BadLyricToken, idx,
                        "'-' is reserved for the melisma marker");
        if (idx == 0 && lyric == kMelismaMarker)
            return fail(ParseStatus::LeadingMelisma, idx,
                        "melody starts with a melisma marker");

        const std::string_view pitch_field = trim(fields[1]);
        const auto pitch = parse_int(pitch_field);
        if (!pitch) {
            if (is_huge_number(pitch_field))
                return fail(ParseStatus::PitchOutOfMidiRange, idx, "pitch out of MIDI range");
            return fail(ParseStatus::NonIntegerPitch, idx, "pitch is not an integer");
        }
        if (*pitch < 0 || *pitch > 127) {
            std::ostringstream msg;
            msg << "pitch " << *pitch << " outside MIDI range [0, 127]";
            return fail(ParseStatus::PitchOutOfMidiRange, idx, msg.str());
        }

        const std::string_view dur_field = trim(fields[2]);
        const auto dur = parse_int(dur_field);
        if (!dur)
            return fail(ParseStatus::NonPositiveDuration, idx,
                        "duration is not a representable positive integer");
        if (*dur < 1)
            return fail(ParseStatus::NonPositiveDuration, idx, "duration must be >= 1 ms");

        melody.notes.push_back(Note{std::string(lyric), static_cast<int>(*pitch), *dur});
    }

    ParseResult r;
    r.melody = std::move(melody);
    return r;
}

std::string serialize_melody(const Melody& m) {
    std::string out;
    for (std::size_t i = 0; i < m.notes.size(); ++i) {
        const Note& n = m.notes[i];
        if (i) out += '|';
        out += n.lyric;
        out += ',';
        out += std::to_string(n.pitch);
        out += ',';
        out += std::to_string(n.duration_ms);
    }
    return out;
}

std::vector<std::string> utf8_chunks(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if (c >= 0xF0) len = 4;
        else if (c >= 0xE0) len = 3;
        else if (c >= 0xC0) len = 2;
        if (i + len > s.size()) len = 1;
        out.emplace_back(s.substr(i, len));
        i += len;
    }
    return out;
}

std::string normalize_lyric_token(std::string_view token) {
    std::string out;
    for (const auto& cp : utf8_chunks(token)) {
        if (cp.size() == 1) {
            unsigned char c = static_cast<unsigned char>(cp[0]);
            if (std::isalpha(c)) out += static_cast<char>(std::tolower(c));
            else if (std::isdigit(c)) out += static_cast<char>(c);
            // other ASCII (punctuation, whitespace) dropped
        } else if (!is_cjk_punct(cp)) {
            out += cp;
        }
    }
    return out;
}

LyricLine split_lyric(std::string_view text, Language language) {
    LyricLine line;
    line.language = language;

    if (language == Language::english) {
        std::size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            std::size_t start = i;
            while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            if (i > start) {
                std::string unit = normalize_lyric_token(text.substr(start, i - start));
                if (!unit.empty()) line.words.push_back(std::move(unit));
            }
        }
    } else {
        for (const auto& cp : utf8_chunks(text)) {
            std::string unit = normalize_lyric_token(cp);
            if (!unit.empty()) line.words.push_back(std::move(unit));
        }
    }

    if (line.words.empty())
        throw EmptyLyricError("lyric line is empty after normalization");
    return line;
}

std::vector<std::string> read_line_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string_view v = trim(line);
        if (v.empty() || v.front() == '#') continue;
        lines.emplace_back(v);
    }
    return lines;
}

void write_line_file(const std::string& path, const std::vector<std::string>& lines,
                     const std::string& header_comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open file for writing: " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    for (const auto& l : lines) out << l << "\n";
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace melalign
