#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace melalign {

// Base class for all exceptions thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Symbolic melody representation
//
// Text grammar (one melody per line):
//   melody   = note *( "|" note )
//   note     = lyric "," pitch "," duration
//   lyric    = 1*(any char except "," and "|"); the exact token "-" marks a
//              melisma continuing the previous syllable
//   pitch    = integer MIDI note number in [0, 127]
//   duration = positive integer milliseconds
// ---------------------------------------------------------------------------

inline constexpr std::string_view kMelismaMarker = "-";

struct Note {
    std::string lyric;        // syllable text, or "-" for a melisma
    int pitch = 0;            // MIDI note number, 0..127
    std::int64_t duration_ms = 1;

    bool operator==(const Note&) const = default;
};

struct Melody {
    std::vector<Note> notes;      // non-empty; notes[0] is never a melisma
    std::string lyric_line;       // source lyric this melody was generated for

    // lyric_line is provenance metadata; value identity is the note sequence.
    friend bool operator==(const Melody& a, const Melody& b) { return a.notes == b.notes; }
};

enum class Language { english, chinese };

std::string_view to_string(Language lang);
std::optional<Language> language_from_string(std::string_view s);

struct LyricLine {
    std::vector<std::string> words;  // normalized lyric units (words or characters)
    Language language = Language::english;

    bool operator==(const LyricLine&) const = default;

    // Units joined by a single space; used for prompts and provenance.
    std::string joined() const;
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

enum class ParseStatus {
    Ok,
    EmptyInput,
    BadFieldCount,
    BadLyricToken,       // empty lyric field, or "-" embedded in a syllable
    NonIntegerPitch,
    PitchOutOfMidiRange,
    NonPositiveDuration,
    LeadingMelisma,
};

std::string_view to_string(ParseStatus s);

struct ParseError {
    ParseStatus code = ParseStatus::Ok;
    std::size_t event_index = 0;  // 0-based index of the offending note event
    std::string message;

    bool operator==(const ParseError&) const = default;
};

struct ParseResult {
    std::optional<Melody> melody;  // engaged iff error.code == Ok
    ParseError error;

    bool ok() const { return melody.has_value(); }
};

// Total over arbitrary byte input: never throws, reports the first offending
// note event on failure. On success the melody's lyric_line is left empty.
ParseResult parse_melody(std::string_view text);

// Canonical single-line form; parse_melody(serialize_melody(m)) reproduces the
// exact note sequence.
std::string serialize_melody(const Melody& m);

class EmptyLyricError : public Error {
public:
    using Error::Error;
};

// English: whitespace tokenization, lowercased, punctuation stripped.
// Chinese: one unit per character, whitespace and punctuation dropped.
// Throws EmptyLyricError when nothing remains.
LyricLine split_lyric(std::string_view text, Language language);

// Normalization applied to lyric units and, symmetrically, to generated lyric
// tokens before the lyric-coverage rule compares them: ASCII letters are
// lowercased, ASCII digits kept, other ASCII dropped, common CJK punctuation
// dropped, all other codepoints kept verbatim.
std::string normalize_lyric_token(std::string_view token);

// Splits a UTF-8 string into codepoint-sized chunks (invalid bytes pass
// through as single-byte chunks).
std::vector<std::string> utf8_chunks(std::string_view s);

// ---------------------------------------------------------------------------
// Line-oriented corpus files: UTF-8, one record per line, blank lines and
// lines starting with '#' ignored.
// ---------------------------------------------------------------------------

std::vector<std::string> read_line_file(const std::string& path);
void write_line_file(const std::string& path, const std::vector<std::string>& lines,
                     const std::string& header_comment = "");

}  // namespace melalign
