#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "melalign/melody.hpp"

namespace melalign {

// Discretization of note events into a token stream. Each note expands to
// three tokens: a lyric-advance or melisma token, a pitch token, and a
// duration-bucket token; the sequence is framed by a prompt-conditioned begin
// token and a shared end token.
struct VocabConfig {
    int begin_buckets = 4;   // begin-token variants, selected by lyric length
    int pitch_min = 55;      // inclusive MIDI window covered by pitch tokens
    int pitch_max = 89;
    std::vector<std::int64_t> duration_edges_ms = {125, 250, 500, 1000, 2000, 4000};

    bool operator==(const VocabConfig&) const = default;
    void validate() const;  // throws Error on inconsistency
};

enum class TokenKind { Begin, End, Advance, Melisma, Pitch, Duration };

class Vocabulary {
public:
    explicit Vocabulary(VocabConfig cfg);

    const VocabConfig& config() const { return cfg_; }
    int size() const { return size_; }

    // Fixed id layout: [0, B) begin variants, B end, B+1 advance, B+2 melisma,
    // then pitch tokens, then duration-bucket tokens.
    int begin_token(int bucket) const;
    int end_token() const { return cfg_.begin_buckets; }
    int advance_token() const { return cfg_.begin_buckets + 1; }
    int melisma_token() const { return cfg_.begin_buckets + 2; }
    int pitch_token(int midi_pitch) const;      // throws Error if outside the window
    int duration_token(int bucket) const;

    TokenKind kind(int id) const;
    bool is_begin(int id) const { return id >= 0 && id < cfg_.begin_buckets; }
    int pitch_of(int id) const;                 // valid for Pitch tokens
    int duration_bucket_of(int id) const;       // valid for Duration tokens

    int num_duration_buckets() const { return num_buckets_; }
    // Bucket i covers (0, e0) for i == 0, [e_{i-1}, e_i) in the middle, and
    // [e_last, inf) at the top. Total buckets = edges + 1.
    int bucket_of_duration(std::int64_t ms) const;
    // Geometric mean of the bucket's edges, rounded; the open end buckets
    // extend the edge sequence geometrically.
    std::int64_t representative_ms(int bucket) const;
    std::string duration_bucket_label(int bucket) const;  // e.g. "[250,500)ms"

    bool pitch_in_window(int midi_pitch) const {
        return midi_pitch >= cfg_.pitch_min && midi_pitch <= cfg_.pitch_max;
    }

    std::string token_name(int id) const;  // human-readable, for diagnostics

    bool operator==(const Vocabulary& other) const { return cfg_ == other.cfg_; }

private:
    VocabConfig cfg_;
    int num_buckets_ = 0;
    int size_ = 0;
    std::vector<std::int64_t> representatives_;
};

// Conditioning class derived deterministically from the lyric line: prompts
// are bucketed by unit count and each bucket owns one begin-token variant.
struct PromptEncoding {
    int prompt_id = 0;
    int begin_token = 0;

    bool operator==(const PromptEncoding&) const = default;
};

PromptEncoding encode_prompt(const LyricLine& lyric, const Vocabulary& vocab);

// Melody + lyric -> token sequence (begin ... end). Returns nullopt with a
// reason when the melody uses a pitch outside the vocabulary window.
struct EncodeResult {
    std::vector<int> tokens;
    std::string skip_reason;  // non-empty when encoding was not possible
    bool ok() const { return skip_reason.empty(); }
};
EncodeResult encode_melody(const Melody& melody, const LyricLine& lyric,
                           const Vocabulary& vocab);

// Token stream -> raw melody text, consuming one lyric unit per advance token
// and emitting the melisma marker for melisma tokens. Total: malformed
// streams transliterate to text that fails the format or lyric rule rather
// than raising an error. Stray begin tokens render as an unparsable field and
// exhausted lyric units render as the out-of-vocabulary syllable "~".
std::string decode_tokens(const std::vector<int>& tokens, const Vocabulary& vocab,
                          const LyricLine& lyric);

}  // namespace melalign
