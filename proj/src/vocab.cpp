#include "melalign/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace melalign {

void VocabConfig::validate() const {
    std::ostringstream bad;
    if (begin_buckets < 1) bad << "begin_buckets must be >= 1; ";
    if (pitch_min < 0 || pitch_min > pitch_max || pitch_max > 127)
        bad << "need 0 <= pitch_min <= pitch_max <= 127; ";
    if (duration_edges_ms.size() < 2) bad << "need at least 2 duration edges; ";
    if (!std::is_sorted(duration_edges_ms.begin(), duration_edges_ms.end()) ||
        std::adjacent_find(duration_edges_ms.begin(), duration_edges_ms.end()) !=
            duration_edges_ms.end())
        bad << "duration edges must be strictly increasing; ";
    if (!duration_edges_ms.empty() && duration_edges_ms.front() < 2)
        bad << "duration edges must be >= 2 ms; ";
    std::string msg = bad.str();
    if (!msg.empty()) throw Error("invalid vocab config: " + msg);
}

Vocabulary::Vocabulary(VocabConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    num_buckets_ = static_cast<int>(cfg_.duration_edges_ms.size()) + 1;
    const int window = cfg_.pitch_max - cfg_.pitch_min + 1;
    size_ = cfg_.begin_buckets + 3 + window + num_buckets_;

    const auto& e = cfg_.duration_edges_ms;
    const std::size_t m = e.size();
    representatives_.resize(static_cast<std::size_t>(num_buckets_));
    auto geo = [](double a, double b) {
        return static_cast<std::int64_t>(std::llround(std::sqrt(a * b)));
    };
    // Open end buckets extend the edge progression by its boundary ratio.
    const double lo_ext = static_cast<double>(e[0]) * e[0] / static_cast<double>(e[1]);
    const double hi_ext = static_cast<double>(e[m - 1]) * e[m - 1] / static_cast<double>(e[m - 2]);
    representatives_[0] = std::max<std::int64_t>(1, geo(lo_ext, static_cast<double>(e[0])));
    for (std::size_t i = 1; i < m; ++i)
        representatives_[i] = geo(static_cast<double>(e[i - 1]), static_cast<double>(e[i]));
    representatives_[m] = geo(static_cast<double>(e[m - 1]), hi_ext);
}

int Vocabulary::begin_token(int bucket) const {
    if (bucket < 0 || bucket >= cfg_.begin_buckets)
        throw Error("begin bucket out of range: " + std::to_string(bucket));
    return bucket;
}

int Vocabulary::pitch_token(int midi_pitch) const {
    if (!pitch_in_window(midi_pitch))
        throw Error("pitch outside vocabulary window: " + std::to_string(midi_pitch));
    return cfg_.begin_buckets + 3 + (midi_pitch - cfg_.pitch_min);
}

int Vocabulary::duration_token(int bucket) const {
    if (bucket < 0 || bucket >= num_buckets_)
        throw Error("duration bucket out of range: " + std::to_string(bucket));
    return cfg_.begin_buckets + 3 + (cfg_.pitch_max - cfg_.pitch_min + 1) + bucket;
}

TokenKind Vocabulary::kind(int id) const {
    if (id < 0 || id >= size_) throw Error("token id out of range: " + std::to_string(id));
    if (id < cfg_.begin_buckets) return TokenKind::Begin;
    if (id == end_token()) return TokenKind::End;
    if (id == advance_token()) return TokenKind::Advance;
    if (id == melisma_token()) return TokenKind::Melisma;
    const int pitch_base = cfg_.begin_buckets + 3;
    const int window = cfg_.pitch_max - cfg_.pitch_min + 1;
    if (id < pitch_base + window) return TokenKind::Pitch;
    return TokenKind::Duration;
}

int Vocabulary::pitch_of(int id) const {
    if (kind(id) != TokenKind::Pitch) throw Error("not a pitch token");
    return cfg_.pitch_min + (id - (cfg_.begin_buckets + 3));
}

int Vocabulary::duration_bucket_of(int id) const {
    if (kind(id) != TokenKind::Duration) throw Error("not a duration token");
    return id - (cfg_.begin_buckets + 3 + (cfg_.pitch_max - cfg_.pitch_min + 1));
}

int Vocabulary::bucket_of_duration(std::int64_t ms) const {
    const auto& e = cfg_.duration_edges_ms;
    int b = 0;
    while (b < static_cast<int>(e.size()) && ms >= e[static_cast<std::size_t>(b)]) ++b;
    return b;
}

std::int64_t Vocabulary::representative_ms(int bucket) const {
    if (bucket < 0 || bucket >= num_buckets_)
        throw Error("duration bucket out of range: " + std::to_string(bucket));
    return representatives_[static_cast<std::size_t>(bucket)];
}

std::string Vocabulary::duration_bucket_label(int bucket) const {
    if (bucket < 0 || bucket >= num_buckets_)
        throw Error("duration bucket out of range: " + std::to_string(bucket));
    const auto& edges = cfg_.duration_edges_ms;
    if (bucket == 0) {
        return "<" + std::to_string(edges.front()) + "ms";
    }
    if (bucket == num_buckets_ - 1) {
        return ">=" + std::to_string(edges.back()) + "ms";
    }
    return "[" + std::to_string(edges[static_cast<std::size_t>(bucket) - 1]) + "," +
           std::to_string(edges[static_cast<std::size_t>(bucket)]) + ")ms";
}

std::string Vocabulary::token_name(int id) const {
    switch (kind(id)) {
        case TokenKind::Begin: return "<begin:" + std::to_string(id) + ">";
        case TokenKind::End: return "<end>";
        case TokenKind::Advance: return "<adv>";
        case TokenKind::Melisma: return "<mel>";
        case TokenKind::Pitch: return "p" + std::to_string(pitch_of(id));
        case TokenKind::Duration:
            return "d" + std::to_string(representative_ms(duration_bucket_of(id)));
    }
    return "?";
}

PromptEncoding encode_prompt(const LyricLine& lyric, const Vocabulary& vocab) {
    const int buckets = vocab.config().begin_buckets;
    int id = static_cast<int>(lyric.words.size()) - 1;
    if (id < 0) id = 0;
    if (id >= buckets) id = buckets - 1;
    return PromptEncoding{id, vocab.begin_token(id)};
}

EncodeResult encode_melody(const Melody& melody, const LyricLine& lyric,
                           const Vocabulary& vocab) {
    EncodeResult out;
    const PromptEncoding prompt = encode_prompt(lyric, vocab);
    out.tokens.push_back(prompt.begin_token);
    for (const Note& n : melody.notes) {
        if (!vocab.pitch_in_window(n.pitch)) {
            out.tokens.clear();
            out.skip_reason = "pitch " + std::to_string(n.pitch) + " outside vocabulary window";
            return out;
        }
        out.tokens.push_back(n.lyric == kMelismaMarker ? vocab.melisma_token()
                                                       : vocab.advance_token());
        out.tokens.push_back(vocab.pitch_token(n.pitch));
        out.tokens.push_back(vocab.duration_token(vocab.bucket_of_duration(n.duration_ms)));
    }
    out.tokens.push_back(vocab.end_token());
    return out;
}

std::string decode_tokens(const std::vector<int>& tokens, const Vocabulary& vocab,
                          const LyricLine& lyric) {
    std::string text;
    bool event_open = false;
    std::size_t next_unit = 0;

    auto open_event = [&](const std::string& syllable) {
        if (!text.empty()) text += '|';
        text += syllable;
        event_open = true;
    };
    auto append_field = [&](const std::string& field) {
        if (!event_open) open_event("");  // field with no syllable: malformed on purpose
        text += ',';
        text += field;
    };

    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const int id = tokens[t];
        switch (vocab.kind(id)) {
            case TokenKind::Begin:
                if (t == 0) break;  // framing token
                append_field("?");  // stray begin: renders as an unparsable field
                break;
            case TokenKind::End:
                return text;
            case TokenKind::Advance:
                if (next_unit < lyric.words.size()) open_event(lyric.words[next_unit++]);
                else open_event("~");  // over-consumption: fails the lyric rule
                break;
            case TokenKind::Melisma:
                open_event(std::string(kMelismaMarker));
                break;
            case TokenKind::Pitch:
                append_field(std::to_string(vocab.pitch_of(id)));
                break;
            case TokenKind::Duration:
                append_field(std::to_string(vocab.representative_ms(vocab.duration_bucket_of(id))));
                break;
        }
    }
    return text;
}

}  // namespace melalign
