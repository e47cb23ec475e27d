#include "melalign/synthgen.hpp"

#include <algorithm>

#include "melalign/rng.hpp"

namespace melalign {

namespace {

const std::vector<std::string>& word_bank(Language language) {
    static const std::vector<std::string> english = {
        "la",   "sun",  "moon", "riv",  "er",   "day",  "night", "sky",
        "wind", "star", "rain", "gold", "sil",  "ver",  "sea",   "dream",
        "light", "snow", "tree", "bird", "song", "home", "road",  "fire"};
    static const std::vector<std::string> chinese = {
        "月", "光", "山", "河", "星", "夜", "风", "花",
        "雪", "海", "云", "春", "秋", "水", "天", "心"};
    return language == Language::english ? english : chinese;
}

LyricLine draw_lyric(Rng& rng, Language language) {
    const auto& bank = word_bank(language);
    LyricLine lyric;
    lyric.language = language;
    const int n_words = rng.next_int(2, 6);
    for (int i = 0; i < n_words; ++i) {
        lyric.words.push_back(bank[static_cast<std::size_t>(
            rng.next_int(0, static_cast<int>(bank.size()) - 1))]);
    }
    return lyric;
}

Melody draw_compliant_melody(Rng& rng, const LyricLine& lyric, const SynthOptions& opt) {
    const int lo = std::max(opt.rules.p_min, opt.vocab.pitch_min);
    const int hi = std::min(opt.rules.p_max, opt.vocab.pitch_max);
    Melody melody;
    melody.lyric_line = lyric.joined();
    int prev_pitch = -1;
    auto draw_pitch = [&]() {
        // Occasional repeats keep the monotony check exercised without
        // tripping it; everything else moves to a fresh pitch.
        if (prev_pitch >= 0 && rng.next_bool(0.15)) {
            return prev_pitch;
        }
        int p = rng.next_int(lo, hi);
        while (p == prev_pitch) {
            p = rng.next_int(lo, hi);
        }
        return p;
    };
    static const std::vector<std::int64_t> body_durations = {250, 354, 500, 707, 1000};
    static const std::vector<std::int64_t> final_durations = {500, 1000, 1414, 2000};
    for (const std::string& word : lyric.words) {
        Note note;
        note.lyric = word;
        note.pitch = draw_pitch();
        prev_pitch = note.pitch;
        melody.notes.push_back(note);
        if (rng.next_bool(0.3)) {
            Note extra;
            extra.lyric = kMelismaMarker;
            extra.pitch = draw_pitch();
            prev_pitch = extra.pitch;
            melody.notes.push_back(extra);
        }
    }
    for (std::size_t i = 0; i < melody.notes.size(); ++i) {
        const auto& bank = i + 1 == melody.notes.size() ? final_durations : body_durations;
        melody.notes[i].duration_ms =
            bank[static_cast<std::size_t>(rng.next_int(0, static_cast<int>(bank.size()) - 1))];
    }
    return melody;
}

// Pitches outside the register rule but inside the vocabulary window, so the
// corrupted line still encodes for likelihood training.
int draw_out_of_register_pitch(Rng& rng, const SynthOptions& opt) {
    std::vector<int> candidates;
    for (int p = opt.vocab.pitch_min; p <= opt.vocab.pitch_max; ++p) {
        if (p < opt.rules.p_min || p > opt.rules.p_max) {
            candidates.push_back(p);
        }
    }
    if (candidates.empty()) {
        throw Error("vocabulary window leaves no room outside the register rule");
    }
    return candidates[static_cast<std::size_t>(
        rng.next_int(0, static_cast<int>(candidates.size()) - 1))];
}

std::string corrupt_register(Rng& rng, Melody melody, const SynthOptions& opt) {
    const int idx = rng.next_int(0, static_cast<int>(melody.notes.size()) - 1);
    melody.notes[static_cast<std::size_t>(idx)].pitch = draw_out_of_register_pitch(rng, opt);
    return serialize_melody(melody);
}

std::string corrupt_duration(Rng& rng, Melody melody, const SynthOptions& opt) {
    const int n = static_cast<int>(melody.notes.size());
    const int idx = rng.next_int(0, n - 1);
    const bool is_final = idx == n - 1;
    const std::int64_t lo = is_final ? opt.rules.d_final_min_ms : opt.rules.d_min_ms;
    const std::int64_t hi = is_final ? opt.rules.d_final_max_ms : opt.rules.d_max_ms;
    melody.notes[static_cast<std::size_t>(idx)].duration_ms =
        rng.next_bool(0.5) ? std::max<std::int64_t>(1, lo / 2) : hi + hi / 2;
    return serialize_melody(melody);
}

std::string corrupt_note(Rng& rng, Melody melody, const SynthOptions& opt) {
    const int lo = std::max(opt.rules.p_min, opt.vocab.pitch_min);
    const int hi = std::min(opt.rules.p_max, opt.vocab.pitch_max);
    const int flat = rng.next_int(lo, hi);
    for (Note& note : melody.notes) {
        note.pitch = flat;
    }
    return serialize_melody(melody);
}

std::string corrupt_lyric(Rng& rng, Melody melody, const SynthOptions& opt) {
    if (melody.notes.size() > 1 && rng.next_bool(0.5)) {
        // Drop the final unit's notes so the melody no longer covers the lyric.
        std::size_t cut = melody.notes.size() - 1;
        while (cut > 0 && melody.notes[cut].lyric == kMelismaMarker) {
            --cut;
        }
        if (cut > 0) {
            melody.notes.resize(cut);
            return serialize_melody(melody);
        }
    }
    // Append a syllable that is not part of the lyric.
    Note extra;
    extra.lyric = opt.language == Language::english ? "zzz" : "外";
    extra.pitch = std::max(opt.rules.p_min, opt.vocab.pitch_min);
    extra.duration_ms = 500;
    melody.notes.push_back(extra);
    return serialize_melody(melody);
}

std::string corrupt_format(Rng& rng, const Melody& melody) {
    std::string text = serialize_melody(melody);
    switch (rng.next_int(0, 3)) {
        case 0: {  // drop the first comma
            const std::size_t pos = text.find(',');
            text.erase(pos, 1);
            return text;
        }
        case 1: {  // non-integer pitch in the first event
            const std::size_t pos = text.find(',');
            text.insert(pos + 1, "x");
            return text;
        }
        case 2:  // leading melisma
            return std::string(kMelismaMarker) + "," + std::to_string(melody.notes[0].pitch) +
                   ",500|" + text;
        default:  // trailing event delimiter
            return text + "|";
    }
}

}  // namespace

SynthCorpus synth_corpus(const SynthOptions& options) {
    if (options.n < 1) {
        throw Error("corpus size must be at least 1");
    }
    if (!(options.violation_rate >= 0.0 && options.violation_rate <= 1.0)) {
        throw Error("violation_rate must lie in [0, 1]");
    }
    options.rules.validate();
    options.vocab.validate();

    constexpr int kMaxAttempts = 200;
    Rng rng(options.seed);
    SynthCorpus corpus;
    for (int line = 0; line < options.n; ++line) {
        const bool violate = rng.next_bool(options.violation_rate);
        std::string accepted_text;
        LyricLine accepted_lyric;
        bool done = false;
        for (int attempt = 0; attempt < kMaxAttempts && !done; ++attempt) {
            const LyricLine lyric = draw_lyric(rng, options.language);
            const Melody melody = draw_compliant_melody(rng, lyric, options);
            std::string text;
            std::vector<Rule> expected;
            if (violate) {
                const Rule target = kAllRules[static_cast<std::size_t>(rng.next_int(0, 4))];
                switch (target) {
                    case Rule::Format: text = corrupt_format(rng, melody); break;
                    case Rule::Lyric: text = corrupt_lyric(rng, melody, options); break;
                    case Rule::Note: text = corrupt_note(rng, melody, options); break;
                    case Rule::Duration: text = corrupt_duration(rng, melody, options); break;
                    case Rule::Register: text = corrupt_register(rng, melody, options); break;
                }
                expected = {target};
            } else {
                text = serialize_melody(melody);
            }
            const RuleReport report = evaluate(text, lyric, options.rules);
            if (report.failed_rules() == expected) {
                accepted_text = std::move(text);
                accepted_lyric = lyric;
                done = true;
            }
        }
        if (!done) {
            throw Error("could not synthesize a line matching the requested profile");
        }
        corpus.melodies.push_back(std::move(accepted_text));
        corpus.lyrics.push_back(accepted_lyric.joined());
        if (violate) {
            ++corpus.n_violating;
        }
    }
    return corpus;
}

}  // namespace melalign
