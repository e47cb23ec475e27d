#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "melalign/rules.hpp"
#include "melalign/vocab.hpp"

namespace melalign {

struct SynthOptions {
    int n = 200;
    double violation_rate = 0.0;
    std::uint64_t seed = 0;
    Language language = Language::english;
    RuleConfig rules;
    VocabConfig vocab;  // injected pitches stay inside this window so lines remain encodable
};

struct SynthCorpus {
    std::vector<std::string> melodies;  // raw melody lines, index-aligned with lyrics
    std::vector<std::string> lyrics;    // prompt lines (units joined by spaces)
    std::size_t n_violating = 0;
};

// Seed-deterministic corpus of n melody lines with matching lyric prompts.
// Each line is independently chosen to violate with probability
// violation_rate; a violating line breaks exactly one rule, picked uniformly,
// via targeted perturbation (register shift, duration out of bounds, pitch
// flattening, lyric drop/extra, format corruption). Every line is re-checked
// against the rules before being accepted.
SynthCorpus synth_corpus(const SynthOptions& options);

}  // namespace melalign
