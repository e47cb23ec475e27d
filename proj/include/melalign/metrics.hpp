#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "melalign/rules.hpp"
#include "melalign/vocab.hpp"

namespace melalign {

class ZeroNormHistogramError : public Error {
public:
    using Error::Error;
};

class BinMismatchError : public Error {
public:
    using Error::Error;
};

class EmptySequenceError : public Error {
public:
    using Error::Error;
};

class LengthMismatchError : public Error {
public:
    using Error::Error;
};

struct Histogram {
    std::vector<std::string> labels;
    std::vector<double> counts;

    bool operator==(const Histogram&) const = default;
};

// 128 bins labeled by raw MIDI pitch.
Histogram pitch_histogram(const std::vector<Melody>& melodies);

// One bin per duration bucket of the vocabulary config.
Histogram duration_histogram(const std::vector<Melody>& melodies, const VocabConfig& vocab);

// a.b / sqrt((a.a)(b.b)), clamped to [0,1]. The denominator is the single
// square root of the norm product so identical histograms score exactly 1.
double cosine_similarity(const Histogram& a, const Histogram& b);

std::vector<int> pitch_contour(const Melody& melody);

struct MelodyDistance {
    std::int64_t cost = 0;         // raw DTW cost, exact in integers
    std::int64_t path_length = 0;  // cells on the optimal warping path
    double normalized = 0.0;       // cost / path_length

    bool operator==(const MelodyDistance&) const = default;
};

// DTW over pitch contours with |pitch difference| as local cost and
// match/insert/delete moves. Among minimum-cost warping paths the shortest
// is chosen, and the normalized distance divides by that path length.
MelodyDistance melody_distance_full(const std::vector<int>& gen, const std::vector<int>& ref);
double melody_distance(const std::vector<int>& gen, const std::vector<int>& ref);

struct MetricsReport {
    std::optional<double> pd;      // pitch histogram cosine similarity
    std::optional<double> dd;      // duration histogram cosine similarity
    std::optional<double> md;      // mean path-normalized DTW distance
    std::optional<double> md_raw;  // mean unnormalized DTW cost
    int n_evaluated = 0;
    int n_skipped = 0;  // generations that failed to parse

    bool operator==(const MetricsReport&) const = default;
};

struct EvalOptions {
    VocabConfig vocab;     // duration bucket edges drive the DD bins
    bool per_pair = false; // mean of per-pair similarities instead of pooled histograms
};

// Index-aligned comparison of generated texts against reference texts.
// Unparsable generations are skipped: counted in n_skipped and excluded,
// along with their references, from histograms and distances. References
// must all parse. Metrics are absent when nothing was evaluated. Per-pair
// distances run in parallel with a serial in-order reduction.
MetricsReport evaluate_set(const std::vector<std::string>& gens,
                           const std::vector<std::string>& refs, const EvalOptions& options);
MetricsReport evaluate_set_serial(const std::vector<std::string>& gens,
                                  const std::vector<std::string>& refs,
                                  const EvalOptions& options);

struct ViolationReport {
    std::array<std::size_t, kAllRules.size()> counts{};
    std::size_t total = 0;

    std::size_t count(Rule r) const { return counts[static_cast<std::size_t>(r)]; }
    double rate(Rule r) const {
        return total == 0 ? 0.0 : static_cast<double>(count(r)) / static_cast<double>(total);
    }
    std::size_t total_violations() const;

    bool operator==(const ViolationReport&) const = default;
};

// Per-rule violation counts over index-aligned (text, lyric) pairs, using the
// Format short-circuit convention: an unparsable text counts only as a Format
// violation.
ViolationReport violation_report(const std::vector<std::string>& texts,
                                 const std::vector<LyricLine>& lyrics, const RuleConfig& cfg);

}  // namespace melalign
