#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "melalign/policy.hpp"
#include "melalign/rules.hpp"

namespace melalign {

class SchemaVersionMismatchError : public Error {
public:
    using Error::Error;
};

class CorruptRecordError : public Error {
public:
    CorruptRecordError(std::size_t line, const std::string& message)
        : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// One sampled continuation together with everything the selection step needs.
struct Candidate {
    std::vector<int> tokens;
    std::string text;
    double log_prob = 0.0;
    bool truncated = false;
    int sample_index = 0;
    RuleReport report;
};

struct PreferencePair {
    LyricLine prompt;
    std::size_t prompt_index = 0;
    std::vector<int> winner_tokens;
    std::string winner_text;
    double winner_log_prob = 0.0;
    std::vector<int> loser_tokens;
    std::string loser_text;
    double loser_log_prob = 0.0;
    std::vector<Rule> loser_violations;

    bool operator==(const PreferencePair&) const = default;
};

struct UnpairedSample {
    LyricLine prompt;
    std::size_t prompt_index = 0;
    std::vector<int> tokens;
    std::string text;
    double log_prob = 0.0;
    std::vector<Rule> violations;

    bool operator==(const UnpairedSample&) const = default;
};

struct GenProvenance {
    int k = 8;
    double temperature = 1.0;
    int max_len = 64;
    std::uint64_t seed = 0;
    std::string rules_digest;

    bool operator==(const GenProvenance&) const = default;
};

struct PreferenceDataset {
    std::vector<PreferencePair> pairs;
    std::vector<UnpairedSample> unpaired;
    GenProvenance provenance;

    bool operator==(const PreferenceDataset&) const = default;
};

struct GenOptions {
    int k = 8;
    double temperature = 1.0;
    int max_len = 64;
    std::uint64_t seed = 0;
};

// FNV-1a 64 over a canonical serialization of the thresholds; stored in
// dataset provenance so a dataset can be matched to the rules that graded it.
std::string rule_config_digest(const RuleConfig& config);

// Decoding strategy used for generation: temperature sampling like
// policy::sample, except that the advance token is masked out (probability
// renormalized over the rest) once every lyric unit has been consumed. The
// bigram alone cannot count units, so unguided sampling overruns the lyric on
// most prompts; the mask delegates that bookkeeping to the prompt, while
// stopping too early remains possible and is scored by the lyric rule.
// Deterministic for a fixed seed.
SampleResult sample_guided(const Policy& policy, const LyricLine& lyric, double temperature,
                           int max_len, std::uint64_t seed);

// Samples k candidates for one prompt (via sample_guided), scores them under
// the policy, grades them against the rules, and drops exact duplicate texts
// (first occurrence wins). Candidate i uses the sub-seed
// mix_seed(seed, prompt_index, i), so growing k extends a candidate set
// instead of reshuffling it.
std::vector<Candidate> generate_candidates(const Policy& policy, const LyricLine& lyric,
                                           std::size_t prompt_index, const GenOptions& options,
                                           const RuleConfig& rules);

// Per prompt: a compliant candidate and a violating one yield exactly one
// pair (best-scored compliant vs most-violating); a set with no compliant
// candidate yields every distinct candidate as an undesirable sample; an
// all-compliant set contributes nothing. Prompts are processed in parallel
// and assembled in order, so output is deterministic for a fixed seed.
PreferenceDataset build_dataset(const Policy& policy, const std::vector<LyricLine>& prompts,
                                const GenOptions& options, const RuleConfig& rules);
PreferenceDataset build_dataset_serial(const Policy& policy,
                                       const std::vector<LyricLine>& prompts,
                                       const GenOptions& options, const RuleConfig& rules);

// JSONL with a leading header record carrying schema version and provenance;
// one pair or undesirable record per subsequent line.
void write_dataset(const PreferenceDataset& dataset, const std::string& path);
PreferenceDataset read_dataset(const std::string& path);

}  // namespace melalign
