#pragma once

#include <string>

#include "melalign/align.hpp"
#include "melalign/prefdata.hpp"
#include "melalign/rules.hpp"
#include "melalign/vocab.hpp"

namespace melalign {

class ConfigError : public Error {
public:
    using Error::Error;
};

struct GenerationConfig {
    int k = 8;
    double temperature = 1.0;
    int max_len = 64;
    std::uint64_t seed = 0;
    Language language = Language::english;

    void validate() const;
    GenOptions gen_options() const { return GenOptions{k, temperature, max_len, seed}; }

    bool operator==(const GenerationConfig&) const = default;
};

struct MleConfig {
    // Full-batch ascent on a concave objective tolerates large steps, and the
    // tabular policy needs a long fit before sampled melodies are mostly
    // grammatical (under-trained policies emit almost no usable candidates).
    int epochs = 1600;
    double lr = 2.0;

    void validate() const;

    bool operator==(const MleConfig&) const = default;
};

struct PathsConfig {
    std::string corpus = "out/corpus";  // prefix: <corpus>.melodies.txt / <corpus>.lyrics.txt
    std::string dataset = "out/prefs.jsonl";
    std::string checkpoint = "out/policy.ckpt";
    std::string aligned_checkpoint = "out/policy_aligned.ckpt";
    std::string report = "out/report.json";
    std::string training_log = "out/train_log.jsonl";

    bool operator==(const PathsConfig&) const = default;
};

// Full application configuration. The JSON file mirrors this struct section
// by section; unknown keys anywhere are rejected so typos cannot silently
// fall back to defaults.
struct AppConfig {
    RuleConfig rules;
    AlignConfig align;
    MleConfig mle;
    GenerationConfig generation;
    VocabConfig vocab;
    PathsConfig paths;

    void validate() const;

    bool operator==(const AppConfig&) const = default;
};

// Parses a JSON config file; absent sections and absent keys keep their
// defaults. Throws ConfigError on syntax errors, unknown keys, or invalid
// values.
AppConfig load_config(const std::string& path);
AppConfig parse_config_text(const std::string& text);

// Canonical JSON serialization of the effective config (sorted keys), and
// its FNV-1a digest used in provenance headers.
std::string config_to_json_text(const AppConfig& config);
std::string config_digest(const AppConfig& config);

}  // namespace melalign
