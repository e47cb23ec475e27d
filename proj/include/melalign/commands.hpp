#pragma once

#include <iosfwd>
#include <string>

#include "melalign/config.hpp"

namespace melalign {

inline constexpr std::string_view kVersion = "0.1.0";

class MissingInputError : public Error {
public:
    using Error::Error;
};

// Each command is a thin deterministic wrapper over the module operations:
// explicit inputs, outputs at the given paths, a human-readable summary on
// `out`. Errors are reported by throwing; the CLI maps them to exit codes.

struct SynthCorpusArgs {
    int n = 200;
    double violation_rate = 0.0;
    std::string out_prefix;  // writes <prefix>.melodies.txt and <prefix>.lyrics.txt
};
void cmd_synth_corpus(const AppConfig& config, const SynthCorpusArgs& args, std::ostream& out);

struct TrainMleArgs {
    std::string corpus_prefix;
    std::string out_checkpoint;
};
void cmd_train_mle(const AppConfig& config, const TrainMleArgs& args, std::ostream& out);

struct GenPrefsArgs {
    std::string checkpoint;
    std::string prompts;  // lyric lines, one prompt per line
    std::string out_dataset;
};
void cmd_gen_prefs(const AppConfig& config, const GenPrefsArgs& args, std::ostream& out);

struct AlignArgs {
    std::string checkpoint;
    std::string dataset;
    std::string out_checkpoint;
    std::string out_log;  // empty = skip writing the training log
};
void cmd_align(const AppConfig& config, const AlignArgs& args, std::ostream& out);

struct GenerateArgs {
    std::string checkpoint;
    std::string prompts;
    std::string out_melodies;
};
void cmd_generate(const AppConfig& config, const GenerateArgs& args, std::ostream& out);

struct CheckArgs {
    std::string melodies;
    std::string lyrics;
    std::string out_report;  // empty = stdout summary only
};
void cmd_check(const AppConfig& config, const CheckArgs& args, std::ostream& out);

struct EvalArgs {
    std::string generated;
    std::string reference;
    bool per_pair = false;
    std::string out_report;  // empty = stdout summary only
};
void cmd_eval(const AppConfig& config, const EvalArgs& args, std::ostream& out);

struct ReportArgs {
    std::string generated;
    std::string reference;
    std::string lyrics;
    bool per_pair = false;
    std::string out_report;
    std::string out_csv;  // empty = no CSV table
};
void cmd_report(const AppConfig& config, const ReportArgs& args, std::ostream& out);

// One-line provenance stamp embedded in every output file.
std::string provenance_line(const AppConfig& config, std::uint64_t seed);

}  // namespace melalign
