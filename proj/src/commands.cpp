#include "melalign/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "melalign/align.hpp"
#include "melalign/metrics.hpp"
#include "melalign/rng.hpp"
#include "melalign/synthgen.hpp"

namespace melalign {

using nlohmann::json;

namespace {

void require_input(const std::string& path, const std::string& what) {
    if (!std::filesystem::exists(path)) {
        throw MissingInputError(what + " not found: " + path);
    }
}

void ensure_parent_dir(const std::string& path) {
    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) {
        std::filesystem::create_directories(parent);
    }
}

std::vector<LyricLine> read_prompts(const std::string& path, Language language) {
    require_input(path, "prompt file");
    std::vector<LyricLine> prompts;
    std::size_t line_no = 0;
    for (const std::string& line : read_line_file(path)) {
        ++line_no;
        try {
            prompts.push_back(split_lyric(line, language));
        } catch (const EmptyLyricError&) {
            throw Error("prompt " + std::to_string(line_no) + " in " + path +
                        " is empty after normalization");
        }
    }
    if (prompts.empty()) {
        throw Error("prompt file has no prompts: " + path);
    }
    return prompts;
}

json provenance_json(const AppConfig& config, std::uint64_t seed) {
    return json{{"version", std::string(kVersion)},
                {"config_digest", config_digest(config)},
                {"seed", seed}};
}

json violations_json(const ViolationReport& report) {
    json counts;
    json rates;
    for (Rule rule : kAllRules) {
        counts[std::string(to_string(rule))] = report.count(rule);
        rates[std::string(to_string(rule))] = report.rate(rule);
    }
    return json{{"total", report.total},
                {"counts", counts},
                {"rates", rates},
                {"total_violations", report.total_violations()}};
}

json metrics_json(const MetricsReport& report) {
    json j;
    j["n_evaluated"] = report.n_evaluated;
    j["n_skipped"] = report.n_skipped;
    j["pd"] = report.pd ? json(*report.pd) : json(nullptr);
    j["dd"] = report.dd ? json(*report.dd) : json(nullptr);
    j["md"] = report.md ? json(*report.md) : json(nullptr);
    j["md_raw"] = report.md_raw ? json(*report.md_raw) : json(nullptr);
    return j;
}

void write_json_report(const json& body, const std::string& path) {
    ensure_parent_dir(path);
    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open report for writing: " + path);
    }
    file << body.dump(2) << "\n";
    if (!file) {
        throw IoError("failed to write report: " + path);
    }
}

void print_violations(const ViolationReport& report, std::ostream& out) {
    out << "melodies checked: " << report.total << "\n";
    for (Rule rule : kAllRules) {
        out << "  " << to_string(rule) << ": " << report.count(rule) << " ("
            << std::fixed << std::setprecision(4) << report.rate(rule) << ")\n";
    }
    out.unsetf(std::ios::fixed);
    out << "total violations: " << report.total_violations() << "\n";
}

struct CorpusFiles {
    std::vector<std::string> melodies;
    std::vector<std::string> lyrics;
};

CorpusFiles read_corpus(const std::string& melodies_path, const std::string& lyrics_path) {
    require_input(melodies_path, "melody file");
    require_input(lyrics_path, "lyric file");
    CorpusFiles files{read_line_file(melodies_path), read_line_file(lyrics_path)};
    if (files.melodies.size() != files.lyrics.size()) {
        throw Error("melody and lyric files differ in length (" +
                    std::to_string(files.melodies.size()) + " vs " +
                    std::to_string(files.lyrics.size()) + ")");
    }
    if (files.melodies.empty()) {
        throw Error("corpus is empty: " + melodies_path);
    }
    return files;
}

}  // namespace

std::string provenance_line(const AppConfig& config, std::uint64_t seed) {
    std::ostringstream out;
    out << "melalign " << kVersion << " config=" << config_digest(config) << " seed=" << seed;
    return out.str();
}

void cmd_synth_corpus(const AppConfig& config, const SynthCorpusArgs& args, std::ostream& out) {
    SynthOptions options;
    options.n = args.n;
    options.violation_rate = args.violation_rate;
    options.seed = config.generation.seed;
    options.language = config.generation.language;
    options.rules = config.rules;
    options.vocab = config.vocab;
    const SynthCorpus corpus = synth_corpus(options);

    const std::string header = provenance_line(config, options.seed);
    ensure_parent_dir(args.out_prefix);
    write_line_file(args.out_prefix + ".melodies.txt", corpus.melodies, header);
    write_line_file(args.out_prefix + ".lyrics.txt", corpus.lyrics, header);
    out << "wrote " << corpus.melodies.size() << " melodies (" << corpus.n_violating
        << " violating) to " << args.out_prefix << ".{melodies,lyrics}.txt\n";
}

void cmd_train_mle(const AppConfig& config, const TrainMleArgs& args, std::ostream& out) {
    const CorpusFiles files =
        read_corpus(args.corpus_prefix + ".melodies.txt", args.corpus_prefix + ".lyrics.txt");
    const Vocabulary vocab(config.vocab);
    std::vector<std::vector<int>> corpus;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < files.melodies.size(); ++i) {
        const ParseResult parsed = parse_melody(files.melodies[i]);
        if (!parsed.ok()) {
            ++skipped;
            continue;
        }
        const LyricLine lyric = split_lyric(files.lyrics[i], config.generation.language);
        const EncodeResult encoded = encode_melody(*parsed.melody, lyric, vocab);
        if (!encoded.ok()) {
            ++skipped;
            continue;
        }
        corpus.push_back(encoded.tokens);
    }
    if (corpus.empty()) {
        throw EmptyCorpusError("no corpus line could be encoded from " + args.corpus_prefix);
    }

    Policy policy{vocab};
    const double before = corpus_mean_log_prob(policy, corpus);
    policy = train_mle(std::move(policy), corpus, config.mle.epochs, config.mle.lr);
    const double after = corpus_mean_log_prob(policy, corpus);

    ensure_parent_dir(args.out_checkpoint);
    save_policy(policy, args.out_checkpoint, provenance_line(config, config.generation.seed));
    out << "fitted on " << corpus.size() << " sequences (skipped " << skipped
        << "); mean log-prob " << before << " -> " << after << "\n"
        << "checkpoint: " << args.out_checkpoint << "\n";
}

void cmd_gen_prefs(const AppConfig& config, const GenPrefsArgs& args, std::ostream& out) {
    require_input(args.checkpoint, "checkpoint");
    const Policy policy = load_policy(args.checkpoint);
    const std::vector<LyricLine> prompts =
        read_prompts(args.prompts, config.generation.language);
    const PreferenceDataset dataset =
        build_dataset(policy, prompts, config.generation.gen_options(), config.rules);
    ensure_parent_dir(args.out_dataset);
    write_dataset(dataset, args.out_dataset);
    out << "prompts: " << prompts.size() << ", pairs: " << dataset.pairs.size()
        << ", undesirable: " << dataset.unpaired.size() << "\n"
        << "dataset: " << args.out_dataset << "\n";
}

void cmd_align(const AppConfig& config, const AlignArgs& args, std::ostream& out) {
    require_input(args.checkpoint, "checkpoint");
    require_input(args.dataset, "dataset");
    Policy policy = load_policy(args.checkpoint);
    const PreferenceDataset dataset = read_dataset(args.dataset);
    const AlignState state = align(std::move(policy), dataset, config.align);

    ensure_parent_dir(args.out_checkpoint);
    save_policy(state.policy(), args.out_checkpoint,
                provenance_line(config, config.align.seed));
    if (!args.out_log.empty()) {
        ensure_parent_dir(args.out_log);
        write_training_log(state.log(), args.out_log);
    }

    for (Phase phase : {Phase::dpo, Phase::kto}) {
        double first = 0.0;
        double last = 0.0;
        std::size_t steps = 0;
        for (const TrainLogRecord& rec : state.log()) {
            if (rec.phase != phase) continue;
            if (steps == 0) first = rec.mean_loss;
            last = rec.mean_loss;
            ++steps;
        }
        out << to_string(phase) << ": " << steps << " steps";
        if (steps > 0) {
            out << ", mean loss " << first << " -> " << last;
        }
        out << "\n";
    }
    out << "checkpoint: " << args.out_checkpoint << "\n";
}

void cmd_generate(const AppConfig& config, const GenerateArgs& args, std::ostream& out) {
    require_input(args.checkpoint, "checkpoint");
    const Policy policy = load_policy(args.checkpoint);
    const std::vector<LyricLine> prompts =
        read_prompts(args.prompts, config.generation.language);
    std::vector<std::string> melodies;
    melodies.reserve(prompts.size());
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        const SampleResult sampled =
            sample_guided(policy, prompts[i], config.generation.temperature,
                          config.generation.max_len,
                          mix_seed(config.generation.seed, static_cast<std::uint64_t>(i), 0));
        std::string text = decode_tokens(sampled.tokens, policy.vocab(), prompts[i]);
        if (text.empty()) {
            // A zero-note sample would otherwise print as a blank line, which
            // line files skip; keep one line per prompt with a field that is
            // equally unparsable.
            text = "?";
        }
        melodies.push_back(std::move(text));
    }
    ensure_parent_dir(args.out_melodies);
    write_line_file(args.out_melodies, melodies,
                    provenance_line(config, config.generation.seed));
    out << "generated " << melodies.size() << " melodies to " << args.out_melodies << "\n";
}

void cmd_check(const AppConfig& config, const CheckArgs& args, std::ostream& out) {
    const CorpusFiles files = read_corpus(args.melodies, args.lyrics);
    std::vector<LyricLine> lyrics;
    lyrics.reserve(files.lyrics.size());
    for (const std::string& line : files.lyrics) {
        lyrics.push_back(split_lyric(line, config.generation.language));
    }
    const ViolationReport report = violation_report(files.melodies, lyrics, config.rules);
    print_violations(report, out);
    if (!args.out_report.empty()) {
        write_json_report(json{{"provenance", provenance_json(config, config.generation.seed)},
                               {"violations", violations_json(report)}},
                          args.out_report);
        out << "report: " << args.out_report << "\n";
    }
}

void cmd_eval(const AppConfig& config, const EvalArgs& args, std::ostream& out) {
    require_input(args.generated, "generated melody file");
    require_input(args.reference, "reference melody file");
    const std::vector<std::string> gens = read_line_file(args.generated);
    const std::vector<std::string> refs = read_line_file(args.reference);
    EvalOptions options;
    options.vocab = config.vocab;
    options.per_pair = args.per_pair;
    const MetricsReport report = evaluate_set(gens, refs, options);
    out << "evaluated " << report.n_evaluated << " pairs (skipped " << report.n_skipped
        << ")\n";
    if (report.pd) {
        out << "PD " << *report.pd << ", DD " << *report.dd << ", MD " << *report.md
            << " (raw " << *report.md_raw << ")\n";
    } else {
        out << "metrics undefined: nothing parsed\n";
    }
    if (!args.out_report.empty()) {
        write_json_report(json{{"provenance", provenance_json(config, config.generation.seed)},
                               {"metrics", metrics_json(report)}},
                          args.out_report);
        out << "report: " << args.out_report << "\n";
    }
}

void cmd_report(const AppConfig& config, const ReportArgs& args, std::ostream& out) {
    const CorpusFiles files = read_corpus(args.generated, args.lyrics);
    require_input(args.reference, "reference melody file");
    const std::vector<std::string> refs = read_line_file(args.reference);

    std::vector<LyricLine> lyrics;
    lyrics.reserve(files.lyrics.size());
    for (const std::string& line : files.lyrics) {
        lyrics.push_back(split_lyric(line, config.generation.language));
    }
    const ViolationReport violations =
        violation_report(files.melodies, lyrics, config.rules);
    EvalOptions options;
    options.vocab = config.vocab;
    options.per_pair = args.per_pair;
    const MetricsReport metrics = evaluate_set(files.melodies, refs, options);

    print_violations(violations, out);
    if (metrics.pd) {
        out << "PD " << *metrics.pd << ", DD " << *metrics.dd << ", MD " << *metrics.md
            << "\n";
    }

    write_json_report(json{{"provenance", provenance_json(config, config.generation.seed)},
                           {"violations", violations_json(violations)},
                           {"metrics", metrics_json(metrics)}},
                      args.out_report);
    out << "report: " << args.out_report << "\n";

    if (!args.out_csv.empty()) {
        ensure_parent_dir(args.out_csv);
        std::ofstream csv(args.out_csv, std::ios::binary);
        if (!csv) {
            throw IoError("cannot open CSV table for writing: " + args.out_csv);
        }
        csv << "rule,count,rate\n";
        for (Rule rule : kAllRules) {
            csv << to_string(rule) << "," << violations.count(rule) << ","
                << violations.rate(rule) << "\n";
        }
        if (!csv) {
            throw IoError("failed to write CSV table: " + args.out_csv);
        }
        out << "table: " << args.out_csv << "\n";
    }
}

}  // namespace melalign
