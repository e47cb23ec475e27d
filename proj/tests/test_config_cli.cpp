#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cctype>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "melalign/commands.hpp"
#include "melalign/config.hpp"
#include "melalign/prefdata.hpp"
#include "testutil.hpp"

using namespace melalign;

TEST_CASE("an empty config object yields the defaults") {
    const AppConfig parsed = parse_config_text("{}");
    CHECK(parsed == AppConfig{});
}

TEST_CASE("section overrides land on the right fields") {
    const AppConfig cfg = parse_config_text(R"({
        "rules": {"tau_note": 0.25, "p_max": 80},
        "align": {"optimizer": "sgd", "dpo_beta": 0.4, "dpo_epochs": 3},
        "mle": {"epochs": 5, "lr": 0.1},
        "generation": {"language": "chinese", "k": 4, "seed": 9},
        "vocab": {"duration_edges_ms": [100, 200, 400]},
        "paths": {"dataset": "elsewhere/prefs.jsonl"}
    })");
    CHECK(cfg.rules.tau_note == 0.25);
    CHECK(cfg.rules.p_max == 80);
    CHECK(cfg.rules.p_min == RuleConfig{}.p_min);  // untouched default
    CHECK(cfg.align.optimizer == Optimizer::sgd);
    REQUIRE(cfg.align.dpo_beta.has_value());
    CHECK(*cfg.align.dpo_beta == 0.4);
    CHECK_FALSE(cfg.align.kto_beta.has_value());
    CHECK(cfg.align.dpo_epochs == 3);
    CHECK(cfg.mle.epochs == 5);
    CHECK(cfg.mle.lr == 0.1);
    CHECK(cfg.generation.language == Language::chinese);
    CHECK(cfg.generation.k == 4);
    CHECK(cfg.generation.seed == 9);
    CHECK(cfg.vocab.duration_edges_ms == std::vector<std::int64_t>{100, 200, 400});
    CHECK(cfg.paths.dataset == "elsewhere/prefs.jsonl");
    CHECK(cfg.paths.corpus == PathsConfig{}.corpus);
}

TEST_CASE("config rejection") {
    SUBCASE("unknown root key") {
        CHECK_THROWS_AS(parse_config_text(R"({"rulez": {}})"), ConfigError);
    }
    SUBCASE("unknown nested key") {
        CHECK_THROWS_AS(parse_config_text(R"({"rules": {"tau": 0.5}})"), ConfigError);
    }
    SUBCASE("wrong type") {
        CHECK_THROWS_AS(parse_config_text(R"({"mle": {"epochs": "sixty"}})"), ConfigError);
        CHECK_THROWS_AS(parse_config_text(R"({"vocab": {"duration_edges_ms": 125}})"),
                        ConfigError);
    }
    SUBCASE("invalid values") {
        CHECK_THROWS_AS(parse_config_text(R"({"rules": {"tau_note": 1.5}})"), ConfigError);
        CHECK_THROWS_AS(parse_config_text(R"({"align": {"beta": 0}})"), ConfigError);
        CHECK_THROWS_AS(parse_config_text(R"({"generation": {"k": 1}})"), ConfigError);
        CHECK_THROWS_AS(parse_config_text(R"({"generation": {"language": "latin"}})"),
                        ConfigError);
        CHECK_THROWS_AS(parse_config_text(R"({"align": {"optimizer": "lbfgs"}})"), ConfigError);
        CHECK_THROWS_AS(parse_config_text(R"({"vocab": {"duration_edges_ms": [400, 200]}})"),
                        ConfigError);
    }
    SUBCASE("malformed json") {
        CHECK_THROWS_AS(parse_config_text("{"), ConfigError);
        CHECK_THROWS_AS(parse_config_text("[1, 2]"), ConfigError);
    }
}

TEST_CASE("config serialization round-trips and hashes stably") {
    AppConfig cfg;
    cfg.rules.tau_note = 0.4;
    cfg.align.kto_beta = 0.05;
    cfg.generation.language = Language::chinese;
    cfg.paths.report = "x/report.json";

    const std::string text = config_to_json_text(cfg);
    CHECK(parse_config_text(text) == cfg);
    CHECK(config_to_json_text(parse_config_text(text)) == text);

    const std::string digest = config_digest(cfg);
    CHECK(digest.size() == 16);
    for (char c : digest) CHECK((std::isdigit(c) || (c >= 'a' && c <= 'f')));
    CHECK(digest == config_digest(cfg));

    AppConfig other = cfg;
    other.rules.tau_note = 0.5;
    CHECK(config_digest(other) != digest);
}

TEST_CASE("load_config reads files and reports missing ones") {
    testutil::TempDir dir;
    const std::string path = dir.file("config.json");
    write_line_file(path, {R"({"generation": {"k": 3}})"});
    CHECK(load_config(path).generation.k == 3);
    CHECK_THROWS_AS(load_config(dir.file("absent.json")), IoError);
}

TEST_CASE("provenance line carries the version and the config digest") {
    const AppConfig cfg;
    const std::string line = provenance_line(cfg, 42);
    CHECK(line.find(kVersion) != std::string::npos);
    CHECK(line.find(config_digest(cfg)) != std::string::npos);
    CHECK(line.find("seed=42") != std::string::npos);
}

TEST_CASE("command pipeline runs end to end") {
    testutil::TempDir dir;
    AppConfig cfg;
    cfg.mle.epochs = 200;
    cfg.align.dpo_epochs = 4;
    cfg.align.kto_epochs = 4;
    cfg.generation.k = 4;
    cfg.generation.seed = 11;

    const std::string prefix = dir.file("corpus");
    const std::string refs_prefix = dir.file("refs");
    const std::string ckpt = dir.file("policy.ckpt");
    const std::string dataset = dir.file("prefs.jsonl");
    const std::string aligned = dir.file("aligned.ckpt");
    const std::string log_path = dir.file("train.jsonl");
    const std::string gen_out = dir.file("generated.txt");
    const std::string report_path = dir.file("report.json");
    const std::string csv_path = dir.file("report.csv");
    std::ostringstream sink;

    cmd_synth_corpus(cfg, SynthCorpusArgs{40, 0.3, prefix}, sink);
    const auto melodies = read_line_file(prefix + ".melodies.txt");
    const auto lyrics = read_line_file(prefix + ".lyrics.txt");
    REQUIRE(melodies.size() == 40);
    REQUIRE(lyrics.size() == 40);

    // A fully compliant corpus: references for the evaluation verbs must parse.
    cmd_synth_corpus(cfg, SynthCorpusArgs{40, 0.0, refs_prefix}, sink);

    cmd_train_mle(cfg, TrainMleArgs{prefix, ckpt}, sink);
    CHECK_NOTHROW(load_policy(ckpt));

    cmd_gen_prefs(cfg, GenPrefsArgs{ckpt, prefix + ".lyrics.txt", dataset}, sink);
    const PreferenceDataset prefs = read_dataset(dataset);
    CHECK(prefs.provenance.k == 4);
    CHECK((!prefs.pairs.empty() || !prefs.unpaired.empty()));

    // Regenerating with the same inputs reproduces the dataset byte for byte.
    const std::string dataset2 = dir.file("prefs2.jsonl");
    cmd_gen_prefs(cfg, GenPrefsArgs{ckpt, prefix + ".lyrics.txt", dataset2}, sink);
    CHECK(testutil::read_file_bytes(dataset) == testutil::read_file_bytes(dataset2));

    cmd_align(cfg, AlignArgs{ckpt, dataset, aligned, log_path}, sink);
    CHECK_NOTHROW(load_policy(aligned));
    CHECK(!read_line_file(log_path).empty());

    cmd_generate(cfg, GenerateArgs{aligned, prefix + ".lyrics.txt", gen_out}, sink);
    const auto generated = read_line_file(gen_out);
    REQUIRE(generated.size() == 40);

    cmd_check(cfg, CheckArgs{gen_out, prefix + ".lyrics.txt", report_path}, sink);
    {
        const auto j = nlohmann::json::parse(testutil::read_file_bytes(report_path));
        REQUIRE(j.contains("violations"));
        REQUIRE(j.contains("provenance"));
        CHECK(j.at("violations").at("total") == 40);
    }

    cmd_eval(cfg, EvalArgs{gen_out, refs_prefix + ".melodies.txt", false, report_path}, sink);
    {
        const auto j = nlohmann::json::parse(testutil::read_file_bytes(report_path));
        REQUIRE(j.contains("metrics"));
        CHECK(j.at("metrics").at("n_evaluated").get<int>() +
                  j.at("metrics").at("n_skipped").get<int>() ==
              40);
    }

    cmd_report(cfg,
               ReportArgs{gen_out, refs_prefix + ".melodies.txt", prefix + ".lyrics.txt", false,
                          report_path, csv_path},
               sink);
    {
        const auto j = nlohmann::json::parse(testutil::read_file_bytes(report_path));
        CHECK(j.contains("violations"));
        CHECK(j.contains("metrics"));
        CHECK(j.contains("provenance"));
        const auto csv = read_line_file(csv_path);
        REQUIRE(!csv.empty());
        CHECK(csv.front() == "rule,count,rate");
        CHECK(csv.size() == 1 + kAllRules.size());
    }

    CHECK(sink.str().find("corpus") != std::string::npos);
}

TEST_CASE("commands surface missing inputs") {
    testutil::TempDir dir;
    const AppConfig cfg;
    std::ostringstream sink;
    CHECK_THROWS_AS(
        cmd_train_mle(cfg, TrainMleArgs{dir.file("nope"), dir.file("out.ckpt")}, sink),
        MissingInputError);
    CHECK_THROWS_AS(
        cmd_gen_prefs(cfg, GenPrefsArgs{dir.file("no.ckpt"), dir.file("no.txt"), "x"}, sink),
        MissingInputError);
    CHECK_THROWS_AS(cmd_check(cfg, CheckArgs{dir.file("a"), dir.file("b"), ""}, sink),
                    MissingInputError);
}
