#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "melalign/metrics.hpp"
#include "melalign/rng.hpp"
#include "testutil.hpp"

using namespace melalign;

namespace {

const VocabConfig kVocabCfg{};

Melody must_parse(const std::string& text) {
    const ParseResult r = parse_melody(text);
    REQUIRE(r.ok());
    return *r.melody;
}

// A reference-side melody is only required to parse, so pitches and
// durations can range freely.
std::string random_parseable_text(Rng& rng) {
    const int n = rng.next_int(1, 7);
    Melody m;
    for (int i = 0; i < n; ++i) {
        Note note;
        note.lyric = (i > 0 && rng.next_double() < 0.25)
                         ? "-"
                         : testutil::word_pool()[rng.next_below(testutil::word_pool().size())];
        note.pitch = rng.next_int(0, 127);
        note.duration_ms = rng.next_int(1, 5000);
        m.notes.push_back(note);
    }
    return serialize_melody(m);
}

std::vector<std::vector<int>> all_sequences(const std::vector<int>& alphabet, int max_len) {
    std::vector<std::vector<int>> out;
    std::vector<std::vector<int>> frontier = {{}};
    for (int len = 1; len <= max_len; ++len) {
        std::vector<std::vector<int>> next;
        for (const auto& seq : frontier) {
            for (int p : alphabet) {
                auto grown = seq;
                grown.push_back(p);
                out.push_back(grown);
                next.push_back(std::move(grown));
            }
        }
        frontier = std::move(next);
    }
    return out;
}

}  // namespace

TEST_CASE("pitch histogram has 128 midi bins") {
    const std::vector<Melody> melodies = {must_parse("shine,67,500|on,69,250|-,67,250"),
                                          must_parse("you,60,500")};
    const Histogram h = pitch_histogram(melodies);
    REQUIRE(h.labels.size() == 128);
    REQUIRE(h.counts.size() == 128);
    CHECK(h.labels[60] == "60");
    CHECK(h.counts[67] == 2.0);
    CHECK(h.counts[69] == 1.0);
    CHECK(h.counts[60] == 1.0);
    CHECK(h.counts[61] == 0.0);
}

TEST_CASE("duration histogram bins by the vocabulary buckets") {
    const Vocabulary v{kVocabCfg};
    const std::vector<Melody> melodies = {must_parse("shine,67,500|on,69,100|-,67,3000")};
    const Histogram h = duration_histogram(melodies, kVocabCfg);
    REQUIRE(h.counts.size() == static_cast<std::size_t>(v.num_duration_buckets()));
    CHECK(h.labels.front() == v.duration_bucket_label(0));
    CHECK(h.counts[static_cast<std::size_t>(v.bucket_of_duration(500))] == 1.0);
    CHECK(h.counts[static_cast<std::size_t>(v.bucket_of_duration(100))] == 1.0);
    CHECK(h.counts[static_cast<std::size_t>(v.bucket_of_duration(3000))] == 1.0);
}

TEST_CASE("cosine similarity") {
    auto hist = [](std::vector<double> counts) {
        Histogram h;
        for (std::size_t i = 0; i < counts.size(); ++i) h.labels.push_back(std::to_string(i));
        h.counts = std::move(counts);
        return h;
    };

    SUBCASE("identical histograms score exactly 1") {
        const Histogram a = hist({3.0, 0.0, 7.0, 1.0});
        CHECK(cosine_similarity(a, a) == 1.0);
    }
    SUBCASE("orthogonal histograms score 0") {
        CHECK(cosine_similarity(hist({1.0, 0.0}), hist({0.0, 2.0})) == 0.0);
    }
    SUBCASE("45 degrees") {
        CHECK(cosine_similarity(hist({1.0, 0.0}), hist({1.0, 1.0})) ==
              doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    }
    SUBCASE("scale invariance") {
        Rng rng(42);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> counts;
            for (int i = 0; i < 16; ++i)
                counts.push_back(static_cast<double>(rng.next_int(0, 9)));
            counts[0] += 1.0;  // keep the norm positive
            const Histogram a = hist(counts);
            for (double scale : {2.0, 10.0, 0.125, 1000.0}) {
                std::vector<double> scaled = counts;
                for (double& c : scaled) c *= scale;
                CHECK(std::abs(cosine_similarity(a, hist(scaled)) - 1.0) <= 1e-12);
            }
        }
    }
    SUBCASE("zero histogram is rejected") {
        CHECK_THROWS_AS(cosine_similarity(hist({0.0, 0.0}), hist({1.0, 1.0})),
                        ZeroNormHistogramError);
        CHECK_THROWS_AS(cosine_similarity(hist({1.0, 1.0}), hist({0.0, 0.0})),
                        ZeroNormHistogramError);
    }
    SUBCASE("mismatched bins are rejected") {
        Histogram a = hist({1.0, 2.0});
        Histogram b = hist({1.0, 2.0});
        b.labels[1] = "other";
        CHECK_THROWS_AS(cosine_similarity(a, b), BinMismatchError);
        CHECK_THROWS_AS(cosine_similarity(a, hist({1.0, 2.0, 3.0})), BinMismatchError);
    }
}

TEST_CASE("warping distance on worked examples") {
    CHECK(melody_distance_full({60}, {62}) == MelodyDistance{2, 1, 2.0});
    CHECK(melody_distance_full({60, 64}, {60, 62, 64}) == MelodyDistance{2, 3, 2.0 / 3.0});
    CHECK(melody_distance_full({60, 62, 64}, {60, 62, 64}) == MelodyDistance{0, 3, 0.0});
    CHECK(melody_distance({60, 64}, {60, 62, 64}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(melody_distance_full({}, {60}), EmptySequenceError);
    CHECK_THROWS_AS(melody_distance_full({60}, {}), EmptySequenceError);
}

TEST_CASE("warping distance is symmetric and ties break to the shorter path") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int> a, b;
        for (int i = rng.next_int(1, 7); i > 0; --i) a.push_back(rng.next_int(55, 89));
        for (int i = rng.next_int(1, 7); i > 0; --i) b.push_back(rng.next_int(55, 89));
        const MelodyDistance ab = melody_distance_full(a, b);
        const MelodyDistance ba = melody_distance_full(b, a);
        CHECK(ab.cost == ba.cost);
        CHECK(ab.path_length == ba.path_length);
    }

    // Equal-cost paths of different lengths: constant sequences a=[60,60],
    // b=[60] admit paths of length 2 only, but a=[60], b=[60,60,60] forces
    // the single horizontal path; compare against a case with a genuine tie.
    const MelodyDistance tie = melody_distance_full({60, 60}, {60, 60});
    CHECK(tie.cost == 0);
    CHECK(tie.path_length == 2);  // the diagonal, not a length-3 staircase
}

TEST_CASE("warping distance matches exhaustive path enumeration") {
    const testutil::BruteWarpOracle oracle(8);

    SUBCASE("all pairs up to length 3 over a 3-pitch alphabet") {
        const auto seqs = all_sequences({60, 62, 64}, 3);
        for (const auto& a : seqs) {
            for (const auto& b : seqs) {
                const MelodyDistance got = melody_distance_full(a, b);
                const auto want = oracle.distance(a, b);
                CHECK(got.cost == want.first);
                CHECK(got.path_length == want.second);
            }
        }
    }
    SUBCASE("random pairs up to length 7") {
        Rng rng(20260817);
        for (int trial = 0; trial < 2000; ++trial) {
            std::vector<int> a, b;
            for (int i = rng.next_int(1, 7); i > 0; --i) a.push_back(rng.next_int(55, 89));
            for (int i = rng.next_int(1, 7); i > 0; --i) b.push_back(rng.next_int(55, 89));
            const MelodyDistance got = melody_distance_full(a, b);
            const auto want = oracle.distance(a, b);
            CHECK(got.cost == want.first);
            CHECK(got.path_length == want.second);
            CHECK(got.normalized == static_cast<double>(want.first) /
                                        static_cast<double>(want.second));
        }
    }
}

TEST_CASE("evaluating a set against itself is a perfect score") {
    Rng rng(11);
    std::vector<std::string> texts;
    for (int i = 0; i < 40; ++i) texts.push_back(random_parseable_text(rng));
    const EvalOptions options{kVocabCfg, false};
    const MetricsReport report = evaluate_set(texts, texts, options);
    CHECK(report.n_evaluated == 40);
    CHECK(report.n_skipped == 0);
    REQUIRE(report.pd.has_value());
    REQUIRE(report.dd.has_value());
    REQUIRE(report.md.has_value());
    CHECK(*report.pd == 1.0);
    CHECK(*report.dd == 1.0);
    CHECK(*report.md == 0.0);
    CHECK(*report.md_raw == 0.0);

    const MetricsReport per_pair = evaluate_set(texts, texts, EvalOptions{kVocabCfg, true});
    CHECK(*per_pair.pd == 1.0);
    CHECK(*per_pair.dd == 1.0);
}

TEST_CASE("unparsable generations are skipped together with their references") {
    Rng rng(12);
    std::vector<std::string> gens, refs;
    for (int i = 0; i < 30; ++i) {
        refs.push_back(random_parseable_text(rng));
        gens.push_back(random_parseable_text(rng));
    }
    for (std::size_t i : {std::size_t{3}, std::size_t{11}, std::size_t{29}}) {
        gens[i] = "not a melody";
    }
    std::vector<std::string> filtered_gens, filtered_refs;
    for (std::size_t i = 0; i < gens.size(); ++i) {
        if (i == 3 || i == 11 || i == 29) continue;
        filtered_gens.push_back(gens[i]);
        filtered_refs.push_back(refs[i]);
    }

    const EvalOptions options{kVocabCfg, false};
    const MetricsReport with_skips = evaluate_set(gens, refs, options);
    const MetricsReport filtered = evaluate_set(filtered_gens, filtered_refs, options);
    CHECK(with_skips.n_skipped == 3);
    CHECK(with_skips.n_evaluated == 27);
    CHECK(with_skips.pd == filtered.pd);
    CHECK(with_skips.dd == filtered.dd);
    CHECK(with_skips.md == filtered.md);
    CHECK(with_skips.md_raw == filtered.md_raw);
}

TEST_CASE("degenerate evaluation inputs") {
    const EvalOptions options{kVocabCfg, false};

    SUBCASE("nothing parseable leaves the metrics absent") {
        const std::vector<std::string> gens = {"nope", ",,,"};
        const std::vector<std::string> refs = {"a,60,500", "b,62,500"};
        const MetricsReport report = evaluate_set(gens, refs, options);
        CHECK(report.n_evaluated == 0);
        CHECK(report.n_skipped == 2);
        CHECK_FALSE(report.pd.has_value());
        CHECK_FALSE(report.dd.has_value());
        CHECK_FALSE(report.md.has_value());
        CHECK_FALSE(report.md_raw.has_value());
    }
    SUBCASE("references must parse") {
        CHECK_THROWS_AS(evaluate_set({"a,60,500"}, {"broken"}, options), Error);
    }
    SUBCASE("sets must be index-aligned") {
        CHECK_THROWS_AS(evaluate_set({"a,60,500"}, {}, options), LengthMismatchError);
    }
    SUBCASE("empty sets evaluate to an empty report") {
        const MetricsReport report = evaluate_set({}, {}, options);
        CHECK(report.n_evaluated == 0);
        CHECK(report.n_skipped == 0);
        CHECK_FALSE(report.pd.has_value());
    }
}

TEST_CASE("a one-semitone shift moves the distance but not the duration similarity") {
    const std::vector<std::string> refs = {"la,70,500|la,70,500|la,70,1000"};
    const std::vector<std::string> gens = {"la,71,500|la,71,500|la,71,1000"};
    const MetricsReport report = evaluate_set(gens, refs, EvalOptions{kVocabCfg, false});
    CHECK(*report.dd == 1.0);
    CHECK(*report.pd < 1.0);
    CHECK(*report.md == 1.0);  // every warping cell costs exactly one semitone
    CHECK(*report.md_raw == 3.0);
}

TEST_CASE("per-pair and pooled similarities disagree on purpose") {
    const std::vector<std::string> refs = {"a,60,500", "b,64,500"};
    const std::vector<std::string> gens = {"a,60,500", "b,62,500|c,62,500"};
    const MetricsReport pooled = evaluate_set(gens, refs, EvalOptions{kVocabCfg, false});
    const MetricsReport per_pair = evaluate_set(gens, refs, EvalOptions{kVocabCfg, true});

    // Per pair: a perfect first pair and an orthogonal second pair.
    CHECK(*per_pair.pd == doctest::Approx(0.5).epsilon(1e-12));
    // Pooled: bins 60 vs 60+64 with the 62s adding gen mass only.
    CHECK(*pooled.pd == doctest::Approx(1.0 / std::sqrt(10.0)).epsilon(1e-12));
    // The distance term never pools.
    CHECK(pooled.md == per_pair.md);
    CHECK(pooled.md_raw == per_pair.md_raw);
}

TEST_CASE("parallel and serial evaluation agree bitwise") {
    Rng rng(13);
    std::vector<std::string> gens, refs;
    for (int i = 0; i < 60; ++i) {
        refs.push_back(random_parseable_text(rng));
        gens.push_back(rng.next_double() < 0.1 ? "broken" : random_parseable_text(rng));
    }
    for (bool per_pair : {false, true}) {
        const EvalOptions options{kVocabCfg, per_pair};
        CHECK(evaluate_set(gens, refs, options) == evaluate_set_serial(gens, refs, options));
    }
}

TEST_CASE("violation report") {
    const RuleConfig cfg{};
    const Language lang = Language::english;
    std::vector<std::string> texts = {
        "shine,67,500|on,69,250",      // compliant
        "shine,40,500|on,69,250",      // register
        "shine,67,60|on,69,250",       // duration
        "garbage",                     // format only, despite the lyric mismatch
        "shine,67,500|off,69,250",     // lyric
        "shine,40,60|on,69,250",       // register and duration together
    };
    std::vector<LyricLine> lyrics(texts.size(), split_lyric("shine on", lang));

    const ViolationReport report = violation_report(texts, lyrics, cfg);
    CHECK(report.total == texts.size());
    CHECK(report.count(Rule::Format) == 1);
    CHECK(report.count(Rule::Register) == 2);
    CHECK(report.count(Rule::Duration) == 2);
    CHECK(report.count(Rule::Lyric) == 1);
    CHECK(report.count(Rule::Note) == 0);
    CHECK(report.total_violations() == 6);
    CHECK(report.rate(Rule::Register) == doctest::Approx(2.0 / 6.0).epsilon(1e-12));

    CHECK_THROWS_AS(violation_report(texts, {}, cfg), LengthMismatchError);

    // Conservation: the counts line up with per-item reports.
    const auto reports = evaluate_many(texts, lyrics, cfg);
    std::size_t expected_total = 0;
    for (const auto& r : reports) expected_total += r.failed_rules().size();
    CHECK(report.total_violations() == expected_total);
}
