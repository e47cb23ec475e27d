#include <chrono>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "melalign/align.hpp"
#include "melalign/metrics.hpp"
#include "melalign/parallel.hpp"
#include "melalign/prefdata.hpp"
#include "melalign/synthgen.hpp"

using namespace melalign;

namespace {

template <class F>
double best_ms(F&& fn, int reps) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void print_row(const std::string& kernel, std::size_t items, double serial_ms,
               double parallel_ms, bool identical) {
    std::cout << std::left << std::setw(24) << kernel << std::right << std::setw(8) << items
              << std::setw(12) << std::fixed << std::setprecision(2) << serial_ms
              << std::setw(12) << parallel_ms << std::setw(10) << std::setprecision(2)
              << serial_ms / parallel_ms << std::setw(12) << (identical ? "yes" : "NO")
              << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    int reps = 3;
    if (argc > 1) {
        reps = std::max(1, std::atoi(argv[1]));
    }
    std::cout << "threads: " << par::max_threads() << ", reps: " << reps << " (best-of)\n\n";
    std::cout << std::left << std::setw(24) << "kernel" << std::right << std::setw(8) << "items"
              << std::setw(12) << "serial ms" << std::setw(12) << "openmp ms" << std::setw(10)
              << "speedup" << std::setw(12) << "identical" << "\n";

    SynthOptions synth;
    synth.n = 1500;
    synth.violation_rate = 0.3;
    synth.seed = 7;
    const SynthCorpus corpus = synth_corpus(synth);
    std::vector<LyricLine> lyrics;
    for (const std::string& line : corpus.lyrics) {
        lyrics.push_back(split_lyric(line, Language::english));
    }
    const RuleConfig rules;

    {
        std::vector<RuleReport> serial_out, parallel_out;
        const double s = best_ms(
            [&] { serial_out = evaluate_many_serial(corpus.melodies, lyrics, rules); }, reps);
        const double p =
            best_ms([&] { parallel_out = evaluate_many(corpus.melodies, lyrics, rules); }, reps);
        bool same = serial_out.size() == parallel_out.size();
        for (std::size_t i = 0; same && i < serial_out.size(); ++i) {
            same = serial_out[i].verdicts == parallel_out[i].verdicts;
        }
        print_row("rule evaluation", corpus.melodies.size(), s, p, same);
    }

    const Vocabulary vocab{VocabConfig{}};
    Policy policy{vocab};
    std::vector<std::vector<int>> sequences;
    for (std::size_t i = 0; i < corpus.melodies.size(); ++i) {
        const ParseResult parsed = parse_melody(corpus.melodies[i]);
        if (!parsed.ok()) continue;
        const EncodeResult enc = encode_melody(*parsed.melody, lyrics[i], vocab);
        if (enc.ok()) sequences.push_back(enc.tokens);
    }

    {
        Matrix serial_out, parallel_out;
        const double s =
            best_ms([&] { serial_out = mean_corpus_grad_serial(policy, sequences); }, reps);
        const double p = best_ms([&] { parallel_out = mean_corpus_grad(policy, sequences); },
                                 reps);
        print_row("likelihood gradient", sequences.size(), s, p, serial_out == parallel_out);
    }

    {
        GenOptions gen;
        gen.k = 8;
        gen.seed = 11;
        const std::vector<LyricLine> prompts(lyrics.begin(), lyrics.begin() + 200);
        PreferenceDataset serial_out, parallel_out;
        const double s = best_ms(
            [&] { serial_out = build_dataset_serial(policy, prompts, gen, rules); }, reps);
        const double p =
            best_ms([&] { parallel_out = build_dataset(policy, prompts, gen, rules); }, reps);
        print_row("candidate generation", prompts.size(), s, p, serial_out == parallel_out);
    }

    {
        // Pairs share a prompt; rule compliance is irrelevant to the math.
        std::vector<PreferencePair> pairs;
        for (std::size_t i = 0; i + 1 < sequences.size() && pairs.size() < 600; ++i) {
            PreferencePair pair;
            pair.prompt = lyrics[0];
            pair.winner_tokens = sequences[i];
            pair.loser_tokens = sequences[i + 1];
            const int begin = encode_prompt(pair.prompt, vocab).begin_token;
            pair.winner_tokens[0] = begin;
            pair.loser_tokens[0] = begin;
            pairs.push_back(std::move(pair));
        }
        std::vector<std::size_t> indices(pairs.size());
        std::iota(indices.begin(), indices.end(), std::size_t{0});
        BatchEval serial_out, parallel_out;
        const double s = best_ms(
            [&] { serial_out = dpo_batch_eval_serial(policy, policy, pairs, indices, 0.1); },
            reps);
        const double p = best_ms(
            [&] { parallel_out = dpo_batch_eval(policy, policy, pairs, indices, 0.1); }, reps);
        print_row("pair loss batch", pairs.size(), s, p,
                  serial_out.mean_loss == parallel_out.mean_loss &&
                      serial_out.mean_grad == parallel_out.mean_grad);
    }

    {
        std::vector<std::string> gens, refs;
        for (std::size_t i = 0; i + 1 < corpus.melodies.size() && gens.size() < 600; ++i) {
            if (parse_melody(corpus.melodies[i]).ok() &&
                parse_melody(corpus.melodies[i + 1]).ok()) {
                gens.push_back(corpus.melodies[i]);
                refs.push_back(corpus.melodies[i + 1]);
            }
        }
        EvalOptions options;
        MetricsReport serial_out, parallel_out;
        const double s =
            best_ms([&] { serial_out = evaluate_set_serial(gens, refs, options); }, reps);
        const double p = best_ms([&] { parallel_out = evaluate_set(gens, refs, options); },
                                 reps);
        print_row("warping distance", gens.size(), s, p, serial_out == parallel_out);
    }

    return 0;
}
