#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "melalign/commands.hpp"
#include "melalign/parallel.hpp"

using namespace melalign;

int main(int argc, char** argv) {
    CLI::App app{"rule-aligned lyric-to-melody toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_path;
    int threads = 0;
    auto* opt_config = app.add_option("--config", config_path, "JSON config file");
    auto* opt_seed =
        app.add_option("--seed", seed, "seed override for generation and alignment");
    auto* opt_out = app.add_option("--out", out_path, "primary output path");
    app.add_option("--threads", threads, "worker thread count (0 = hardware default)");

    auto* sc = app.add_subcommand("synth-corpus", "write a synthetic melody/lyric corpus");
    sc->fallthrough();
    int sc_n = 200;
    double sc_rate = 0.3;
    sc->add_option("--n", sc_n, "number of corpus lines")->check(CLI::PositiveNumber);
    sc->add_option("--violation-rate", sc_rate, "fraction of violating lines")
        ->check(CLI::Range(0.0, 1.0));

    auto* tm = app.add_subcommand("train-mle", "fit the bigram policy to a corpus");
    tm->fallthrough();
    std::string tm_corpus;
    int tm_epochs = 0;
    double tm_lr = 0.0;
    tm->add_option("--corpus", tm_corpus, "corpus prefix (expects .melodies.txt/.lyrics.txt)");
    auto* tm_opt_epochs = tm->add_option("--epochs", tm_epochs, "ascent epochs");
    auto* tm_opt_lr = tm->add_option("--lr", tm_lr, "ascent step size");

    auto* gp = app.add_subcommand("gen-prefs", "sample candidates and build preference data");
    gp->fallthrough();
    std::string gp_checkpoint;
    std::string gp_prompts;
    int gp_k = 0;
    double gp_temperature = 0.0;
    int gp_max_len = 0;
    gp->add_option("--checkpoint", gp_checkpoint, "policy checkpoint");
    gp->add_option("--prompts", gp_prompts, "lyric prompt file");
    auto* gp_opt_k = gp->add_option("--k", gp_k, "candidates per prompt");
    auto* gp_opt_temp = gp->add_option("--temperature", gp_temperature, "sampling temperature");
    auto* gp_opt_maxlen = gp->add_option("--max-len", gp_max_len, "max tokens per sample");

    auto* al = app.add_subcommand("align", "sequential DPO then KTO on a preference dataset");
    al->fallthrough();
    std::string al_checkpoint;
    std::string al_dataset;
    std::string al_log;
    double al_beta = 0.0;
    double al_lr = 0.0;
    int al_dpo_epochs = 0;
    int al_kto_epochs = 0;
    int al_batch = 0;
    std::string al_optimizer;
    al->add_option("--checkpoint", al_checkpoint, "starting policy checkpoint");
    al->add_option("--dataset", al_dataset, "preference dataset (JSONL)");
    auto* al_opt_log = al->add_option("--log", al_log, "training log path");
    auto* al_opt_beta = al->add_option("--beta", al_beta, "log-ratio scaling factor");
    auto* al_opt_lr = al->add_option("--lr", al_lr, "optimizer step size");
    auto* al_opt_de = al->add_option("--dpo-epochs", al_dpo_epochs, "paired-phase epochs");
    auto* al_opt_ke = al->add_option("--kto-epochs", al_kto_epochs, "unpaired-phase epochs");
    auto* al_opt_batch = al->add_option("--batch-size", al_batch, "mini-batch size");
    auto* al_opt_optim = al->add_option("--optimizer", al_optimizer, "sgd or adam");

    auto* ge = app.add_subcommand("generate", "sample one melody per prompt");
    ge->fallthrough();
    std::string ge_checkpoint;
    std::string ge_prompts;
    double ge_temperature = 0.0;
    int ge_max_len = 0;
    ge->add_option("--checkpoint", ge_checkpoint, "policy checkpoint")->required();
    ge->add_option("--prompts", ge_prompts, "lyric prompt file")->required();
    auto* ge_opt_temp = ge->add_option("--temperature", ge_temperature, "sampling temperature");
    auto* ge_opt_maxlen = ge->add_option("--max-len", ge_max_len, "max tokens per sample");

    auto* ck = app.add_subcommand("check", "count rule violations in a melody file");
    ck->fallthrough();
    std::string ck_melodies;
    std::string ck_lyrics;
    ck->add_option("--melodies", ck_melodies, "melody file")->required();
    ck->add_option("--lyrics", ck_lyrics, "matching lyric file")->required();

    auto* ev = app.add_subcommand("eval", "distribution and distance metrics vs references");
    ev->fallthrough();
    std::string ev_gen;
    std::string ev_ref;
    bool ev_per_pair = false;
    ev->add_option("--gen", ev_gen, "generated melody file")->required();
    ev->add_option("--ref", ev_ref, "reference melody file")->required();
    ev->add_flag("--per-pair", ev_per_pair, "mean per-pair similarities instead of pooled");

    auto* rp = app.add_subcommand("report", "combined violation and metric report");
    rp->fallthrough();
    std::string rp_gen;
    std::string rp_ref;
    std::string rp_lyrics;
    std::string rp_csv;
    bool rp_per_pair = false;
    rp->add_option("--gen", rp_gen, "generated melody file")->required();
    rp->add_option("--ref", rp_ref, "reference melody file")->required();
    rp->add_option("--lyrics", rp_lyrics, "matching lyric file")->required();
    rp->add_option("--csv", rp_csv, "also write a rule,count,rate table");
    rp->add_flag("--per-pair", rp_per_pair, "mean per-pair similarities instead of pooled");

    CLI11_PARSE(app, argc, argv);

    try {
        AppConfig config;
        if (opt_config->count() > 0) {
            config = load_config(config_path);
        }
        if (opt_seed->count() > 0) {
            config.generation.seed = seed;
            config.align.seed = seed;
        }
        par::set_threads(threads);

        if (tm_opt_epochs->count() > 0) config.mle.epochs = tm_epochs;
        if (tm_opt_lr->count() > 0) config.mle.lr = tm_lr;
        if (gp_opt_k->count() > 0) config.generation.k = gp_k;
        if (gp_opt_temp->count() > 0) config.generation.temperature = gp_temperature;
        if (gp_opt_maxlen->count() > 0) config.generation.max_len = gp_max_len;
        if (ge_opt_temp->count() > 0) config.generation.temperature = ge_temperature;
        if (ge_opt_maxlen->count() > 0) config.generation.max_len = ge_max_len;
        if (al_opt_beta->count() > 0) config.align.beta = al_beta;
        if (al_opt_lr->count() > 0) config.align.lr = al_lr;
        if (al_opt_de->count() > 0) config.align.dpo_epochs = al_dpo_epochs;
        if (al_opt_ke->count() > 0) config.align.kto_epochs = al_kto_epochs;
        if (al_opt_batch->count() > 0) config.align.batch_size = al_batch;
        if (al_opt_optim->count() > 0) {
            const auto opt = optimizer_from_string(al_optimizer);
            if (!opt) throw ConfigError("unknown optimizer '" + al_optimizer + "'");
            config.align.optimizer = *opt;
        }
        config.validate();

        const bool has_out = opt_out->count() > 0;
        if (sc->parsed()) {
            SynthCorpusArgs args;
            args.n = sc_n;
            args.violation_rate = sc_rate;
            args.out_prefix = has_out ? out_path : config.paths.corpus;
            cmd_synth_corpus(config, args, std::cout);
        } else if (tm->parsed()) {
            TrainMleArgs args;
            args.corpus_prefix = tm_corpus.empty() ? config.paths.corpus : tm_corpus;
            args.out_checkpoint = has_out ? out_path : config.paths.checkpoint;
            cmd_train_mle(config, args, std::cout);
        } else if (gp->parsed()) {
            GenPrefsArgs args;
            args.checkpoint = gp_checkpoint.empty() ? config.paths.checkpoint : gp_checkpoint;
            args.prompts =
                gp_prompts.empty() ? config.paths.corpus + ".lyrics.txt" : gp_prompts;
            args.out_dataset = has_out ? out_path : config.paths.dataset;
            cmd_gen_prefs(config, args, std::cout);
        } else if (al->parsed()) {
            AlignArgs args;
            args.checkpoint = al_checkpoint.empty() ? config.paths.checkpoint : al_checkpoint;
            args.dataset = al_dataset.empty() ? config.paths.dataset : al_dataset;
            args.out_checkpoint = has_out ? out_path : config.paths.aligned_checkpoint;
            args.out_log = al_opt_log->count() > 0 ? al_log : config.paths.training_log;
            cmd_align(config, args, std::cout);
        } else if (ge->parsed()) {
            GenerateArgs args;
            args.checkpoint = ge_checkpoint;
            args.prompts = ge_prompts;
            args.out_melodies = has_out ? out_path : "out/generated.melodies.txt";
            cmd_generate(config, args, std::cout);
        } else if (ck->parsed()) {
            CheckArgs args;
            args.melodies = ck_melodies;
            args.lyrics = ck_lyrics;
            args.out_report = has_out ? out_path : "";
            cmd_check(config, args, std::cout);
        } else if (ev->parsed()) {
            EvalArgs args;
            args.generated = ev_gen;
            args.reference = ev_ref;
            args.per_pair = ev_per_pair;
            args.out_report = has_out ? out_path : "";
            cmd_eval(config, args, std::cout);
        } else if (rp->parsed()) {
            ReportArgs args;
            args.generated = rp_gen;
            args.reference = rp_ref;
            args.lyrics = rp_lyrics;
            args.per_pair = rp_per_pair;
            args.out_report = has_out ? out_path : config.paths.report;
            args.out_csv = rp_csv;
            cmd_report(config, args, std::cout);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
