#include "melalign/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "melalign/digest.hpp"

namespace melalign {

using nlohmann::json;

void GenerationConfig::validate() const {
    if (k < 2) throw ConfigError("generation.k must be at least 2");
    if (!(temperature > 0.0)) throw ConfigError("generation.temperature must be positive");
    if (max_len < 1) throw ConfigError("generation.max_len must be at least 1");
}

void MleConfig::validate() const {
    if (epochs < 0) throw ConfigError("mle.epochs must be non-negative");
    if (!(lr > 0.0)) throw ConfigError("mle.lr must be positive");
}

void AppConfig::validate() const {
    try {
        rules.validate();
        align.validate();
        vocab.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    mle.validate();
    generation.validate();
}

namespace {

void reject_unknown_keys(const json& section, const std::string& name,
                         std::initializer_list<const char*> known) {
    for (const auto& [key, value] : section.items()) {
        bool ok = false;
        for (const char* k : known) {
            if (key == k) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ConfigError("unknown key '" + key + "' in section '" + name + "'");
        }
    }
}

template <typename T>
void read_field(const json& section, const char* key, T& out) {
    if (!section.contains(key)) {
        return;
    }
    try {
        out = section.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("invalid value for '") + key + "'");
    }
}

void parse_rules(const json& j, RuleConfig& out) {
    reject_unknown_keys(j, "rules",
                        {"tau_note", "d_min_ms", "d_max_ms", "d_final_min_ms", "d_final_max_ms",
                         "p_min", "p_max"});
    read_field(j, "tau_note", out.tau_note);
    read_field(j, "d_min_ms", out.d_min_ms);
    read_field(j, "d_max_ms", out.d_max_ms);
    read_field(j, "d_final_min_ms", out.d_final_min_ms);
    read_field(j, "d_final_max_ms", out.d_final_max_ms);
    read_field(j, "p_min", out.p_min);
    read_field(j, "p_max", out.p_max);
}

void parse_align(const json& j, AlignConfig& out) {
    reject_unknown_keys(j, "align",
                        {"beta", "dpo_beta", "kto_beta", "lr", "dpo_epochs", "kto_epochs",
                         "batch_size", "optimizer", "adam_beta1", "adam_beta2", "adam_eps",
                         "seed"});
    read_field(j, "beta", out.beta);
    if (j.contains("dpo_beta") && !j.at("dpo_beta").is_null()) {
        double v = 0.0;
        read_field(j, "dpo_beta", v);
        out.dpo_beta = v;
    }
    if (j.contains("kto_beta") && !j.at("kto_beta").is_null()) {
        double v = 0.0;
        read_field(j, "kto_beta", v);
        out.kto_beta = v;
    }
    read_field(j, "lr", out.lr);
    read_field(j, "dpo_epochs", out.dpo_epochs);
    read_field(j, "kto_epochs", out.kto_epochs);
    read_field(j, "batch_size", out.batch_size);
    if (j.contains("optimizer")) {
        std::string name;
        read_field(j, "optimizer", name);
        const auto opt = optimizer_from_string(name);
        if (!opt) {
            throw ConfigError("unknown optimizer '" + name + "'");
        }
        out.optimizer = *opt;
    }
    read_field(j, "adam_beta1", out.adam_beta1);
    read_field(j, "adam_beta2", out.adam_beta2);
    read_field(j, "adam_eps", out.adam_eps);
    read_field(j, "seed", out.seed);
}

void parse_mle(const json& j, MleConfig& out) {
    reject_unknown_keys(j, "mle", {"epochs", "lr"});
    read_field(j, "epochs", out.epochs);
    read_field(j, "lr", out.lr);
}

void parse_generation(const json& j, GenerationConfig& out) {
    reject_unknown_keys(j, "generation", {"k", "temperature", "max_len", "seed", "language"});
    read_field(j, "k", out.k);
    read_field(j, "temperature", out.temperature);
    read_field(j, "max_len", out.max_len);
    read_field(j, "seed", out.seed);
    if (j.contains("language")) {
        std::string name;
        read_field(j, "language", name);
        const auto lang = language_from_string(name);
        if (!lang) {
            throw ConfigError("unknown language '" + name + "'");
        }
        out.language = *lang;
    }
}

void parse_vocab(const json& j, VocabConfig& out) {
    reject_unknown_keys(j, "vocab",
                        {"begin_buckets", "pitch_min", "pitch_max", "duration_edges_ms"});
    read_field(j, "begin_buckets", out.begin_buckets);
    read_field(j, "pitch_min", out.pitch_min);
    read_field(j, "pitch_max", out.pitch_max);
    read_field(j, "duration_edges_ms", out.duration_edges_ms);
}

void parse_paths(const json& j, PathsConfig& out) {
    reject_unknown_keys(j, "paths",
                        {"corpus", "dataset", "checkpoint", "aligned_checkpoint", "report",
                         "training_log"});
    read_field(j, "corpus", out.corpus);
    read_field(j, "dataset", out.dataset);
    read_field(j, "checkpoint", out.checkpoint);
    read_field(j, "aligned_checkpoint", out.aligned_checkpoint);
    read_field(j, "report", out.report);
    read_field(j, "training_log", out.training_log);
}

}  // namespace

AppConfig parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) {
        throw ConfigError("config root must be a JSON object");
    }
    reject_unknown_keys(root, "(root)",
                        {"rules", "align", "mle", "generation", "vocab", "paths"});
    AppConfig config;
    if (root.contains("rules")) parse_rules(root.at("rules"), config.rules);
    if (root.contains("align")) parse_align(root.at("align"), config.align);
    if (root.contains("mle")) parse_mle(root.at("mle"), config.mle);
    if (root.contains("generation")) parse_generation(root.at("generation"), config.generation);
    if (root.contains("vocab")) parse_vocab(root.at("vocab"), config.vocab);
    if (root.contains("paths")) parse_paths(root.at("paths"), config.paths);
    config.validate();
    return config;
}

AppConfig load_config(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open config file: " + path);
    }
    std::ostringstream buffer;
    buffer << file.rdbuf();
    return parse_config_text(buffer.str());
}

std::string config_to_json_text(const AppConfig& config) {
    json root;
    root["rules"] = {{"tau_note", config.rules.tau_note},
                     {"d_min_ms", config.rules.d_min_ms},
                     {"d_max_ms", config.rules.d_max_ms},
                     {"d_final_min_ms", config.rules.d_final_min_ms},
                     {"d_final_max_ms", config.rules.d_final_max_ms},
                     {"p_min", config.rules.p_min},
                     {"p_max", config.rules.p_max}};
    json align = {{"beta", config.align.beta},
                  {"lr", config.align.lr},
                  {"dpo_epochs", config.align.dpo_epochs},
                  {"kto_epochs", config.align.kto_epochs},
                  {"batch_size", config.align.batch_size},
                  {"optimizer", std::string(to_string(config.align.optimizer))},
                  {"adam_beta1", config.align.adam_beta1},
                  {"adam_beta2", config.align.adam_beta2},
                  {"adam_eps", config.align.adam_eps},
                  {"seed", config.align.seed}};
    if (config.align.dpo_beta) align["dpo_beta"] = *config.align.dpo_beta;
    if (config.align.kto_beta) align["kto_beta"] = *config.align.kto_beta;
    root["align"] = align;
    root["mle"] = {{"epochs", config.mle.epochs}, {"lr", config.mle.lr}};
    root["generation"] = {{"k", config.generation.k},
                          {"temperature", config.generation.temperature},
                          {"max_len", config.generation.max_len},
                          {"seed", config.generation.seed},
                          {"language", std::string(to_string(config.generation.language))}};
    root["vocab"] = {{"begin_buckets", config.vocab.begin_buckets},
                     {"pitch_min", config.vocab.pitch_min},
                     {"pitch_max", config.vocab.pitch_max},
                     {"duration_edges_ms", config.vocab.duration_edges_ms}};
    root["paths"] = {{"corpus", config.paths.corpus},
                     {"dataset", config.paths.dataset},
                     {"checkpoint", config.paths.checkpoint},
                     {"aligned_checkpoint", config.paths.aligned_checkpoint},
                     {"report", config.paths.report},
                     {"training_log", config.paths.training_log}};
    return root.dump(2) + "\n";
}

std::string config_digest(const AppConfig& config) {
    return fnv1a_hex(config_to_json_text(config));
}

}  // namespace melalign
