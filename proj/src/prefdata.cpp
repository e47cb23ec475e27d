#include "melalign/prefdata.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "melalign/digest.hpp"
#include "melalign/parallel.hpp"
#include "melalign/rng.hpp"

namespace melalign {

using nlohmann::json;

std::string rule_config_digest(const RuleConfig& config) {
    std::ostringstream canon;
    canon << "tau_note=" << config.tau_note << ";d=" << config.d_min_ms << ".."
          << config.d_max_ms << ";d_final=" << config.d_final_min_ms << ".."
          << config.d_final_max_ms << ";p=" << config.p_min << ".." << config.p_max;
    return fnv1a_hex(canon.str());
}

SampleResult sample_guided(const Policy& policy, const LyricLine& lyric, double temperature,
                           int max_len, std::uint64_t seed) {
    if (max_len < 1) {
        throw Error("max_len must be at least 1");
    }
    const PromptEncoding x = encode_prompt(lyric, policy.vocab());
    const int end = policy.vocab().end_token();
    const int advance = policy.vocab().advance_token();
    const std::size_t units = lyric.words.size();
    Rng rng(seed);
    SampleResult result;
    result.tokens.push_back(x.begin_token);
    std::vector<double> probs;
    std::size_t consumed = 0;
    for (int step = 0; step < max_len; ++step) {
        policy.row_softmax(result.tokens.back(), temperature, probs);
        if (consumed >= units) {
            // Finite logits keep every entry strictly positive, so the
            // remainder always renormalizes.
            const double rest = 1.0 - probs[static_cast<std::size_t>(advance)];
            probs[static_cast<std::size_t>(advance)] = 0.0;
            for (double& p : probs) {
                p /= rest;
            }
        }
        const double u = rng.next_double();
        // Inverse-CDF draw; the final bucket absorbs rounding slack.
        int tok = policy.vocab_size() - 1;
        double cum = 0.0;
        for (int i = 0; i < policy.vocab_size(); ++i) {
            cum += probs[static_cast<std::size_t>(i)];
            if (u < cum) {
                tok = i;
                break;
            }
        }
        result.tokens.push_back(tok);
        if (tok == advance) {
            ++consumed;
        }
        if (tok == end) {
            return result;
        }
    }
    result.truncated = true;
    return result;
}

std::vector<Candidate> generate_candidates(const Policy& policy, const LyricLine& lyric,
                                           std::size_t prompt_index, const GenOptions& options,
                                           const RuleConfig& rules) {
    if (options.k < 2) {
        throw Error("need at least 2 candidates per prompt to form a preference");
    }
    std::vector<Candidate> out;
    std::unordered_set<std::string> seen;
    for (int i = 0; i < options.k; ++i) {
        const std::uint64_t sub_seed =
            mix_seed(options.seed, static_cast<std::uint64_t>(prompt_index),
                     static_cast<std::uint64_t>(i));
        const SampleResult sampled =
            sample_guided(policy, lyric, options.temperature, options.max_len, sub_seed);
        Candidate c;
        c.tokens = sampled.tokens;
        c.truncated = sampled.truncated;
        c.sample_index = i;
        c.text = decode_tokens(c.tokens, policy.vocab(), lyric);
        if (!seen.insert(c.text).second) {
            continue;
        }
        c.log_prob = sequence_log_prob(policy, c.tokens);
        c.report = evaluate(c.text, lyric, rules);
        out.push_back(std::move(c));
    }
    return out;
}

namespace {

struct PromptYield {
    std::optional<PreferencePair> pair;
    std::vector<UnpairedSample> unpaired;
};

PromptYield select_from_candidates(const LyricLine& lyric, std::size_t prompt_index,
                                   const std::vector<Candidate>& candidates) {
    PromptYield yield;
    const Candidate* winner = nullptr;
    const Candidate* loser = nullptr;
    std::size_t loser_fail_count = 0;
    for (const Candidate& c : candidates) {
        if (c.report.compliant) {
            if (winner == nullptr || c.log_prob > winner->log_prob) {
                winner = &c;
            }
        } else {
            const std::size_t fails = c.report.failed_rules().size();
            if (loser == nullptr || fails > loser_fail_count ||
                (fails == loser_fail_count && c.log_prob < loser->log_prob)) {
                loser = &c;
                loser_fail_count = fails;
            }
        }
    }
    if (winner != nullptr && loser != nullptr) {
        PreferencePair pair;
        pair.prompt = lyric;
        pair.prompt_index = prompt_index;
        pair.winner_tokens = winner->tokens;
        pair.winner_text = winner->text;
        pair.winner_log_prob = winner->log_prob;
        pair.loser_tokens = loser->tokens;
        pair.loser_text = loser->text;
        pair.loser_log_prob = loser->log_prob;
        pair.loser_violations = loser->report.failed_rules();
        yield.pair = std::move(pair);
    } else if (winner == nullptr) {
        for (const Candidate& c : candidates) {
            UnpairedSample s;
            s.prompt = lyric;
            s.prompt_index = prompt_index;
            s.tokens = c.tokens;
            s.text = c.text;
            s.log_prob = c.log_prob;
            s.violations = c.report.failed_rules();
            yield.unpaired.push_back(std::move(s));
        }
    }
    return yield;
}

PreferenceDataset build_dataset_impl(const Policy& policy, const std::vector<LyricLine>& prompts,
                                     const GenOptions& options, const RuleConfig& rules,
                                     bool parallel) {
    rules.validate();
    if (prompts.empty()) {
        throw Error("prompt list is empty: nothing to generate preferences from");
    }
    std::vector<PromptYield> slots(prompts.size());
    auto fill = [&](std::int64_t i) {
        const auto idx = static_cast<std::size_t>(i);
        slots[idx] = select_from_candidates(
            prompts[idx], idx, generate_candidates(policy, prompts[idx], idx, options, rules));
    };
    if (parallel) {
        par::parallel_for(static_cast<std::int64_t>(prompts.size()), fill);
    } else {
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(prompts.size()); ++i) {
            fill(i);
        }
    }
    PreferenceDataset dataset;
    dataset.provenance = GenProvenance{options.k, options.temperature, options.max_len,
                                       options.seed, rule_config_digest(rules)};
    for (PromptYield& yield : slots) {
        if (yield.pair) {
            dataset.pairs.push_back(std::move(*yield.pair));
        }
        for (UnpairedSample& s : yield.unpaired) {
            dataset.unpaired.push_back(std::move(s));
        }
    }
    return dataset;
}

}  // namespace

PreferenceDataset build_dataset(const Policy& policy, const std::vector<LyricLine>& prompts,
                                const GenOptions& options, const RuleConfig& rules) {
    return build_dataset_impl(policy, prompts, options, rules, true);
}

PreferenceDataset build_dataset_serial(const Policy& policy,
                                       const std::vector<LyricLine>& prompts,
                                       const GenOptions& options, const RuleConfig& rules) {
    return build_dataset_impl(policy, prompts, options, rules, false);
}

namespace {

constexpr int kSchemaVersion = 1;

json prompt_to_json(const LyricLine& lyric, std::size_t prompt_index) {
    json j;
    j["units"] = lyric.words;
    j["language"] = std::string(to_string(lyric.language));
    j["index"] = prompt_index;
    return j;
}

json violations_to_json(const std::vector<Rule>& violations) {
    json arr = json::array();
    for (Rule r : violations) {
        arr.push_back(std::string(to_string(r)));
    }
    return arr;
}

LyricLine prompt_from_json(const json& j, std::size_t line_no, std::size_t& prompt_index) {
    if (!j.is_object() || !j.contains("units") || !j.contains("language") ||
        !j.contains("index")) {
        throw CorruptRecordError(line_no, "prompt object missing units/language/index");
    }
    LyricLine lyric;
    lyric.words = j.at("units").get<std::vector<std::string>>();
    const auto lang = language_from_string(j.at("language").get<std::string>());
    if (!lang) {
        throw CorruptRecordError(line_no, "unknown language '" +
                                              j.at("language").get<std::string>() + "'");
    }
    lyric.language = *lang;
    prompt_index = j.at("index").get<std::size_t>();
    return lyric;
}

std::vector<Rule> violations_from_json(const json& j, std::size_t line_no) {
    std::vector<Rule> out;
    for (const auto& name : j) {
        const auto rule = rule_from_string(name.get<std::string>());
        if (!rule) {
            throw CorruptRecordError(line_no, "unknown rule '" + name.get<std::string>() + "'");
        }
        out.push_back(*rule);
    }
    return out;
}

}  // namespace

void write_dataset(const PreferenceDataset& dataset, const std::string& path) {
    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open dataset for writing: " + path);
    }
    json header;
    header["kind"] = "header";
    header["schema_version"] = kSchemaVersion;
    header["provenance"] = {{"k", dataset.provenance.k},
                            {"temperature", dataset.provenance.temperature},
                            {"max_len", dataset.provenance.max_len},
                            {"seed", dataset.provenance.seed},
                            {"rules_digest", dataset.provenance.rules_digest}};
    file << header.dump() << "\n";
    for (const PreferencePair& pair : dataset.pairs) {
        json j;
        j["kind"] = "pair";
        j["prompt"] = prompt_to_json(pair.prompt, pair.prompt_index);
        j["winner"] = {{"tokens", pair.winner_tokens},
                       {"text", pair.winner_text},
                       {"log_prob", pair.winner_log_prob}};
        j["loser"] = {{"tokens", pair.loser_tokens},
                      {"text", pair.loser_text},
                      {"log_prob", pair.loser_log_prob},
                      {"violations", violations_to_json(pair.loser_violations)}};
        file << j.dump() << "\n";
    }
    for (const UnpairedSample& s : dataset.unpaired) {
        json j;
        j["kind"] = "undesirable";
        j["prompt"] = prompt_to_json(s.prompt, s.prompt_index);
        j["sample"] = {{"tokens", s.tokens},
                       {"text", s.text},
                       {"log_prob", s.log_prob},
                       {"violations", violations_to_json(s.violations)}};
        file << j.dump() << "\n";
    }
    if (!file) {
        throw IoError("failed to write dataset: " + path);
    }
}

PreferenceDataset read_dataset(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open dataset: " + path);
    }
    PreferenceDataset dataset;
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(file, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw CorruptRecordError(line_no, e.what());
        }
        try {
            const std::string kind = j.at("kind").get<std::string>();
            if (!saw_header) {
                if (kind != "header") {
                    throw CorruptRecordError(line_no, "first record must be the header");
                }
                const int version = j.at("schema_version").get<int>();
                if (version != kSchemaVersion) {
                    throw SchemaVersionMismatchError(
                        "dataset schema version " + std::to_string(version) +
                        " is not supported (expected " + std::to_string(kSchemaVersion) + ")");
                }
                const json& prov = j.at("provenance");
                dataset.provenance.k = prov.at("k").get<int>();
                dataset.provenance.temperature = prov.at("temperature").get<double>();
                dataset.provenance.max_len = prov.at("max_len").get<int>();
                dataset.provenance.seed = prov.at("seed").get<std::uint64_t>();
                dataset.provenance.rules_digest = prov.at("rules_digest").get<std::string>();
                saw_header = true;
                continue;
            }
            if (kind == "pair") {
                PreferencePair pair;
                pair.prompt = prompt_from_json(j.at("prompt"), line_no, pair.prompt_index);
                const json& w = j.at("winner");
                pair.winner_tokens = w.at("tokens").get<std::vector<int>>();
                pair.winner_text = w.at("text").get<std::string>();
                pair.winner_log_prob = w.at("log_prob").get<double>();
                const json& l = j.at("loser");
                pair.loser_tokens = l.at("tokens").get<std::vector<int>>();
                pair.loser_text = l.at("text").get<std::string>();
                pair.loser_log_prob = l.at("log_prob").get<double>();
                pair.loser_violations = violations_from_json(l.at("violations"), line_no);
                dataset.pairs.push_back(std::move(pair));
            } else if (kind == "undesirable") {
                UnpairedSample s;
                s.prompt = prompt_from_json(j.at("prompt"), line_no, s.prompt_index);
                const json& sj = j.at("sample");
                s.tokens = sj.at("tokens").get<std::vector<int>>();
                s.text = sj.at("text").get<std::string>();
                s.log_prob = sj.at("log_prob").get<double>();
                s.violations = violations_from_json(sj.at("violations"), line_no);
                dataset.unpaired.push_back(std::move(s));
            } else {
                throw CorruptRecordError(line_no, "unknown record kind '" + kind + "'");
            }
        } catch (const json::exception& e) {
            throw CorruptRecordError(line_no, e.what());
        }
    }
    if (!saw_header) {
        throw CorruptRecordError(0, "dataset has no header record");
    }
    return dataset;
}

}  // namespace melalign
