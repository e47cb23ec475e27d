#include "melalign/policy.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "melalign/parallel.hpp"
#include "melalign/rng.hpp"

namespace melalign {

void Matrix::add_scaled(const Matrix& other, double scale) {
    if (rows != other.rows || cols != other.cols) {
        throw Error("matrix shape mismatch in add_scaled");
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] += scale * other.data[i];
    }
}

double Matrix::frobenius_norm() const {
    double sum = 0.0;
    for (double v : data) {
        sum += v * v;
    }
    return std::sqrt(sum);
}

void Policy::row_log_softmax(int row, std::vector<double>& out) const {
    const int v = vocab_size();
    out.resize(static_cast<std::size_t>(v));
    const double* logits = theta_.data.data() + static_cast<std::size_t>(row) * v;
    double max_logit = logits[0];
    for (int i = 1; i < v; ++i) {
        max_logit = std::max(max_logit, logits[i]);
    }
    double sum = 0.0;
    for (int i = 0; i < v; ++i) {
        sum += std::exp(logits[i] - max_logit);
    }
    const double lse = max_logit + std::log(sum);
    for (int i = 0; i < v; ++i) {
        out[static_cast<std::size_t>(i)] = logits[i] - lse;
    }
}

void Policy::row_softmax(int row, double temperature, std::vector<double>& out) const {
    if (!(temperature > 0.0)) {
        throw Error("temperature must be positive");
    }
    const int v = vocab_size();
    out.resize(static_cast<std::size_t>(v));
    const double* logits = theta_.data.data() + static_cast<std::size_t>(row) * v;
    double max_logit = logits[0];
    for (int i = 1; i < v; ++i) {
        max_logit = std::max(max_logit, logits[i]);
    }
    double sum = 0.0;
    for (int i = 0; i < v; ++i) {
        out[static_cast<std::size_t>(i)] = std::exp((logits[i] - max_logit) / temperature);
        sum += out[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < v; ++i) {
        out[static_cast<std::size_t>(i)] /= sum;
    }
}

namespace {

void require_tokens_in_vocab(const Policy& policy, const std::vector<int>& y) {
    for (int id : y) {
        if (id < 0 || id >= policy.vocab_size()) {
            throw TokenOutOfVocabError("token id " + std::to_string(id) +
                                       " outside vocabulary of size " +
                                       std::to_string(policy.vocab_size()));
        }
    }
}

}  // namespace

double sequence_log_prob(const Policy& policy, const std::vector<int>& y) {
    if (y.empty()) {
        throw Error("cannot score an empty token sequence");
    }
    require_tokens_in_vocab(policy, y);
    if (!policy.vocab().is_begin(y.front())) {
        throw Error("token sequence does not start with a begin token");
    }
    std::vector<double> logp;
    double total = 0.0;
    for (std::size_t t = 1; t < y.size(); ++t) {
        policy.row_log_softmax(y[t - 1], logp);
        total += logp[static_cast<std::size_t>(y[t])];
    }
    return total;
}

double log_prob(const Policy& policy, const PromptEncoding& x, const std::vector<int>& y) {
    if (y.empty()) {
        throw Error("cannot score an empty token sequence");
    }
    require_tokens_in_vocab(policy, y);
    if (y.front() != x.begin_token) {
        throw Error("sequence is not framed by the prompt's begin token");
    }
    return sequence_log_prob(policy, y);
}

void add_scaled_grad_log_prob(const Policy& policy, const std::vector<int>& y, double scale,
                              Matrix& acc) {
    const int v = policy.vocab_size();
    if (acc.rows != v || acc.cols != v) {
        throw Error("gradient accumulator shape mismatch");
    }
    require_tokens_in_vocab(policy, y);
    // Count transitions out of each row first so each visited row's softmax
    // is subtracted once per outgoing transition in a single pass.
    std::vector<int> row_visits(static_cast<std::size_t>(v), 0);
    for (std::size_t t = 1; t < y.size(); ++t) {
        acc.at(y[t - 1], y[t]) += scale;
        ++row_visits[static_cast<std::size_t>(y[t - 1])];
    }
    std::vector<double> probs;
    for (int row = 0; row < v; ++row) {
        const int visits = row_visits[static_cast<std::size_t>(row)];
        if (visits == 0) {
            continue;
        }
        policy.row_softmax(row, 1.0, probs);
        double* out = acc.data.data() + static_cast<std::size_t>(row) * v;
        for (int col = 0; col < v; ++col) {
            out[col] -= scale * visits * probs[static_cast<std::size_t>(col)];
        }
    }
}

Matrix grad_log_prob(const Policy& policy, const PromptEncoding& x, const std::vector<int>& y) {
    if (y.empty()) {
        throw Error("cannot differentiate an empty token sequence");
    }
    if (!y.empty() && y.front() != x.begin_token) {
        throw Error("sequence is not framed by the prompt's begin token");
    }
    Matrix grad(policy.vocab_size(), policy.vocab_size());
    add_scaled_grad_log_prob(policy, y, 1.0, grad);
    return grad;
}

SampleResult sample(const Policy& policy, const PromptEncoding& x, double temperature,
                    int max_len, std::uint64_t seed) {
    if (max_len < 1) {
        throw Error("max_len must be at least 1");
    }
    Rng rng(seed);
    SampleResult result;
    result.tokens.push_back(x.begin_token);
    std::vector<double> probs;
    const int end = policy.vocab().end_token();
    for (int step = 0; step < max_len; ++step) {
        policy.row_softmax(result.tokens.back(), temperature, probs);
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
        if (tok == end) {
            return result;
        }
    }
    result.truncated = true;
    return result;
}

double corpus_mean_log_prob(const Policy& policy, const std::vector<std::vector<int>>& corpus) {
    if (corpus.empty()) {
        throw EmptyCorpusError("corpus is empty");
    }
    double total = 0.0;
    for (const auto& y : corpus) {
        total += sequence_log_prob(policy, y);
    }
    return total / static_cast<double>(corpus.size());
}

namespace {

Matrix mean_corpus_grad_impl(const Policy& policy, const std::vector<std::vector<int>>& corpus,
                             bool parallel) {
    if (corpus.empty()) {
        throw EmptyCorpusError("corpus is empty");
    }
    const int v = policy.vocab_size();
    std::vector<Matrix> slots(corpus.size());
    auto fill = [&](std::int64_t i) {
        auto& slot = slots[static_cast<std::size_t>(i)];
        slot = Matrix(v, v);
        add_scaled_grad_log_prob(policy, corpus[static_cast<std::size_t>(i)], 1.0, slot);
    };
    if (parallel) {
        par::parallel_for(static_cast<std::int64_t>(corpus.size()), fill);
    } else {
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(corpus.size()); ++i) {
            fill(i);
        }
    }
    // Serial in-order reduction keeps the result independent of thread count.
    Matrix mean(v, v);
    for (const Matrix& slot : slots) {
        mean.add_scaled(slot, 1.0);
    }
    const double inv_n = 1.0 / static_cast<double>(corpus.size());
    for (double& val : mean.data) {
        val *= inv_n;
    }
    return mean;
}

Policy train_mle_impl(Policy policy, const std::vector<std::vector<int>>& corpus, int epochs,
                      double lr, bool parallel) {
    if (corpus.empty()) {
        throw EmptyCorpusError("cannot fit a policy to an empty corpus");
    }
    if (epochs < 0) {
        throw Error("epochs must be non-negative");
    }
    for (const auto& y : corpus) {
        if (y.empty() || !policy.vocab().is_begin(y.front())) {
            throw Error("corpus sequence is not framed by a begin token");
        }
    }
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const Matrix grad = mean_corpus_grad_impl(policy, corpus, parallel);
        policy.theta().add_scaled(grad, lr);
    }
    return policy;
}

}  // namespace

Matrix mean_corpus_grad(const Policy& policy, const std::vector<std::vector<int>>& corpus) {
    return mean_corpus_grad_impl(policy, corpus, true);
}

Matrix mean_corpus_grad_serial(const Policy& policy, const std::vector<std::vector<int>>& corpus) {
    return mean_corpus_grad_impl(policy, corpus, false);
}

Policy train_mle(Policy policy, const std::vector<std::vector<int>>& corpus, int epochs,
                 double lr) {
    return train_mle_impl(std::move(policy), corpus, epochs, lr, true);
}

Policy train_mle_serial(Policy policy, const std::vector<std::vector<int>>& corpus, int epochs,
                        double lr) {
    return train_mle_impl(std::move(policy), corpus, epochs, lr, false);
}

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void save_policy(const Policy& policy, const std::string& path, const std::string& provenance) {
    std::ostringstream out;
    out << "melalign-policy v1\n";
    if (!provenance.empty()) {
        out << "# " << provenance << "\n";
    }
    const VocabConfig& cfg = policy.vocab().config();
    out << "begin_buckets " << cfg.begin_buckets << "\n";
    out << "pitch_window " << cfg.pitch_min << " " << cfg.pitch_max << "\n";
    out << "duration_edges";
    for (std::int64_t edge : cfg.duration_edges_ms) {
        out << " " << edge;
    }
    out << "\n";
    const int v = policy.vocab_size();
    out << "theta " << v << "\n";
    for (int row = 0; row < v; ++row) {
        for (int col = 0; col < v; ++col) {
            if (col > 0) {
                out << " ";
            }
            out << format_double(policy.theta().at(row, col));
        }
        out << "\n";
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open checkpoint for writing: " + path);
    }
    file << out.str();
    if (!file) {
        throw IoError("failed to write checkpoint: " + path);
    }
}

namespace {

std::vector<std::string> checkpoint_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::istringstream in(line);
    std::string field;
    while (in >> field) {
        fields.push_back(field);
    }
    return fields;
}

std::int64_t parse_checkpoint_int(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        const long long value = std::stoll(text, &used);
        if (used != text.size()) {
            throw std::invalid_argument(text);
        }
        return value;
    } catch (const std::exception&) {
        throw CheckpointError("malformed " + what + ": '" + text + "'");
    }
}

double parse_checkpoint_double(const std::string& text) {
    errno = 0;
    char* endp = nullptr;
    const double value = std::strtod(text.c_str(), &endp);
    if (endp != text.c_str() + text.size() || errno == ERANGE || !std::isfinite(value)) {
        throw CheckpointError("malformed logit value: '" + text + "'");
    }
    return value;
}

}  // namespace

Policy load_policy(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open checkpoint: " + path);
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(file, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        lines.push_back(line);
    }
    if (lines.empty() || lines[0] != "melalign-policy v1") {
        throw CheckpointError("unsupported checkpoint header in " + path);
    }
    std::size_t pos = 1;
    auto next_line = [&]() -> const std::string& {
        while (pos < lines.size() && (lines[pos].empty() || lines[pos][0] == '#')) {
            ++pos;
        }
        if (pos >= lines.size()) {
            throw CheckpointError("truncated checkpoint: " + path);
        }
        return lines[pos++];
    };

    VocabConfig cfg;
    auto bb = checkpoint_fields(next_line());
    if (bb.size() != 2 || bb[0] != "begin_buckets") {
        throw CheckpointError("expected begin_buckets line in " + path);
    }
    cfg.begin_buckets = static_cast<int>(parse_checkpoint_int(bb[1], "begin_buckets"));
    auto pw = checkpoint_fields(next_line());
    if (pw.size() != 3 || pw[0] != "pitch_window") {
        throw CheckpointError("expected pitch_window line in " + path);
    }
    cfg.pitch_min = static_cast<int>(parse_checkpoint_int(pw[1], "pitch_window"));
    cfg.pitch_max = static_cast<int>(parse_checkpoint_int(pw[2], "pitch_window"));
    auto de = checkpoint_fields(next_line());
    if (de.size() < 2 || de[0] != "duration_edges") {
        throw CheckpointError("expected duration_edges line in " + path);
    }
    cfg.duration_edges_ms.clear();
    for (std::size_t i = 1; i < de.size(); ++i) {
        cfg.duration_edges_ms.push_back(parse_checkpoint_int(de[i], "duration edge"));
    }
    Vocabulary vocab(cfg);

    auto th = checkpoint_fields(next_line());
    if (th.size() != 2 || th[0] != "theta") {
        throw CheckpointError("expected theta line in " + path);
    }
    const std::int64_t v = parse_checkpoint_int(th[1], "theta size");
    if (v != vocab.size()) {
        throw CheckpointError("theta size " + std::to_string(v) +
                              " does not match vocabulary size " + std::to_string(vocab.size()));
    }
    Policy policy(vocab);
    for (int row = 0; row < vocab.size(); ++row) {
        auto values = checkpoint_fields(next_line());
        if (static_cast<int>(values.size()) != vocab.size()) {
            throw CheckpointError("theta row " + std::to_string(row) + " has " +
                                  std::to_string(values.size()) + " values, expected " +
                                  std::to_string(vocab.size()));
        }
        for (int col = 0; col < vocab.size(); ++col) {
            policy.theta().at(row, col) = parse_checkpoint_double(values[static_cast<std::size_t>(col)]);
        }
    }
    return policy;
}

}  // namespace melalign
