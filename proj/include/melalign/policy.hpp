#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "melalign/vocab.hpp"

namespace melalign {

class TokenOutOfVocabError : public Error {
public:
    using Error::Error;
};

class EmptyCorpusError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

// Dense row-major matrix sized like the policy's logit table.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
    void add_scaled(const Matrix& other, double scale);
    double frobenius_norm() const;

    bool operator==(const Matrix&) const = default;
};

// Tabular autoregressive bigram model over the melody-event vocabulary:
// theta(prev, next) are next-token logits given the previous token. Exact
// log-probabilities and analytic gradients make the alignment losses cheap
// and testable; the losses themselves only ever consume these two surfaces.
class Policy {
public:
    explicit Policy(Vocabulary vocab)
        : vocab_(std::move(vocab)), theta_(vocab_.size(), vocab_.size()) {}

    const Vocabulary& vocab() const { return vocab_; }
    int vocab_size() const { return vocab_.size(); }

    Matrix& theta() { return theta_; }
    const Matrix& theta() const { return theta_; }

    // log softmax of one logit row, numerically stable.
    void row_log_softmax(int row, std::vector<double>& out) const;
    // softmax of one logit row at the given temperature (> 0).
    void row_softmax(int row, double temperature, std::vector<double>& out) const;

    bool operator==(const Policy& other) const {
        return vocab_ == other.vocab_ && theta_ == other.theta_;
    }

private:
    Vocabulary vocab_;
    Matrix theta_;
};

// Sum of log transition probabilities along y; y must start with the prompt's
// begin token. A missing end token (truncated sample) is accepted. Always
// <= 0. Throws TokenOutOfVocabError for ids outside the vocabulary.
double log_prob(const Policy& policy, const PromptEncoding& x, const std::vector<int>& y);

// As log_prob but without prompt validation; used for corpus sequences whose
// conditioning is already baked into y[0].
double sequence_log_prob(const Policy& policy, const std::vector<int>& y);

// d log pi(y|x) / d theta: for each observed transition a->b, +1 at (a, b)
// and -softmax(theta[a]) across row a. Rows never visited stay zero.
Matrix grad_log_prob(const Policy& policy, const PromptEncoding& x, const std::vector<int>& y);

// Accumulates scale * grad_log_prob into acc without allocating.
void add_scaled_grad_log_prob(const Policy& policy, const std::vector<int>& y, double scale,
                              Matrix& acc);

struct SampleResult {
    std::vector<int> tokens;  // begin ... [end]
    bool truncated = false;   // true when max_len stopped generation before end

    bool operator==(const SampleResult&) const = default;
};

// Autoregressive temperature sampling, deterministic for a fixed seed.
// Generation stops at the end token or after max_len tokens past begin.
SampleResult sample(const Policy& policy, const PromptEncoding& x, double temperature,
                    int max_len, std::uint64_t seed);

// Mean per-sequence log probability over a token corpus.
double corpus_mean_log_prob(const Policy& policy, const std::vector<std::vector<int>>& corpus);

// Full-batch gradient ascent on the corpus log-likelihood (lr scales the mean
// gradient). Parallel over sequences; the serial variant is the test and
// benchmark reference and produces bit-identical results.
Policy train_mle(Policy policy, const std::vector<std::vector<int>>& corpus, int epochs,
                 double lr);
Policy train_mle_serial(Policy policy, const std::vector<std::vector<int>>& corpus, int epochs,
                        double lr);

// Mean grad_log_prob over a set of sequences (the MLE epoch kernel).
Matrix mean_corpus_grad(const Policy& policy, const std::vector<std::vector<int>>& corpus);
Matrix mean_corpus_grad_serial(const Policy& policy, const std::vector<std::vector<int>>& corpus);

// ---------------------------------------------------------------------------
// Checkpoints: versioned plain-text layout, diffable and byte-stable.
//
//   melalign-policy v1
//   # <provenance>            (optional comment lines)
//   begin_buckets B
//   pitch_window LO HI
//   duration_edges E0 E1 ...
//   theta V
//   <V rows of V logits, %.17g>
// ---------------------------------------------------------------------------

void save_policy(const Policy& policy, const std::string& path,
                 const std::string& provenance = "");
Policy load_policy(const std::string& path);

}  // namespace melalign
