#include "melalign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "melalign/parallel.hpp"

namespace melalign {

Histogram pitch_histogram(const std::vector<Melody>& melodies) {
    Histogram h;
    h.labels.reserve(128);
    for (int midi = 0; midi < 128; ++midi) {
        h.labels.push_back(std::to_string(midi));
    }
    h.counts.assign(128, 0.0);
    for (const Melody& m : melodies) {
        for (const Note& n : m.notes) {
            h.counts[static_cast<std::size_t>(n.pitch)] += 1.0;
        }
    }
    return h;
}

Histogram duration_histogram(const std::vector<Melody>& melodies, const VocabConfig& vocab) {
    vocab.validate();
    Vocabulary v(vocab);
    Histogram h;
    for (int b = 0; b < v.num_duration_buckets(); ++b) {
        h.labels.push_back(v.duration_bucket_label(b));
    }
    h.counts.assign(static_cast<std::size_t>(v.num_duration_buckets()), 0.0);
    for (const Melody& m : melodies) {
        for (const Note& n : m.notes) {
            h.counts[static_cast<std::size_t>(v.bucket_of_duration(n.duration_ms))] += 1.0;
        }
    }
    return h;
}

double cosine_similarity(const Histogram& a, const Histogram& b) {
    if (a.labels != b.labels) {
        throw BinMismatchError("histograms use different bins");
    }
    double dot = 0.0;
    double norm_a = 0.0;
    double norm_b = 0.0;
    for (std::size_t i = 0; i < a.counts.size(); ++i) {
        dot += a.counts[i] * b.counts[i];
        norm_a += a.counts[i] * a.counts[i];
        norm_b += b.counts[i] * b.counts[i];
    }
    if (norm_a <= 0.0 || norm_b <= 0.0) {
        throw ZeroNormHistogramError("cosine similarity of a zero histogram is undefined");
    }
    const double value = dot / std::sqrt(norm_a * norm_b);
    return std::clamp(value, 0.0, 1.0);
}

std::vector<int> pitch_contour(const Melody& melody) {
    std::vector<int> contour;
    contour.reserve(melody.notes.size());
    for (const Note& n : melody.notes) {
        contour.push_back(n.pitch);
    }
    return contour;
}

MelodyDistance melody_distance_full(const std::vector<int>& gen, const std::vector<int>& ref) {
    if (gen.empty() || ref.empty()) {
        throw EmptySequenceError("melody distance needs non-empty pitch sequences");
    }
    const std::size_t n = gen.size();
    const std::size_t m = ref.size();
    struct Cell {
        std::int64_t cost;
        std::int64_t len;
        bool operator<(const Cell& o) const {
            return cost != o.cost ? cost < o.cost : len < o.len;
        }
    };
    std::vector<Cell> prev(m), cur(m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const std::int64_t local = std::llabs(static_cast<long long>(gen[i]) - ref[j]);
            Cell best;
            if (i == 0 && j == 0) {
                best = Cell{0, 0};
            } else {
                best = Cell{std::numeric_limits<std::int64_t>::max(), 0};
                if (i > 0 && j > 0) best = std::min(best, prev[j - 1]);
                if (i > 0) best = std::min(best, prev[j]);
                if (j > 0) best = std::min(best, cur[j - 1]);
            }
            cur[j] = Cell{best.cost + local, best.len + 1};
        }
        std::swap(prev, cur);
    }
    const Cell& final = prev[m - 1];
    return MelodyDistance{final.cost, final.len,
                          static_cast<double>(final.cost) / static_cast<double>(final.len)};
}

double melody_distance(const std::vector<int>& gen, const std::vector<int>& ref) {
    return melody_distance_full(gen, ref).normalized;
}

namespace {

MetricsReport evaluate_set_impl(const std::vector<std::string>& gens,
                                const std::vector<std::string>& refs,
                                const EvalOptions& options, bool parallel) {
    if (gens.size() != refs.size()) {
        throw LengthMismatchError("generated and reference sets differ in size (" +
                                  std::to_string(gens.size()) + " vs " +
                                  std::to_string(refs.size()) + ")");
    }
    std::vector<Melody> gen_melodies;
    std::vector<Melody> ref_melodies;
    MetricsReport report;
    for (std::size_t i = 0; i < gens.size(); ++i) {
        const ParseResult ref = parse_melody(refs[i]);
        if (!ref.ok()) {
            throw Error("reference melody " + std::to_string(i) +
                        " does not parse: " + ref.error.message);
        }
        const ParseResult gen = parse_melody(gens[i]);
        if (!gen.ok()) {
            ++report.n_skipped;
            continue;
        }
        gen_melodies.push_back(*gen.melody);
        ref_melodies.push_back(*ref.melody);
        ++report.n_evaluated;
    }
    if (report.n_evaluated == 0) {
        return report;
    }

    if (options.per_pair) {
        double pd_sum = 0.0;
        double dd_sum = 0.0;
        for (std::size_t i = 0; i < gen_melodies.size(); ++i) {
            const std::vector<Melody> g{gen_melodies[i]};
            const std::vector<Melody> r{ref_melodies[i]};
            pd_sum += cosine_similarity(pitch_histogram(g), pitch_histogram(r));
            dd_sum += cosine_similarity(duration_histogram(g, options.vocab),
                                        duration_histogram(r, options.vocab));
        }
        report.pd = pd_sum / static_cast<double>(gen_melodies.size());
        report.dd = dd_sum / static_cast<double>(gen_melodies.size());
    } else {
        report.pd = cosine_similarity(pitch_histogram(gen_melodies),
                                      pitch_histogram(ref_melodies));
        report.dd = cosine_similarity(duration_histogram(gen_melodies, options.vocab),
                                      duration_histogram(ref_melodies, options.vocab));
    }

    std::vector<MelodyDistance> distances(gen_melodies.size());
    auto fill = [&](std::int64_t i) {
        const auto idx = static_cast<std::size_t>(i);
        distances[idx] = melody_distance_full(pitch_contour(gen_melodies[idx]),
                                              pitch_contour(ref_melodies[idx]));
    };
    if (parallel) {
        par::parallel_for(static_cast<std::int64_t>(gen_melodies.size()), fill);
    } else {
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(gen_melodies.size()); ++i) {
            fill(i);
        }
    }
    double md_sum = 0.0;
    double raw_sum = 0.0;
    for (const MelodyDistance& d : distances) {
        md_sum += d.normalized;
        raw_sum += static_cast<double>(d.cost);
    }
    report.md = md_sum / static_cast<double>(distances.size());
    report.md_raw = raw_sum / static_cast<double>(distances.size());
    return report;
}

}  // namespace

MetricsReport evaluate_set(const std::vector<std::string>& gens,
                           const std::vector<std::string>& refs, const EvalOptions& options) {
    return evaluate_set_impl(gens, refs, options, true);
}

MetricsReport evaluate_set_serial(const std::vector<std::string>& gens,
                                  const std::vector<std::string>& refs,
                                  const EvalOptions& options) {
    return evaluate_set_impl(gens, refs, options, false);
}

std::size_t ViolationReport::total_violations() const {
    std::size_t sum = 0;
    for (std::size_t c : counts) {
        sum += c;
    }
    return sum;
}

ViolationReport violation_report(const std::vector<std::string>& texts,
                                 const std::vector<LyricLine>& lyrics, const RuleConfig& cfg) {
    if (texts.size() != lyrics.size()) {
        throw LengthMismatchError("texts and lyrics differ in size (" +
                                  std::to_string(texts.size()) + " vs " +
                                  std::to_string(lyrics.size()) + ")");
    }
    const std::vector<RuleReport> reports = evaluate_many(texts, lyrics, cfg);
    ViolationReport out;
    out.total = texts.size();
    for (const RuleReport& r : reports) {
        for (Rule rule : kAllRules) {
            if (r.failed(rule)) {
                ++out.counts[static_cast<std::size_t>(rule)];
            }
        }
    }
    return out;
}

}  // namespace melalign
