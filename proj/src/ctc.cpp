#include "origami/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "origami/errors.hpp"

namespace origami {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp2(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double logsumexp3(double a, double b, double c) { return logsumexp2(logsumexp2(a, b), c); }

}  // namespace

Vocabulary Vocabulary::from_characters(const std::string& chars) {
    Vocabulary v;
    for (char c : chars) {
        if (v.contains(c))
            throw ConfigError(std::string("vocabulary: duplicate character '") + c + "'");
        v.chars_.push_back(c);
    }
    if (v.chars_.empty()) throw ConfigError("vocabulary: empty character set");
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("vocabulary: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "#blank=0")
        throw ConfigError("vocabulary: " + path + " must start with '#blank=0'");
    std::string chars;
    while (std::getline(in, line)) {
        if (line.size() != 1)
            throw ConfigError("vocabulary: " + path + " has a line with " +
                              std::to_string(line.size()) + " characters; want exactly 1");
        chars.push_back(line[0]);
    }
    return from_characters(chars);
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("vocabulary: cannot write " + path);
    out << "#blank=0\n";
    for (char c : chars_) out << c << '\n';
    if (!out) throw IoError("vocabulary: write failed for " + path);
}

bool Vocabulary::contains(char c) const { return chars_.find(c) != std::string::npos; }

char Vocabulary::char_at(int index) const {
    if (index < 1 || index >= size())
        throw ConfigError("vocabulary: index " + std::to_string(index) +
                          " outside [1, " + std::to_string(size()) + ")");
    return chars_[static_cast<std::size_t>(index - 1)];
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (char c : text) {
        const auto pos = chars_.find(c);
        if (pos == std::string::npos)
            throw ConfigError(std::string("vocabulary: character '") + c + "' not in vocabulary");
        ids.push_back(static_cast<int>(pos) + 1);
    }
    return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string text;
    text.reserve(ids.size());
    for (int id : ids) text.push_back(char_at(id));
    return text;
}

int adjacent_repeats(const LabelSequence& label) {
    int r = 0;
    for (std::size_t i = 1; i < label.size(); ++i)
        if (label[i] == label[i - 1]) ++r;
    return r;
}

bool ctc_feasible(std::int64_t frames, const LabelSequence& label) {
    return frames >= static_cast<std::int64_t>(label.size()) + adjacent_repeats(label);
}

namespace {

void validate_label(const LabelSequence& label, int C, int blank) {
    for (int id : label) {
        if (id == blank) throw ConfigError("ctc: label contains the blank index");
        if (id < 0 || id >= C)
            throw ConfigError("ctc: label id " + std::to_string(id) + " outside [0, " +
                              std::to_string(C) + ")");
    }
}

// Forward-backward over the blank-augmented label; both tables in log space.
// alpha includes the emission at t, beta excludes it, so alpha+beta is the
// log-probability of all paths passing through (t, s).
struct FwdBwd {
    std::vector<double> alpha, beta;  // [T, S]
    std::vector<int> ext;             // augmented label, size S
    double log_p = kNegInf;
};

FwdBwd ctc_forward_backward(const double* lp, std::int64_t T, std::int64_t C,
                            const LabelSequence& label, int blank, bool with_beta) {
    const std::int64_t S = 2 * static_cast<std::int64_t>(label.size()) + 1;
    FwdBwd fb;
    fb.ext.resize(static_cast<std::size_t>(S));
    for (std::int64_t s = 0; s < S; ++s)
        fb.ext[s] = (s % 2 == 0) ? blank : label[static_cast<std::size_t>(s / 2)];

    fb.alpha.assign(static_cast<std::size_t>(T * S), kNegInf);
    auto a = [&](std::int64_t t, std::int64_t s) -> double& {
        return fb.alpha[static_cast<std::size_t>(t * S + s)];
    };
    a(0, 0) = lp[fb.ext[0]];
    if (S > 1) a(0, 1) = lp[fb.ext[1]];
    for (std::int64_t t = 1; t < T; ++t) {
        const double* row = lp + t * C;
        for (std::int64_t s = 0; s < S; ++s) {
            double acc = a(t - 1, s);
            if (s >= 1) acc = logsumexp2(acc, a(t - 1, s - 1));
            if (s >= 2 && fb.ext[s] != blank && fb.ext[s] != fb.ext[s - 2])
                acc = logsumexp2(acc, a(t - 1, s - 2));
            a(t, s) = acc == kNegInf ? kNegInf : acc + row[fb.ext[s]];
        }
    }
    fb.log_p = a(T - 1, S - 1);
    if (S > 1) fb.log_p = logsumexp2(fb.log_p, a(T - 1, S - 2));

    if (with_beta) {
        fb.beta.assign(static_cast<std::size_t>(T * S), kNegInf);
        auto b = [&](std::int64_t t, std::int64_t s) -> double& {
            return fb.beta[static_cast<std::size_t>(t * S + s)];
        };
        b(T - 1, S - 1) = 0.0;
        if (S > 1) b(T - 1, S - 2) = 0.0;
        for (std::int64_t t = T - 2; t >= 0; --t) {
            const double* next = lp + (t + 1) * C;
            for (std::int64_t s = 0; s < S; ++s) {
                double acc = b(t + 1, s) == kNegInf ? kNegInf : b(t + 1, s) + next[fb.ext[s]];
                if (s + 1 < S && b(t + 1, s + 1) != kNegInf)
                    acc = logsumexp2(acc, b(t + 1, s + 1) + next[fb.ext[s + 1]]);
                if (s + 2 < S && fb.ext[s + 2] != blank && fb.ext[s + 2] != fb.ext[s] &&
                    b(t + 1, s + 2) != kNegInf)
                    acc = logsumexp2(acc, b(t + 1, s + 2) + next[fb.ext[s + 2]]);
                b(t, s) = acc;
            }
        }
    }
    return fb;
}

}  // namespace

template <class T>
Tensor<T> ctc_loss(const Tensor<T>& logprobs, const LabelSequence& label, int blank) {
    if (logprobs.ndim() != 2)
        throw ShapeError("ctc: logprobs must be [T, C], got " + shape_str(logprobs.shape()));
    const std::int64_t Tn = logprobs.dim(0);
    const std::int64_t C = logprobs.dim(1);
    if (blank < 0 || blank >= C)
        throw ConfigError("ctc: blank index " + std::to_string(blank) + " outside [0, " +
                          std::to_string(C) + ")");
    validate_label(label, static_cast<int>(C), blank);
    for (T v : logprobs.data())
        if (std::isnan(static_cast<double>(v))) throw NumericError("ctc: NaN in logprobs");
    if (!ctc_feasible(Tn, label))
        throw InfeasibleError("ctc: label of length " + std::to_string(label.size()) + " with " +
                              std::to_string(adjacent_repeats(label)) +
                              " adjacent repeats cannot fit in " + std::to_string(Tn) +
                              " frames");

    // The recursion runs in double regardless of T for stability.
    std::vector<double> lp(static_cast<std::size_t>(Tn * C));
    for (std::int64_t i = 0; i < Tn * C; ++i) lp[i] = static_cast<double>(logprobs.data()[i]);

    auto fb = ctc_forward_backward(lp.data(), Tn, C, label, blank, false);
    const double loss = -fb.log_p;

    auto xi = logprobs.impl();
    auto lp_shared = std::make_shared<std::vector<double>>(std::move(lp));
    auto out = make_op_output<T>(
        "ctc_loss", Shape{}, {xi}, [xi, lp_shared, label, blank, Tn, C](TensorImpl<T>& o) {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            auto fb2 = ctc_forward_backward(lp_shared->data(), Tn, C, label, blank, true);
            const std::int64_t S = 2 * static_cast<std::int64_t>(label.size()) + 1;
            const double g0 = static_cast<double>(o.grad[0]);
            for (std::int64_t t = 0; t < Tn; ++t) {
                for (std::int64_t c = 0; c < C; ++c) {
                    double acc = kNegInf;
                    for (std::int64_t s = 0; s < S; ++s)
                        if (fb2.ext[static_cast<std::size_t>(s)] == c)
                            acc = logsumexp2(acc,
                                             fb2.alpha[static_cast<std::size_t>(t * S + s)] +
                                                 fb2.beta[static_cast<std::size_t>(t * S + s)]);
                    // dLoss/dlp = -p(paths through label state c at t)/p(all)
                    const double g = acc == kNegInf ? 0.0 : -std::exp(acc - fb2.log_p);
                    xi->grad[static_cast<std::size_t>(t * C + c)] += static_cast<T>(g0 * g);
                }
            }
        });
    out.impl()->data[0] = static_cast<T>(loss);
    return out;
}

double ctc_brute_force(const Tensor<double>& probs, const LabelSequence& label, int blank) {
    if (probs.ndim() != 2)
        throw ShapeError("ctc_brute_force: probs must be [T, C], got " + shape_str(probs.shape()));
    const std::int64_t T = probs.dim(0);
    const std::int64_t C = probs.dim(1);
    if (blank < 0 || blank >= C)
        throw ConfigError("ctc_brute_force: blank index outside [0, C)");
    validate_label(label, static_cast<int>(C), blank);
    double paths = 1;
    for (std::int64_t t = 0; t < T; ++t) {
        paths *= static_cast<double>(C);
        if (paths > 1e7)
            throw ConfigError("ctc_brute_force: C^T exceeds 1e7 guard");
    }

    std::vector<int> path(static_cast<std::size_t>(T), 0);
    std::vector<int> collapsed;
    double total = 0.0;
    while (true) {
        // collapse: merge adjacent repeats, then drop blanks
        collapsed.clear();
        int prev = -1;
        for (int c : path) {
            if (c != prev && c != blank) collapsed.push_back(c);
            prev = c;
        }
        if (static_cast<std::size_t>(collapsed.size()) == label.size() &&
            std::equal(collapsed.begin(), collapsed.end(), label.begin())) {
            double p = 1.0;
            for (std::int64_t t = 0; t < T; ++t)
                p *= probs.at({t, static_cast<std::int64_t>(path[static_cast<std::size_t>(t)])});
            total += p;
        }
        // odometer increment
        std::int64_t pos = T - 1;
        while (pos >= 0 && ++path[static_cast<std::size_t>(pos)] == C) {
            path[static_cast<std::size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    if (total <= 0.0) return std::numeric_limits<double>::infinity();
    return -std::log(total);
}

template <class T>
Decoded greedy_decode(const Tensor<T>& logits) {
    if (logits.ndim() != 2)
        throw ShapeError("greedy_decode: logits must be [T, C], got " + shape_str(logits.shape()));
    const std::int64_t Tn = logits.dim(0);
    const std::int64_t C = logits.dim(1);
    Decoded d;
    int prev = -1;
    for (std::int64_t t = 0; t < Tn; ++t) {
        const T* row = logits.data().data() + t * C;
        int best = 0;
        for (std::int64_t c = 1; c < C; ++c)
            if (row[c] > row[best]) best = static_cast<int>(c);
        if (best != prev && best != 0) {
            d.labels.push_back(best);
            d.run_starts.push_back(t);
        }
        prev = best;
    }
    return d;
}

std::int64_t levenshtein(const std::string& a, const std::string& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::int64_t> row(m + 1);
    for (std::size_t j = 0; j <= m; ++j) row[j] = static_cast<std::int64_t>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        std::int64_t diag = row[0];
        row[0] = static_cast<std::int64_t>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const std::int64_t ins = row[j - 1] + 1;
            const std::int64_t del = row[j] + 1;
            const std::int64_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
            diag = row[j];
            row[j] = std::min({ins, del, sub});
        }
    }
    return row[m];
}

double cer(const std::string& prediction, const std::string& reference, bool* empty_reference) {
    const std::int64_t dist = levenshtein(prediction, reference);
    if (empty_reference) *empty_reference = reference.empty();
    const std::int64_t denom = std::max<std::int64_t>(1, static_cast<std::int64_t>(reference.size()));
    return static_cast<double>(dist) / static_cast<double>(denom);
}

template Tensor<float> ctc_loss<float>(const Tensor<float>&, const LabelSequence&, int);
template Tensor<double> ctc_loss<double>(const Tensor<double>&, const LabelSequence&, int);
template Decoded greedy_decode<float>(const Tensor<float>&);
template Decoded greedy_decode<double>(const Tensor<double>&);

}  // namespace origami
