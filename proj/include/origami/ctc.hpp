#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "origami/tensor.hpp"

// CTC loss, decoding, and error metrics.  Class index 0 is the blank
// throughout; real characters occupy [1, C-1].

namespace origami {

class Vocabulary {
public:
    // Characters in index order, blank excluded (it is implicit at 0).
    static Vocabulary from_characters(const std::string& chars);
    // Text format: first line "#blank=0", then one character per line.
    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    int size() const { return static_cast<int>(chars_.size()) + 1; }  // includes blank
    int blank() const { return 0; }
    bool contains(char c) const;
    char char_at(int index) const;                      // index in [1, size)
    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;

private:
    std::string chars_;
};

// Class ids of a transcript; no blanks, each id >= 1.
using LabelSequence = std::vector<int>;

// Number of adjacent equal pairs; each needs a separating blank frame.
int adjacent_repeats(const LabelSequence& label);

// CTC feasibility: frames >= |label| + adjacent repeats.
bool ctc_feasible(std::int64_t frames, const LabelSequence& label);

// Negative log likelihood of all frame paths collapsing to `label`, via the
// forward-backward recursion over the blank-augmented label, entirely in log
// space.  Differentiable w.r.t. logprobs [T, C].  Throws InfeasibleError when
// the label cannot fit in T frames and NumericError on NaN inputs.
template <class T>
Tensor<T> ctc_loss(const Tensor<T>& logprobs, const LabelSequence& label, int blank = 0);

// Exact enumeration oracle over all C^T paths of a [T, C] probability table.
// Returns -log of the summed path probability; +infinity when no path
// collapses to the label.  Guarded to C^T <= 1e7.
double ctc_brute_force(const Tensor<double>& probs, const LabelSequence& label, int blank = 0);

struct Decoded {
    LabelSequence labels;
    std::vector<std::int64_t> run_starts;  // first frame of each emitted run
};

// Best-path decode of [T, C] scores: per-frame argmax (ties -> lowest id),
// collapse adjacent repeats, drop blanks.
template <class T>
Decoded greedy_decode(const Tensor<T>& logits);

// Unit-cost edit distance.
std::int64_t levenshtein(const std::string& a, const std::string& b);

// distance / len(reference).  An empty reference divides by 1 instead and
// reports it through `empty_reference` when provided.
double cer(const std::string& prediction, const std::string& reference,
           bool* empty_reference = nullptr);

extern template Tensor<float> ctc_loss<float>(const Tensor<float>&, const LabelSequence&, int);
extern template Tensor<double> ctc_loss<double>(const Tensor<double>&, const LabelSequence&, int);

}  // namespace origami
