#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "origami/ctc.hpp"
#include "origami/data.hpp"
#include "origami/model.hpp"

// Adam + exponential LR decay, the CTC training loop, and evaluation.

namespace origami {

struct TrainConfig {
    double lr_start = 0.01;
    double lr_end = 0.001;
    std::int64_t decay_steps = 20000;  // paper-scale value is 9e4
    int batch = 8;
    std::int64_t max_steps = 2000;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t eval_interval = 500;
    std::string checkpoint_path;  // best-CER checkpoint; empty = don't save
    std::string log_path;         // CSV log; empty = memory only
    double max_skip_frac = 0.01;  // abort when more samples are CTC-infeasible
    double grad_clip = 0.0;       // global-norm clip; 0 = off
    double target_cer = 0.0;      // stop once eval CER <= target; 0 = off

    void validate() const;
};

// lr_start * (lr_end/lr_start)^(min(step, decay)/decay); flat afterwards.
double lr_at(std::int64_t step, const TrainConfig& cfg);

template <class T>
class AdamState {
public:
    AdamState(std::vector<Tensor<T>> params, double beta1, double beta2, double eps);
    // One update from the parameters' current gradients (missing grad = zero).
    void step(double lr);
    std::int64_t t() const { return t_; }

private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    double b1_, b2_, eps_;
    std::int64_t t_ = 0;
};

extern template class AdamState<float>;
extern template class AdamState<double>;

// White-pads each sample onto an [B,1,h,w] canvas; throws ShapeError when a
// sample exceeds it.
Tensor<float> stack_batch(const std::vector<LabeledSample>& set,
                          const std::vector<std::int64_t>& indices, std::int64_t h,
                          std::int64_t w);

struct EvalResult {
    double corpus_cer = 0.0;  // sum of distances / sum of reference lengths
    double ncer = 0.0;        // mean per-sample CER
    std::vector<double> per_sample_cer;
    std::vector<std::string> predictions;
};

EvalResult evaluate(const Model<float>& model, const std::vector<LabeledSample>& set,
                    const Vocabulary& vocab, int batch = 8);
// One "id<TAB>prediction" line per sample, ids %06d by position.
void write_predictions(const std::vector<std::string>& predictions, const std::string& path);

struct TrainLogRow {
    std::int64_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double cer = 0.0;
    bool has_cer = false;
};

struct TrainResult {
    double best_cer = 1e300;  // until the first evaluation
    std::int64_t best_step = -1;
    double final_cer = 1e300;
    std::int64_t skipped_samples = 0;
    std::int64_t steps_run = 0;
    std::vector<TrainLogRow> log;
};

TrainResult train(Model<float>& model, const std::vector<LabeledSample>& train_set,
                  const std::vector<LabeledSample>& eval_set, const Vocabulary& vocab,
                  const TrainConfig& cfg);

}  // namespace origami
