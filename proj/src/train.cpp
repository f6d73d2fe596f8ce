#include "origami/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "origami/errors.hpp"
#include "origami/kernels.hpp"
#include "origami/ops.hpp"

namespace origami {

void TrainConfig::validate() const {
    std::vector<std::string> bad;
    if (lr_start <= 0 || lr_end <= 0) bad.push_back("lr_start/lr_end must be > 0");
    if (lr_end > lr_start) bad.push_back("lr_end must not exceed lr_start");
    if (decay_steps < 1) bad.push_back("decay_steps must be >= 1");
    if (batch < 1) bad.push_back("batch must be >= 1");
    if (max_steps < 0) bad.push_back("max_steps must be >= 0");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
        bad.push_back("adam betas must lie in [0,1)");
    if (eps <= 0) bad.push_back("adam eps must be > 0");
    if (eval_interval < 1) bad.push_back("eval_interval must be >= 1");
    if (max_skip_frac < 0 || max_skip_frac > 1) bad.push_back("max_skip_frac must be in [0,1]");
    if (grad_clip < 0) bad.push_back("grad_clip must be >= 0");
    if (target_cer < 0) bad.push_back("target_cer must be >= 0");
    if (!bad.empty()) {
        std::string msg = "train config invalid:";
        for (const auto& b : bad) msg += "\n  - " + b;
        throw ConfigError(msg);
    }
}

double lr_at(std::int64_t step, const TrainConfig& cfg) {
    if (step < 0) throw ConfigError("lr_at: step must be >= 0");
    const double frac =
        static_cast<double>(std::min(step, cfg.decay_steps)) / static_cast<double>(cfg.decay_steps);
    return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, frac);
}

template <class T>
AdamState<T>::AdamState(std::vector<Tensor<T>> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), b1_(beta1), b2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
        v_.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
    }
}

template <class T>
void AdamState<T>::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const T lr_t = static_cast<T>(lr * std::sqrt(bc2) / bc1);
    const T eps_hat = static_cast<T>(eps_ * std::sqrt(bc2));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.has_grad()) continue;  // zero gradient and zero state: no motion
        kern::adam_update(p.data().data(), p.grad().data(), m_[i].data(), v_[i].data(),
                          p.numel(), lr_t, static_cast<T>(b1_), static_cast<T>(b2_), eps_hat);
    }
}

template class AdamState<float>;
template class AdamState<double>;

Tensor<float> stack_batch(const std::vector<LabeledSample>& set,
                          const std::vector<std::int64_t>& indices, std::int64_t h,
                          std::int64_t w) {
    const auto b = static_cast<std::int64_t>(indices.size());
    auto out = Tensor<float>::full({b, 1, h, w}, 1.0f);
    auto dst = out.data();
    for (std::int64_t i = 0; i < b; ++i) {
        const auto& img = set[static_cast<std::size_t>(indices[static_cast<std::size_t>(i)])].image;
        if (img.h > h || img.w > w)
            throw ShapeError("stack_batch: sample " + std::to_string(indices[static_cast<std::size_t>(i)]) + " is " +
                             std::to_string(img.h) + "x" + std::to_string(img.w) +
                             ", larger than the canvas " + std::to_string(h) + "x" +
                             std::to_string(w));
        for (std::int64_t r = 0; r < img.h; ++r)
            std::copy_n(img.pix.data() + r * img.w, img.w,
                        dst.data() + ((i * h) + r) * w);
    }
    return out;
}

namespace {

Tensor<float> forward_any(const Model<float>& model, const Tensor<float>& x) {
    return model.config().collapse == CollapseMode::blind ? model.forward_blind_collapse(x)
                                                          : model.forward(x);
}

}  // namespace

EvalResult evaluate(const Model<float>& model, const std::vector<LabeledSample>& set,
                    const Vocabulary& vocab, int batch) {
    if (set.empty()) throw ConfigError("evaluate: dataset is empty");
    if (batch < 1) throw ConfigError("evaluate: batch must be >= 1");
    NoGradGuard ng;
    const auto& cfg = model.config();
    EvalResult res;
    std::int64_t dist_sum = 0, len_sum = 0;
    double ncer_sum = 0;
    for (std::size_t start = 0; start < set.size(); start += static_cast<std::size_t>(batch)) {
        std::vector<std::int64_t> idx;
        for (std::size_t i = start; i < std::min(set.size(), start + static_cast<std::size_t>(batch)); ++i)
            idx.push_back(static_cast<std::int64_t>(i));
        auto out = forward_any(model, stack_batch(set, idx, cfg.input_h, cfg.input_w));
        for (std::size_t bi = 0; bi < idx.size(); ++bi) {
            auto decoded = greedy_decode(slice_axis0(out, static_cast<std::int64_t>(bi)));
            const std::string pred = vocab.decode(decoded.labels);
            const std::string& ref = set[static_cast<std::size_t>(idx[bi])].transcript;
            const std::int64_t d = levenshtein(pred, ref);
            dist_sum += d;
            len_sum += static_cast<std::int64_t>(ref.size());
            ncer_sum += cer(pred, ref);
            res.per_sample_cer.push_back(cer(pred, ref));
            res.predictions.push_back(pred);
        }
    }
    res.corpus_cer = static_cast<double>(dist_sum) / static_cast<double>(std::max<std::int64_t>(1, len_sum));
    res.ncer = ncer_sum / static_cast<double>(set.size());
    return res;
}

void write_predictions(const std::vector<std::string>& predictions, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "%06zu", i);
        out << id << "\t" << predictions[i] << "\n";
    }
    if (!out) throw IoError("write failed for " + path);
}

TrainResult train(Model<float>& model, const std::vector<LabeledSample>& train_set,
                  const std::vector<LabeledSample>& eval_set, const Vocabulary& vocab,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.empty()) throw ConfigError("train: training set is empty");
    const auto& mc = model.config();
    const std::int64_t frames = mc.collapse == CollapseMode::blind ? mc.encoder_w() : mc.l2;

    // encode transcripts and split off the CTC-infeasible ones up front
    std::vector<LabelSequence> labels(train_set.size());
    std::vector<std::int64_t> pool;
    TrainResult res;
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        labels[i] = vocab.encode(train_set[i].transcript);
        if (ctc_feasible(frames, labels[i]))
            pool.push_back(static_cast<std::int64_t>(i));
        else
            ++res.skipped_samples;
    }
    const double skip_frac =
        static_cast<double>(res.skipped_samples) / static_cast<double>(train_set.size());
    if (skip_frac > cfg.max_skip_frac)
        throw ConfigError("train: " + std::to_string(res.skipped_samples) + "/" +
                          std::to_string(train_set.size()) +
                          " samples are CTC-infeasible for " + std::to_string(frames) +
                          " frames, above max_skip_frac=" + std::to_string(cfg.max_skip_frac));
    if (mc.collapse == CollapseMode::origami && !pool.empty()) {
        std::int64_t longest = 0;
        for (std::int64_t i : pool)
            longest = std::max(longest,
                               static_cast<std::int64_t>(train_set[static_cast<std::size_t>(i)].transcript.size()));
        check_l2_covers(mc, longest);
    }

    std::ofstream csv;
    if (!cfg.log_path.empty()) {
        csv.open(cfg.log_path, std::ios::binary);
        if (!csv) throw IoError("cannot write " + cfg.log_path);
        csv << "step,loss,lr,cer\n";
    }

    AdamState<float> opt(model.parameters(), cfg.beta1, cfg.beta2, cfg.eps);
    auto params = model.parameters();
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::int64_t> order = pool;
    std::size_t cursor = order.size();  // force an initial shuffle

    auto run_eval = [&](std::int64_t step) {
        const auto ev = evaluate(model, eval_set, vocab, cfg.batch);
        if (ev.corpus_cer < res.best_cer) {
            res.best_cer = ev.corpus_cer;
            res.best_step = step;
            if (!cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.checkpoint_path);
        }
        res.final_cer = ev.corpus_cer;
        return ev.corpus_cer;
    };

    for (std::int64_t step = 0; step < cfg.max_steps && !pool.empty(); ++step) {
        std::vector<std::int64_t> idx(static_cast<std::size_t>(cfg.batch));
        for (auto& id : idx) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            id = order[cursor++];
        }

        model.zero_grad();
        Tensor<float> loss;
        double loss_val = 0;
        try {
            auto out = forward_any(model, stack_batch(train_set, idx, mc.input_h, mc.input_w));
            for (std::size_t bi = 0; bi < idx.size(); ++bi) {
                auto one = ctc_loss(slice_axis0(out, static_cast<std::int64_t>(bi)),
                                    labels[static_cast<std::size_t>(idx[bi])]);
                loss = loss.defined() ? add(loss, one) : one;
            }
            loss = mul(loss, 1.0f / static_cast<float>(cfg.batch));
            loss_val = static_cast<double>(loss.item());
            if (!std::isfinite(loss_val))
                throw NumericError("loss is not finite");
            loss.backward();
        } catch (const NumericError& e) {
            throw NumericError("train: " + std::string(e.what()) + " at step " +
                               std::to_string(step));
        }

        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            if (!params[pi].has_grad()) continue;
            for (float g : params[pi].grad())
                if (!std::isfinite(g))
                    throw NumericError("train: non-finite gradient at step " +
                                       std::to_string(step));
        }
        if (cfg.grad_clip > 0) {
            double sq = 0;
            for (auto& p : params)
                if (p.has_grad())
                    for (float g : p.grad()) sq += static_cast<double>(g) * g;
            const double norm = std::sqrt(sq);
            if (norm > cfg.grad_clip) {
                const float s = static_cast<float>(cfg.grad_clip / norm);
                for (auto& p : params)
                    if (p.has_grad()) {
                        auto g = p.grad();
                        kern::scale(g.data(), s, g.data(), p.numel());
                    }
            }
        }

        const double lr = lr_at(step, cfg);
        opt.step(lr);
        ++res.steps_run;

        TrainLogRow row{step, loss_val, lr, 0.0, false};
        const bool eval_now = ((step + 1) % cfg.eval_interval == 0) || step + 1 == cfg.max_steps;
        if (eval_now && !eval_set.empty()) {
            row.cer = run_eval(step);
            row.has_cer = true;
        }
        res.log.push_back(row);
        if (csv.is_open()) {
            char buf[128];
            if (row.has_cer)
                std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.6f\n",
                              static_cast<long long>(row.step), row.loss, row.lr, row.cer);
            else
                std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,\n",
                              static_cast<long long>(row.step), row.loss, row.lr);
            csv << buf;
            if (row.has_cer) csv.flush();
        }
        if (row.has_cer && cfg.target_cer > 0 && row.cer <= cfg.target_cer) break;
    }

    if (pool.empty() && !eval_set.empty()) run_eval(0);  // nothing trainable: still report
    return res;
}

}  // namespace origami
