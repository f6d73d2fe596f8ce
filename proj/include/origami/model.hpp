#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "origami/tensor.hpp"

// Encoder backbones plus the unfolding decoder, and the blind vertical
// collapse used as the ablation baseline.

namespace origami {

enum class BackboneKind { vgg_s, resnet_s, gated_s };
enum class CollapseMode { origami, blind };

BackboneKind backbone_from_string(const std::string& s);
std::string to_string(BackboneKind k);
CollapseMode collapse_from_string(const std::string& s);
std::string to_string(CollapseMode m);

struct ModelConfig {
    BackboneKind backbone = BackboneKind::vgg_s;
    CollapseMode collapse = CollapseMode::origami;
    int depth_mult = 1;
    std::int64_t input_h = 96;
    std::int64_t input_w = 96;
    std::int64_t l1 = 72;   // first unfold length
    std::int64_t l2 = 144;  // final frame count
    // 0 means "derive from input_w": w1 = floor(W/32), final_w = round(W/64)
    // with halves rounding up; both floored at 1.
    std::int64_t w1 = 0;
    std::int64_t final_w = 0;
    // conv1, conv2_x..conv6_x, conv7_x
    std::vector<std::int64_t> channels = {16, 16, 24, 32, 48, 48, 48};
    int num_classes = 2;
    bool use_ln = true;
    int conv1_kernel = 7;

    std::int64_t encoder_h() const;  // input_h / 8, flooring at each pool
    std::int64_t encoder_w() const;  // input_w / 16, flooring at each pool
    std::int64_t w1_effective() const;
    std::int64_t final_w_effective() const;

    // Throws ConfigError listing every violated bound.
    void validate() const;
};

// Frame budget check against a dataset's longest transcript.
void check_l2_covers(const ModelConfig& cfg, std::int64_t max_transcript_len);

template <class T>
class Model {
public:
    Model() = default;

    const ModelConfig& config() const { return cfg_; }
    std::int64_t parameter_count() const;
    std::vector<Tensor<T>> parameters();            // registry order
    const std::vector<std::pair<std::string, Tensor<T>>>& named_parameters() const {
        return params_;
    }
    Tensor<T>& param(const std::string& name);      // throws ConfigError when missing
    void zero_grad();

    // [N,1,H,W] -> [N, L2, C] log-probabilities (unfolding decoder).
    Tensor<T> forward(const Tensor<T>& image) const;
    // Same pipeline up to and including ln2, before the log softmax.
    Tensor<T> forward_logits(const Tensor<T>& image) const;
    // [N,1,H,W] -> [N, W/16, C] log-probabilities: encoder output averaged
    // over the vertical axis, projected to C.  Only on blind-built models.
    Tensor<T> forward_blind_collapse(const Tensor<T>& image) const;

    template <class U>
    friend Model<U> build_model(const ModelConfig&, std::uint64_t);

private:
    Tensor<T> encode(const Tensor<T>& image) const;
    Tensor<T> run_stage(Tensor<T> x, int stage) const;
    Tensor<T> logits_from(const Tensor<T>& image) const;
    const Tensor<T>& cparam(const std::string& name) const;

    ModelConfig cfg_;
    std::vector<std::pair<std::string, Tensor<T>>> params_;
};

// He-uniform conv kernels, zero biases; deterministic in `seed`.
template <class T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed = 1);

struct ShapeTraceEntry {
    std::string stage;
    std::int64_t h;
    std::int64_t w;
};

// Spatial sizes after each named stage, computed from the config alone.
std::vector<ShapeTraceEntry> shape_trace(const ModelConfig& cfg);

// Checkpoints are float32 on disk: a key=value manifest (config plus tensor
// registry name/shape/offset) followed by the raw little-endian data blob.
void save_checkpoint(const Model<float>& model, const std::string& path);
Model<float> load_checkpoint(const std::string& path);

extern template class Model<float>;
extern template class Model<double>;
extern template Model<float> build_model<float>(const ModelConfig&, std::uint64_t);
extern template Model<double> build_model<double>(const ModelConfig&, std::uint64_t);

}  // namespace origami
