#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "origami/data.hpp"
#include "origami/image.hpp"
#include "origami/model.hpp"

// Gradient attribution: which input pixels drive one output frame's class
// score.  The heat from integrated_gradients is signed (its sum approximates
// F(image) - F(white)); smoothgrad_abs yields the non-negative map consumed
// by thresholding and localization.

namespace origami {

struct AttributionMap {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::vector<double> heat;  // h*w, row-major
    std::int64_t frame_index = -1;
    std::int64_t class_index = -1;
    std::int64_t char_position = -1;

    double at(std::int64_t r, std::int64_t c) const {
        return heat[static_cast<std::size_t>(r * w + c)];
    }
    double& at(std::int64_t r, std::int64_t c) {
        return heat[static_cast<std::size_t>(r * w + c)];
    }
};

// Path-integrated gradients of the pre-log_softmax score [frame, class]
// against the all-white baseline, left-point Riemann rule: gradients taken at
// x_k = white + (k/steps)(image - white) for k = 0..steps-1, averaged, then
// scaled by (image - white).  Interpolants run through the model `chunk` at a
// time; per-sample results are independent of the chunking.
template <class T>
AttributionMap integrated_gradients(Model<T>& model, const Image& image,
                                    std::int64_t frame_index, std::int64_t class_index,
                                    int steps = 50, int chunk = 25);

// Mean of |integrated_gradients| over n noisy copies of the image (gaussian
// noise, clamped back to [0,1]).  noise_sigma = 0 draws nothing, so n = 1
// reproduces |IG| bit-exactly.
template <class T>
AttributionMap smoothgrad_abs(Model<T>& model, const Image& image,
                              std::int64_t frame_index, std::int64_t class_index,
                              int n = 5, double noise_sigma = 0.1,
                              std::uint64_t seed = 1, int steps = 50);

enum class FramePick { run_start, run_middle };

struct CharFrame {
    std::int64_t frame_index = -1;
    std::int64_t class_index = -1;
    std::int64_t char_position = -1;
};

// One entry per character emitted by greedy decoding of [T, C] scores:
// the first frame of its argmax run (or the middle frame with run_middle).
template <class T>
std::vector<CharFrame> select_character_frames(const Tensor<T>& scores,
                                               FramePick pick = FramePick::run_start);

// Same, decoding the model's output on one image.
template <class T>
std::vector<CharFrame> select_character_frames(Model<T>& model, const Image& image,
                                               FramePick pick = FramePick::run_start);

struct BinaryMap {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::vector<std::uint8_t> mask;  // 0/1, h*w row-major

    std::uint8_t at(std::int64_t r, std::int64_t c) const {
        return mask[static_cast<std::size_t>(r * w + c)];
    }
};

// Otsu bin over the 256-bin histogram of the min-max normalized heat
// (bin = min(255, floor(norm * 256))): the threshold t maximizing
// between-class variance, ties resolved to the lower t.  -1 for a constant
// map.  Exposed so the choice can be verified by exhaustive scan.
int otsu_bin(const AttributionMap& heat);

// Pixels whose bin exceeds the Otsu bin; a constant map yields all zeros.
BinaryMap otsu_threshold(const AttributionMap& heat);

struct CenterOfMass {
    double row = 0;
    double col = 0;
    bool valid = false;  // false when no pixel is set
};

CenterOfMass center_of_mass(const BinaryMap& map);

struct CharLocalization {
    std::int64_t char_position = -1;
    double row = 0;
    double col = 0;
    std::int64_t line_assignment = -1;  // -1 = unknown
};

// Marker colors for the line scatter (echoed in the PPM comment header).
const std::vector<std::array<std::uint8_t, 3>>& scatter_palette();

// Faint copy of the page plus a 3x3 marker per localization, colored
// palette[line mod palette size] exactly (markers clip at the borders).
void emit_line_scatter(const Image& image, const std::vector<CharLocalization>& locs,
                       const std::string& path);

// Heat map as a min-max normalized 8-bit PGM (constant map -> black).
void save_heatmap_pgm(const AttributionMap& map, const std::string& path);

// Whole pipeline for one labeled page: decoded characters -> smoothgrad-abs
// -> otsu -> center of mass.  line_assignment comes from per_char_line when
// the decode matches the transcript exactly, else stays -1; characters whose
// binary map is empty are dropped.
template <class T>
std::vector<CharLocalization> localize_characters(Model<T>& model, const LabeledSample& sample,
                                                  const Vocabulary& vocab, int n = 5,
                                                  double noise_sigma = 0.1,
                                                  std::uint64_t seed = 1, int steps = 50);

extern template AttributionMap integrated_gradients<float>(Model<float>&, const Image&,
                                                           std::int64_t, std::int64_t, int, int);
extern template AttributionMap integrated_gradients<double>(Model<double>&, const Image&,
                                                            std::int64_t, std::int64_t, int, int);
extern template AttributionMap smoothgrad_abs<float>(Model<float>&, const Image&, std::int64_t,
                                                     std::int64_t, int, double, std::uint64_t,
                                                     int);
extern template AttributionMap smoothgrad_abs<double>(Model<double>&, const Image&, std::int64_t,
                                                      std::int64_t, int, double, std::uint64_t,
                                                      int);
extern template std::vector<CharFrame> select_character_frames<float>(const Tensor<float>&,
                                                                      FramePick);
extern template std::vector<CharFrame> select_character_frames<double>(const Tensor<double>&,
                                                                       FramePick);
extern template std::vector<CharFrame> select_character_frames<float>(Model<float>&, const Image&,
                                                                      FramePick);
extern template std::vector<CharFrame> select_character_frames<double>(Model<double>&,
                                                                       const Image&, FramePick);
extern template std::vector<CharLocalization> localize_characters<float>(
    Model<float>&, const LabeledSample&, const Vocabulary&, int, double, std::uint64_t, int);
extern template std::vector<CharLocalization> localize_characters<double>(
    Model<double>&, const LabeledSample&, const Vocabulary&, int, double, std::uint64_t, int);

}  // namespace origami
