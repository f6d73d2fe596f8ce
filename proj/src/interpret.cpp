#include "origami/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "origami/ctc.hpp"
#include "origami/errors.hpp"
#include "origami/ops.hpp"

namespace origami {

namespace {

using i64 = std::int64_t;

template <class T>
void check_image(const Model<T>& model, const Image& image) {
    const auto& mc = model.config();
    if (image.h != mc.input_h || image.w != mc.input_w)
        throw ShapeError("attribution: image is " + std::to_string(image.h) + "x" +
                         std::to_string(image.w) + " but the model takes " +
                         std::to_string(mc.input_h) + "x" + std::to_string(mc.input_w));
}

template <class T>
Tensor<T> image_tensor(const Image& image, bool requires_grad = false) {
    std::vector<T> buf(image.pix.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<T>(image.pix[i]);
    return Tensor<T>::from_data({1, 1, image.h, image.w}, buf, requires_grad);
}

}  // namespace

template <class T>
AttributionMap integrated_gradients(Model<T>& model, const Image& image, i64 frame_index,
                                    i64 class_index, int steps, int chunk) {
    const auto& mc = model.config();
    if (mc.collapse != CollapseMode::origami)
        throw ConfigError("integrated_gradients: model must use origami collapse");
    if (steps < 1 || chunk < 1)
        throw ConfigError("integrated_gradients: steps and chunk must be >= 1, got steps=" +
                          std::to_string(steps) + " chunk=" + std::to_string(chunk));
    if (frame_index < 0 || frame_index >= mc.l2)
        throw ConfigError("integrated_gradients: frame_index " + std::to_string(frame_index) +
                          " outside [0," + std::to_string(mc.l2) + ")");
    if (class_index < 0 || class_index >= mc.num_classes)
        throw ConfigError("integrated_gradients: class_index " + std::to_string(class_index) +
                          " outside [0," + std::to_string(mc.num_classes) + ")");
    check_image(model, image);

    const i64 hw = image.h * image.w;
    std::vector<double> grad_sum(static_cast<std::size_t>(hw), 0.0);
    model.zero_grad();
    for (int k0 = 0; k0 < steps; k0 += chunk) {
        const int bs = std::min(chunk, steps - k0);
        std::vector<T> buf(static_cast<std::size_t>(bs) * static_cast<std::size_t>(hw));
        for (int bi = 0; bi < bs; ++bi) {
            const double a = static_cast<double>(k0 + bi) / static_cast<double>(steps);
            for (i64 i = 0; i < hw; ++i)
                buf[static_cast<std::size_t>(bi * hw + i)] = static_cast<T>(
                    1.0 + a * (static_cast<double>(image.pix[static_cast<std::size_t>(i)]) - 1.0));
        }
        auto x = Tensor<T>::from_data({bs, 1, image.h, image.w}, buf, true);
        auto logits = model.forward_logits(x);
        Tensor<T> target;
        for (int bi = 0; bi < bs; ++bi) {
            auto one = pick(logits, {bi, frame_index, class_index});
            target = target.defined() ? add(target, one) : one;
        }
        target.backward();
        auto g = x.grad();
        for (int bi = 0; bi < bs; ++bi)
            for (i64 i = 0; i < hw; ++i)
                grad_sum[static_cast<std::size_t>(i)] +=
                    static_cast<double>(g[static_cast<std::size_t>(bi * hw + i)]);
        model.zero_grad();
    }

    AttributionMap out;
    out.h = image.h;
    out.w = image.w;
    out.frame_index = frame_index;
    out.class_index = class_index;
    out.heat.resize(static_cast<std::size_t>(hw));
    for (i64 i = 0; i < hw; ++i) {
        const double diff = static_cast<double>(image.pix[static_cast<std::size_t>(i)]) - 1.0;
        out.heat[static_cast<std::size_t>(i)] =
            diff * grad_sum[static_cast<std::size_t>(i)] / static_cast<double>(steps);
    }
    return out;
}

template <class T>
AttributionMap smoothgrad_abs(Model<T>& model, const Image& image, i64 frame_index,
                              i64 class_index, int n, double noise_sigma, std::uint64_t seed,
                              int steps) {
    if (n < 1) throw ConfigError("smoothgrad_abs: n must be >= 1, got " + std::to_string(n));
    if (noise_sigma < 0)
        throw ConfigError("smoothgrad_abs: noise_sigma must be >= 0, got " +
                          std::to_string(noise_sigma));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, noise_sigma > 0 ? noise_sigma : 1.0);

    AttributionMap out;
    out.h = image.h;
    out.w = image.w;
    out.frame_index = frame_index;
    out.class_index = class_index;
    out.heat.assign(image.pix.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        Image noisy = image;
        if (noise_sigma > 0)
            for (auto& p : noisy.pix)
                p = static_cast<float>(
                    std::clamp(static_cast<double>(p) + gauss(rng), 0.0, 1.0));
        auto ig = integrated_gradients(model, noisy, frame_index, class_index, steps);
        for (std::size_t j = 0; j < out.heat.size(); ++j) out.heat[j] += std::abs(ig.heat[j]);
    }
    for (auto& v : out.heat) v /= static_cast<double>(n);
    return out;
}

template <class T>
std::vector<CharFrame> select_character_frames(const Tensor<T>& scores, FramePick pick) {
    if (scores.ndim() != 2)
        throw ShapeError("select_character_frames: scores must be [T, C], got " +
                         std::to_string(scores.ndim()) + " axes");
    const i64 Tn = scores.dim(0);
    const i64 C = scores.dim(1);

    std::vector<int> arg(static_cast<std::size_t>(Tn));
    auto data = scores.data();
    for (i64 t = 0; t < Tn; ++t) {
        int best = 0;
        for (i64 c = 1; c < C; ++c)
            if (data[static_cast<std::size_t>(t * C + c)] >
                data[static_cast<std::size_t>(t * C + best)])
                best = static_cast<int>(c);
        arg[static_cast<std::size_t>(t)] = best;
    }

    std::vector<CharFrame> out;
    i64 pos = 0;
    for (i64 t = 0; t < Tn;) {
        i64 end = t;
        while (end + 1 < Tn && arg[static_cast<std::size_t>(end + 1)] == arg[static_cast<std::size_t>(t)])
            ++end;
        if (arg[static_cast<std::size_t>(t)] != 0) {
            const i64 frame = pick == FramePick::run_start ? t : t + (end - t) / 2;
            out.push_back({frame, arg[static_cast<std::size_t>(t)], pos++});
        }
        t = end + 1;
    }
    return out;
}

template <class T>
std::vector<CharFrame> select_character_frames(Model<T>& model, const Image& image,
                                               FramePick pick) {
    check_image(model, image);
    NoGradGuard ng;
    auto x = image_tensor<T>(image);
    auto out = model.config().collapse == CollapseMode::origami
                   ? model.forward(x)
                   : model.forward_blind_collapse(x);
    return select_character_frames(slice_axis0(out, 0), pick);
}

namespace {

// bin index per the documented rule; requires hi > lo
inline int heat_bin(double v, double lo, double hi) {
    const double norm = (v - lo) / (hi - lo);
    return std::min(255, static_cast<int>(norm * 256.0));
}

}  // namespace

int otsu_bin(const AttributionMap& heat) {
    double lo = 0, hi = 0;
    bool first = true;
    for (double v : heat.heat) {
        if (!std::isfinite(v)) throw NumericError("otsu: non-finite heat value");
        if (first || v < lo) lo = first ? v : std::min(lo, v);
        if (first || v > hi) hi = first ? v : std::max(hi, v);
        first = false;
    }
    if (heat.heat.empty() || !(hi > lo)) return -1;

    std::array<i64, 256> hist{};
    for (double v : heat.heat) ++hist[static_cast<std::size_t>(heat_bin(v, lo, hi))];
    const double total = static_cast<double>(heat.heat.size());
    double total_sum = 0;
    for (int b = 0; b < 256; ++b) total_sum += static_cast<double>(b) * static_cast<double>(hist[static_cast<std::size_t>(b)]);

    int best = 0;
    double best_var = -1.0;
    double cum0 = 0, sum0 = 0;
    for (int t = 0; t < 256; ++t) {
        cum0 += static_cast<double>(hist[static_cast<std::size_t>(t)]);
        sum0 += static_cast<double>(t) * static_cast<double>(hist[static_cast<std::size_t>(t)]);
        double var = 0;
        if (cum0 > 0 && cum0 < total) {
            const double mu0 = sum0 / cum0;
            const double mu1 = (total_sum - sum0) / (total - cum0);
            var = cum0 * (total - cum0) * (mu0 - mu1) * (mu0 - mu1);
        }
        if (var > best_var) {
            best_var = var;
            best = t;
        }
    }
    return best;
}

BinaryMap otsu_threshold(const AttributionMap& heat) {
    BinaryMap out;
    out.h = heat.h;
    out.w = heat.w;
    out.mask.assign(heat.heat.size(), 0);
    const int t = otsu_bin(heat);
    if (t < 0) return out;

    double lo = heat.heat[0], hi = heat.heat[0];
    for (double v : heat.heat) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (std::size_t i = 0; i < heat.heat.size(); ++i)
        out.mask[i] = heat_bin(heat.heat[i], lo, hi) > t ? 1 : 0;
    return out;
}

CenterOfMass center_of_mass(const BinaryMap& map) {
    CenterOfMass out;
    double rs = 0, cs = 0, count = 0;
    for (i64 r = 0; r < map.h; ++r)
        for (i64 c = 0; c < map.w; ++c)
            if (map.at(r, c)) {
                rs += static_cast<double>(r);
                cs += static_cast<double>(c);
                count += 1;
            }
    if (count > 0) {
        out.row = rs / count;
        out.col = cs / count;
        out.valid = true;
    }
    return out;
}

const std::vector<std::array<std::uint8_t, 3>>& scatter_palette() {
    static const std::vector<std::array<std::uint8_t, 3>> kPalette = {
        {{230, 25, 75}},   // red
        {{60, 180, 75}},   // green
        {{0, 130, 200}},   // blue
        {{255, 195, 0}},   // amber
        {{145, 30, 180}},  // purple
        {{70, 200, 200}},  // teal
    };
    return kPalette;
}

namespace {

inline std::uint8_t faint_byte(float v) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    const int b = static_cast<int>(std::lround(c * 255.0));
    return static_cast<std::uint8_t>((510 + b) / 3);  // white stays white, ink washes out
}

}  // namespace

void emit_line_scatter(const Image& image, const std::vector<CharLocalization>& locs,
                       const std::string& path) {
    const auto& palette = scatter_palette();
    RgbImage rgb;
    rgb.h = image.h;
    rgb.w = image.w;
    rgb.pix.resize(static_cast<std::size_t>(image.h * image.w * 3));
    for (i64 i = 0; i < image.h * image.w; ++i) {
        const std::uint8_t b = faint_byte(image.pix[static_cast<std::size_t>(i)]);
        rgb.pix[static_cast<std::size_t>(3 * i + 0)] = b;
        rgb.pix[static_cast<std::size_t>(3 * i + 1)] = b;
        rgb.pix[static_cast<std::size_t>(3 * i + 2)] = b;
    }

    const i64 P = static_cast<i64>(palette.size());
    for (const auto& loc : locs) {
        const auto& color = palette[static_cast<std::size_t>(((loc.line_assignment % P) + P) % P)];
        const i64 cr = std::clamp<i64>(std::llround(loc.row), 0, image.h - 1);
        const i64 cc = std::clamp<i64>(std::llround(loc.col), 0, image.w - 1);
        for (i64 dr = -1; dr <= 1; ++dr)
            for (i64 dc = -1; dc <= 1; ++dc) {
                const i64 r = cr + dr, c = cc + dc;
                if (r < 0 || r >= image.h || c < 0 || c >= image.w) continue;
                const std::size_t o = static_cast<std::size_t>(3 * (r * image.w + c));
                rgb.pix[o + 0] = color[0];
                rgb.pix[o + 1] = color[1];
                rgb.pix[o + 2] = color[2];
            }
    }

    std::string comment = "palette";
    for (const auto& c : palette)
        comment += " " + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," +
                   std::to_string(c[2]);
    write_ppm(rgb, path, comment);
}

void save_heatmap_pgm(const AttributionMap& map, const std::string& path) {
    Image img;
    img.h = map.h;
    img.w = map.w;
    img.pix.assign(map.heat.size(), 0.0f);
    double lo = 0, hi = 0;
    if (!map.heat.empty()) {
        lo = hi = map.heat[0];
        for (double v : map.heat) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (hi > lo)
        for (std::size_t i = 0; i < map.heat.size(); ++i)
            img.pix[i] = static_cast<float>((map.heat[i] - lo) / (hi - lo));
    write_pgm(img, path,
              "heat frame=" + std::to_string(map.frame_index) +
                  " class=" + std::to_string(map.class_index));
}

template <class T>
std::vector<CharLocalization> localize_characters(Model<T>& model, const LabeledSample& sample,
                                                  const Vocabulary& vocab, int n,
                                                  double noise_sigma, std::uint64_t seed,
                                                  int steps) {
    auto frames = select_character_frames(model, sample.image);

    // ground-truth lines are only trustworthy when the decode is exact
    bool exact = frames.size() == sample.per_char_line.size();
    if (exact) {
        const auto ref = vocab.encode(sample.transcript);
        exact = ref.size() == frames.size();
        for (std::size_t i = 0; exact && i < frames.size(); ++i)
            exact = frames[i].class_index == ref[i];
    }

    std::vector<CharLocalization> out;
    for (const auto& cf : frames) {
        auto heat = smoothgrad_abs(model, sample.image, cf.frame_index, cf.class_index, n,
                                   noise_sigma, seed + static_cast<std::uint64_t>(cf.char_position),
                                   steps);
        auto com = center_of_mass(otsu_threshold(heat));
        if (!com.valid) continue;
        CharLocalization loc;
        loc.char_position = cf.char_position;
        loc.row = com.row;
        loc.col = com.col;
        if (exact)
            loc.line_assignment =
                sample.per_char_line[static_cast<std::size_t>(cf.char_position)];
        out.push_back(loc);
    }
    return out;
}

template AttributionMap integrated_gradients<float>(Model<float>&, const Image&, i64, i64, int,
                                                    int);
template AttributionMap integrated_gradients<double>(Model<double>&, const Image&, i64, i64, int,
                                                     int);
template AttributionMap smoothgrad_abs<float>(Model<float>&, const Image&, i64, i64, int, double,
                                              std::uint64_t, int);
template AttributionMap smoothgrad_abs<double>(Model<double>&, const Image&, i64, i64, int,
                                               double, std::uint64_t, int);
template std::vector<CharFrame> select_character_frames<float>(const Tensor<float>&, FramePick);
template std::vector<CharFrame> select_character_frames<double>(const Tensor<double>&, FramePick);
template std::vector<CharFrame> select_character_frames<float>(Model<float>&, const Image&,
                                                               FramePick);
template std::vector<CharFrame> select_character_frames<double>(Model<double>&, const Image&,
                                                                FramePick);
template std::vector<CharLocalization> localize_characters<float>(Model<float>&,
                                                                  const LabeledSample&,
                                                                  const Vocabulary&, int, double,
                                                                  std::uint64_t, int);
template std::vector<CharLocalization> localize_characters<double>(Model<double>&,
                                                                   const LabeledSample&,
                                                                   const Vocabulary&, int, double,
                                                                   std::uint64_t, int);

}  // namespace origami
