#include "origami/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "origami/errors.hpp"

namespace origami {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- glyph font

namespace {

// Classic 5x7 dot-matrix font, column bytes with bit 0 = top row.
constexpr std::uint8_t kFont5x7[36][5] = {
    {0x3E, 0x51, 0x49, 0x45, 0x3E},  // 0
    {0x00, 0x42, 0x7F, 0x40, 0x00},  // 1
    {0x42, 0x61, 0x51, 0x49, 0x46},  // 2
    {0x21, 0x41, 0x45, 0x4B, 0x31},  // 3
    {0x18, 0x14, 0x12, 0x7F, 0x10},  // 4
    {0x27, 0x45, 0x45, 0x45, 0x39},  // 5
    {0x3C, 0x4A, 0x49, 0x49, 0x30},  // 6
    {0x01, 0x71, 0x09, 0x05, 0x03},  // 7
    {0x36, 0x49, 0x49, 0x49, 0x36},  // 8
    {0x06, 0x49, 0x49, 0x29, 0x1E},  // 9
    {0x7E, 0x11, 0x11, 0x11, 0x7E},  // A
    {0x7F, 0x49, 0x49, 0x49, 0x36},  // B
    {0x3E, 0x41, 0x41, 0x41, 0x22},  // C
    {0x7F, 0x41, 0x41, 0x22, 0x1C},  // D
    {0x7F, 0x49, 0x49, 0x49, 0x41},  // E
    {0x7F, 0x09, 0x09, 0x09, 0x01},  // F
    {0x3E, 0x41, 0x49, 0x49, 0x7A},  // G
    {0x7F, 0x08, 0x08, 0x08, 0x7F},  // H
    {0x00, 0x41, 0x7F, 0x41, 0x00},  // I
    {0x20, 0x40, 0x41, 0x3F, 0x01},  // J
    {0x7F, 0x08, 0x14, 0x22, 0x41},  // K
    {0x7F, 0x40, 0x40, 0x40, 0x40},  // L
    {0x7F, 0x02, 0x0C, 0x02, 0x7F},  // M
    {0x7F, 0x04, 0x08, 0x10, 0x7F},  // N
    {0x3E, 0x41, 0x41, 0x41, 0x3E},  // O
    {0x7F, 0x09, 0x09, 0x09, 0x06},  // P
    {0x3E, 0x41, 0x51, 0x21, 0x5E},  // Q
    {0x7F, 0x09, 0x19, 0x29, 0x46},  // R
    {0x46, 0x49, 0x49, 0x49, 0x31},  // S
    {0x01, 0x01, 0x7F, 0x01, 0x01},  // T
    {0x3F, 0x40, 0x40, 0x40, 0x3F},  // U
    {0x1F, 0x20, 0x40, 0x20, 0x1F},  // V
    {0x3F, 0x40, 0x38, 0x40, 0x3F},  // W
    {0x63, 0x14, 0x08, 0x14, 0x63},  // X
    {0x07, 0x08, 0x70, 0x08, 0x07},  // Y
    {0x61, 0x51, 0x49, 0x45, 0x43},  // Z
};

}  // namespace

GlyphFont::GlyphFont() {
    for (int g = 0; g < 36; ++g)
        for (int c = 0; c < 5; ++c) glyphs_[static_cast<std::size_t>(g)][static_cast<std::size_t>(c)] = kFont5x7[g][c];
}

const GlyphFont& GlyphFont::builtin() {
    static const GlyphFont font;
    return font;
}

int GlyphFont::index_of(char c) const {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'Z') return 10 + (c - 'A');
    return -1;
}

bool GlyphFont::has(char c) const { return index_of(c) >= 0; }

bool GlyphFont::pixel(char c, int row, int col) const {
    const int g = index_of(c);
    if (g < 0 || row < 0 || row >= rows || col < 0 || col >= cols) return false;
    return (glyphs_[static_cast<std::size_t>(g)][static_cast<std::size_t>(col)] >> row) & 1;
}

int GlyphFont::ink_count(char c) const {
    const int g = index_of(c);
    if (g < 0) return 0;
    int n = 0;
    for (int col = 0; col < cols; ++col)
        for (int row = 0; row < rows; ++row)
            n += (glyphs_[static_cast<std::size_t>(g)][static_cast<std::size_t>(col)] >> row) & 1;
    return n;
}

// ------------------------------------------------------------ page rendering

void PageSpec::validate() const {
    std::vector<std::string> bad;
    if (height < 16 || width < 16) bad.push_back("height/width must be >= 16");
    if (lines < 1) bad.push_back("lines must be >= 1");
    if (chars_min < 1 || chars_max < chars_min)
        bad.push_back("need 1 <= chars_min <= chars_max");
    if (gap_min < 0 || gap_max < gap_min) bad.push_back("need 0 <= gap_min <= gap_max");
    if (jitter < 0) bad.push_back("jitter must be >= 0");
    if (gap_min < 2 * jitter)
        bad.push_back("gap_min must be >= 2*jitter so line bands cannot overlap");
    if (margin < 0) bad.push_back("margin must be >= 0");
    if (scale < 1) bad.push_back("scale must be >= 1");
    if (!bad.empty()) {
        std::string msg = "page spec invalid:";
        for (const auto& b : bad) msg += "\n  - " + b;
        throw ConfigError(msg);
    }
}

namespace {

LabeledSample render_page(const PageSpec& spec, const std::string& drawable,
                          std::uint64_t seed) {
    const GlyphFont& font = GlyphFont::builtin();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> char_count(spec.chars_min, spec.chars_max);
    std::uniform_int_distribution<std::size_t> char_pick(0, drawable.size() - 1);
    std::uniform_int_distribution<int> gap_pick(spec.gap_min, spec.gap_max);
    std::uniform_int_distribution<int> jitter_pick(-spec.jitter, spec.jitter);

    std::vector<std::string> line_texts(static_cast<std::size_t>(spec.lines));
    for (auto& text : line_texts) {
        const int k = char_count(rng);
        for (int i = 0; i < k; ++i) text.push_back(drawable[char_pick(rng)]);
    }
    std::vector<int> gaps(static_cast<std::size_t>(std::max(0, spec.lines - 1)));
    for (auto& g : gaps) g = gap_pick(rng);

    const int s = spec.scale;
    const std::int64_t line_h = 7 * s;
    const std::int64_t advance = 6 * s;

    // nominal top row of each line, with jitter slack at the top
    std::vector<std::int64_t> line_y(static_cast<std::size_t>(spec.lines));
    std::int64_t y = spec.margin + spec.jitter;
    for (int j = 0; j < spec.lines; ++j) {
        line_y[static_cast<std::size_t>(j)] = y;
        y += line_h;
        if (j + 1 < spec.lines) y += gaps[static_cast<std::size_t>(j)];
    }

    for (int j = 0; j < spec.lines; ++j) {
        const auto& text = line_texts[static_cast<std::size_t>(j)];
        const std::int64_t width_needed =
            spec.margin + static_cast<std::int64_t>(text.size()) * advance - s;
        if (width_needed > spec.width - spec.margin)
            throw ConfigError("line " + std::to_string(j) + " ('" + text +
                              "') exceeds canvas width " + std::to_string(spec.width));
        const std::int64_t bottom = line_y[static_cast<std::size_t>(j)] + line_h - 1 + spec.jitter;
        if (bottom > spec.height - 1 - spec.margin)
            throw ConfigError("line " + std::to_string(j) + " ('" + text +
                              "') does not fit vertically on canvas height " +
                              std::to_string(spec.height));
    }

    LabeledSample sample;
    sample.image = white_image(spec.height, spec.width);
    for (int j = 0; j < spec.lines; ++j) {
        const auto& text = line_texts[static_cast<std::size_t>(j)];
        const std::int64_t y0 = line_y[static_cast<std::size_t>(j)];
        std::int64_t ink_lo = spec.height, ink_hi = -1;
        std::int64_t pen = spec.margin;
        for (char c : text) {
            const int d = spec.jitter > 0 ? jitter_pick(rng) : 0;
            if (c != ' ') {
                for (int gr = 0; gr < GlyphFont::rows; ++gr)
                    for (int gc = 0; gc < GlyphFont::cols; ++gc) {
                        if (!font.pixel(c, gr, gc)) continue;
                        for (int dy = 0; dy < s; ++dy)
                            for (int dx = 0; dx < s; ++dx) {
                                const std::int64_t r = y0 + d + gr * s + dy;
                                const std::int64_t cc = pen + gc * s + dx;
                                sample.image.at(r, cc) = 0.0f;
                                ink_lo = std::min(ink_lo, r);
                                ink_hi = std::max(ink_hi, r);
                            }
                    }
            }
            pen += advance;
        }
        if (ink_hi < 0) {  // blank line: fall back to its nominal body rows
            ink_lo = y0;
            ink_hi = y0 + line_h - 1;
        }
        sample.line_bands.push_back({ink_lo, ink_hi});

        for (std::size_t i = 0; i < text.size(); ++i) sample.per_char_line.push_back(j);
        sample.transcript += text;
        if (j + 1 < spec.lines) {
            sample.transcript += ' ';
            sample.per_char_line.push_back(j);  // join space sticks to its line
        }
    }
    return sample;
}

}  // namespace

std::vector<LabeledSample> generate(const PageSpec& spec, const Vocabulary& vocab, int n) {
    spec.validate();
    if (n < 0) throw ConfigError("generate: n must be >= 0");
    std::string drawable;
    for (int i = 1; i < vocab.size(); ++i) {
        const char c = vocab.char_at(i);
        if (c == ' ') continue;
        if (!GlyphFont::builtin().has(c))
            throw ConfigError(std::string("generate: no glyph for vocabulary character '") + c +
                              "'");
        drawable.push_back(c);
    }
    if (drawable.empty())
        throw ConfigError("generate: vocabulary has no drawable characters");

    std::vector<LabeledSample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out.push_back(render_page(spec, drawable, spec.seed ^ static_cast<std::uint64_t>(i)));
    return out;
}

// ------------------------------------------------------------- seam carving

std::vector<float> seam_energy(const Image& img) {
    const std::int64_t h = img.h, w = img.w;
    std::vector<float> e(static_cast<std::size_t>(h * w));
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) {
            const float gx = img.at(r, std::min(c + 1, w - 1)) - img.at(r, std::max(c - 1, std::int64_t{0}));
            const float gy = img.at(std::min(r + 1, h - 1), c) - img.at(std::max(r - 1, std::int64_t{0}), c);
            e[static_cast<std::size_t>(r * w + c)] = std::abs(gx) + std::abs(gy);
        }
    return e;
}

std::vector<std::int64_t> find_min_seam(std::int64_t h, std::int64_t w,
                                        const std::vector<float>& energy) {
    if (h < 1 || w < 1 || energy.size() != static_cast<std::size_t>(h * w))
        throw ShapeError("find_min_seam: energy grid does not match h*w");
    // cumulative minimal energy, column by column; ties prefer the top row
    std::vector<double> cum(static_cast<std::size_t>(h)), next(static_cast<std::size_t>(h));
    std::vector<std::int64_t> parent(static_cast<std::size_t>(h * w), 0);
    for (std::int64_t r = 0; r < h; ++r) cum[static_cast<std::size_t>(r)] = energy[static_cast<std::size_t>(r * w)];
    for (std::int64_t c = 1; c < w; ++c) {
        for (std::int64_t r = 0; r < h; ++r) {
            std::int64_t best = std::max(r - 1, std::int64_t{0});
            for (std::int64_t p = best + 1; p <= std::min(r + 1, h - 1); ++p)
                if (cum[static_cast<std::size_t>(p)] < cum[static_cast<std::size_t>(best)]) best = p;
            parent[static_cast<std::size_t>(r * w + c)] = best;
            next[static_cast<std::size_t>(r)] =
                cum[static_cast<std::size_t>(best)] + energy[static_cast<std::size_t>(r * w + c)];
        }
        std::swap(cum, next);
    }
    std::int64_t end = 0;
    for (std::int64_t r = 1; r < h; ++r)
        if (cum[static_cast<std::size_t>(r)] < cum[static_cast<std::size_t>(end)]) end = r;
    std::vector<std::int64_t> seam(static_cast<std::size_t>(w));
    seam[static_cast<std::size_t>(w - 1)] = end;
    for (std::int64_t c = w - 1; c > 0; --c)
        seam[static_cast<std::size_t>(c - 1)] = parent[static_cast<std::size_t>(seam[static_cast<std::size_t>(c)] * w + c)];
    return seam;
}

namespace {

void remove_seam(Image& img, const std::vector<std::int64_t>& seam) {
    Image out;
    out.h = img.h - 1;
    out.w = img.w;
    out.pix.resize(static_cast<std::size_t>(out.h * out.w));
    for (std::int64_t c = 0; c < img.w; ++c) {
        std::int64_t rr = 0;
        for (std::int64_t r = 0; r < img.h; ++r) {
            if (r == seam[static_cast<std::size_t>(c)]) continue;
            out.at(rr++, c) = img.at(r, c);
        }
    }
    img = std::move(out);
}

void shift_bands(std::vector<LineBand>& bands, const std::vector<std::int64_t>& seam,
                 std::int64_t new_h) {
    std::int64_t lo = seam[0], hi = seam[0];
    for (std::int64_t r : seam) {
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    for (auto& b : bands) {
        if (lo < b.row_start) b.row_start -= 1;
        if (hi < b.row_end) b.row_end -= 1;
        b.row_start = std::max<std::int64_t>(0, std::min(b.row_start, new_h - 1));
        b.row_end = std::max(b.row_start, std::min(b.row_end, new_h - 1));
    }
}

}  // namespace

Image compact_lines(const Image& img, std::vector<LineBand>* bands) {
    Image work = img;
    if (work.h % 2 != 0) {  // pad with one white row so the height is even
        work.h += 1;
        work.pix.resize(static_cast<std::size_t>(work.h * work.w), 1.0f);
    }
    const std::int64_t target = img.h / 2;
    while (work.h > target) {
        const auto energy = seam_energy(work);
        const auto seam = find_min_seam(work.h, work.w, energy);
        remove_seam(work, seam);
        if (bands) shift_bands(*bands, seam, work.h);
    }
    return work;
}

// ---------------------------------------------------------- projective warp

namespace {

Homography matmul3(const Homography& a, const Homography& b) {
    Homography r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r[static_cast<std::size_t>(i * 3 + j)] += a[static_cast<std::size_t>(i * 3 + k)] * b[static_cast<std::size_t>(k * 3 + j)];
    return r;
}

double det3(const Homography& m) {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography invert3(const Homography& m) {
    const double d = det3(m);
    if (std::abs(d) < 1e-12) throw NumericError("homography is singular");
    Homography r;
    r[0] = (m[4] * m[8] - m[5] * m[7]) / d;
    r[1] = (m[2] * m[7] - m[1] * m[8]) / d;
    r[2] = (m[1] * m[5] - m[2] * m[4]) / d;
    r[3] = (m[5] * m[6] - m[3] * m[8]) / d;
    r[4] = (m[0] * m[8] - m[2] * m[6]) / d;
    r[5] = (m[2] * m[3] - m[0] * m[5]) / d;
    r[6] = (m[3] * m[7] - m[4] * m[6]) / d;
    r[7] = (m[1] * m[6] - m[0] * m[7]) / d;
    r[8] = (m[0] * m[4] - m[1] * m[3]) / d;
    return r;
}

float bilinear_at(const Image& img, double xs, double ys) {
    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(xs));
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(ys));
    const std::int64_t x1 = std::min(x0 + 1, img.w - 1);
    const std::int64_t y1 = std::min(y0 + 1, img.h - 1);
    const double fx = xs - static_cast<double>(x0);
    const double fy = ys - static_cast<double>(y0);
    const double top = (1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1);
    const double bot = (1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1);
    return static_cast<float>((1 - fy) * top + fy * bot);
}

}  // namespace

Image apply_homography(const Image& img, const Homography& H, std::vector<LineBand>* bands) {
    const Homography Hinv = invert3(H);
    Image out = white_image(img.h, img.w);
    for (std::int64_t y = 0; y < img.h; ++y)
        for (std::int64_t x = 0; x < img.w; ++x) {
            const double dx = static_cast<double>(x), dy = static_cast<double>(y);
            const double ws = Hinv[6] * dx + Hinv[7] * dy + Hinv[8];
            if (std::abs(ws) < 1e-12) continue;  // vanishing line: leave white
            const double xs = (Hinv[0] * dx + Hinv[1] * dy + Hinv[2]) / ws;
            const double ys = (Hinv[3] * dx + Hinv[4] * dy + Hinv[5]) / ws;
            if (xs < 0.0 || xs > static_cast<double>(img.w - 1) || ys < 0.0 ||
                ys > static_cast<double>(img.h - 1))
                continue;  // outside the source quad stays white
            out.at(y, x) = bilinear_at(img, xs, ys);
        }
    if (bands) {
        for (auto& b : *bands) {
            double lo = 1e300, hi = -1e300;
            for (const double yy : {static_cast<double>(b.row_start), static_cast<double>(b.row_end)})
                for (const double xx : {0.0, static_cast<double>(img.w - 1)}) {
                    const double ws = H[6] * xx + H[7] * yy + H[8];
                    const double ym = (H[3] * xx + H[4] * yy + H[5]) / ws;
                    lo = std::min(lo, ym);
                    hi = std::max(hi, ym);
                }
            b.row_start = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(lo)));
            b.row_end = std::min(img.h - 1, static_cast<std::int64_t>(std::ceil(hi)));
            b.row_end = std::max(b.row_end, b.row_start);
        }
    }
    return out;
}

Image warp_projective(const Image& img, double max_rotation_deg, double max_scale_jitter,
                      std::uint64_t seed, std::vector<LineBand>* bands) {
    if (max_rotation_deg < 0 || max_scale_jitter < 0 || max_scale_jitter >= 1.0)
        throw ConfigError("warp_projective: need rotation >= 0 and scale jitter in [0,1)");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> rot(-max_rotation_deg, max_rotation_deg);
    std::uniform_real_distribution<double> sc(1.0 - max_scale_jitter, 1.0 + max_scale_jitter);
    std::uniform_real_distribution<double> persp(-0.5, 0.5);
    const double cx = static_cast<double>(img.w - 1) / 2.0;
    const double cy = static_cast<double>(img.h - 1) / 2.0;
    const double pscale = max_scale_jitter / static_cast<double>(std::max(img.h, img.w));

    for (int attempt = 0; attempt < 100; ++attempt) {
        const double th = rot(rng) * 3.14159265358979323846 / 180.0;
        const double sx = sc(rng), sy = sc(rng);
        const double px = persp(rng) * pscale, py = persp(rng) * pscale;
        const Homography tc{1, 0, cx, 0, 1, cy, 0, 0, 1};
        const Homography tin{1, 0, -cx, 0, 1, -cy, 0, 0, 1};
        const Homography aff{sx * std::cos(th), -sy * std::sin(th), 0,
                             sx * std::sin(th), sy * std::cos(th),  0,
                             0,                 0,                  1};
        const Homography per{1, 0, 0, 0, 1, 0, px, py, 1};
        const Homography H = matmul3(matmul3(tc, matmul3(aff, per)), tin);
        if (std::abs(det3(H)) < 1e-6) continue;  // degenerate draw: resample
        return apply_homography(img, H, bands);
    }
    throw NumericError("warp_projective: could not sample a non-degenerate homography");
}

// ------------------------------------------------------------- elastic warp

namespace {

void gaussian_smooth(std::vector<float>& field, std::int64_t h, std::int64_t w, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double ksum = 0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        ksum += kernel[static_cast<std::size_t>(i + radius)];
    }
    for (auto& k : kernel) k /= ksum;

    std::vector<float> tmp(field.size());
    for (std::int64_t r = 0; r < h; ++r)  // horizontal pass, borders replicate
        for (std::int64_t c = 0; c < w; ++c) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                const std::int64_t cc = std::clamp<std::int64_t>(c + i, 0, w - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * field[static_cast<std::size_t>(r * w + cc)];
            }
            tmp[static_cast<std::size_t>(r * w + c)] = static_cast<float>(acc);
        }
    for (std::int64_t r = 0; r < h; ++r)  // vertical pass
        for (std::int64_t c = 0; c < w; ++c) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                const std::int64_t rr = std::clamp<std::int64_t>(r + i, 0, h - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(rr * w + c)];
            }
            field[static_cast<std::size_t>(r * w + c)] = static_cast<float>(acc);
        }
}

}  // namespace

void elastic_field(std::int64_t h, std::int64_t w, double alpha, double sigma,
                   std::uint64_t seed, std::vector<float>& dx, std::vector<float>& dy) {
    if (sigma <= 0) throw ConfigError("elastic_field: sigma must be > 0");
    if (alpha < 0) throw ConfigError("elastic_field: alpha must be >= 0");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    dx.resize(static_cast<std::size_t>(h * w));
    dy.resize(static_cast<std::size_t>(h * w));
    for (auto& v : dx) v = static_cast<float>(u(rng) * alpha);
    for (auto& v : dy) v = static_cast<float>(u(rng) * alpha);
    gaussian_smooth(dx, h, w, sigma);
    gaussian_smooth(dy, h, w, sigma);
}

Image warp_elastic(const Image& img, double alpha, double sigma, std::uint64_t seed,
                   std::vector<LineBand>* bands) {
    std::vector<float> dx, dy;
    elastic_field(img.h, img.w, alpha, sigma, seed, dx, dy);
    Image out = white_image(img.h, img.w);
    for (std::int64_t y = 0; y < img.h; ++y)
        for (std::int64_t x = 0; x < img.w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y * img.w + x);
            const double xs = std::clamp(static_cast<double>(x) + dx[i], 0.0,
                                         static_cast<double>(img.w - 1));
            const double ys = std::clamp(static_cast<double>(y) + dy[i], 0.0,
                                         static_cast<double>(img.h - 1));
            out.at(y, x) = bilinear_at(img, xs, ys);
        }
    if (bands) {
        const std::int64_t widen = static_cast<std::int64_t>(std::ceil(alpha));
        for (auto& b : *bands) {
            b.row_start = std::max<std::int64_t>(0, b.row_start - widen);
            b.row_end = std::min(img.h - 1, b.row_end + widen);
        }
    }
    return out;
}

// -------------------------------------------------------------------- flip

LabeledSample flip_horizontal_with_gt(const LabeledSample& sample) {
    if (sample.per_char_line.size() != sample.transcript.size())
        throw ConfigError("flip: per_char_line does not cover the transcript");
    LabeledSample out;
    out.image.h = sample.image.h;
    out.image.w = sample.image.w;
    out.image.pix.resize(sample.image.pix.size());
    for (std::int64_t r = 0; r < out.image.h; ++r)
        for (std::int64_t c = 0; c < out.image.w; ++c)
            out.image.at(r, c) = sample.image.at(r, out.image.w - 1 - c);

    // split into per-line groups; each non-final group ends with its join space
    std::vector<std::string> groups;
    for (std::size_t i = 0; i < sample.transcript.size(); ++i) {
        const int line = sample.per_char_line[i];
        if (groups.size() <= static_cast<std::size_t>(line)) groups.resize(static_cast<std::size_t>(line) + 1);
        groups[static_cast<std::size_t>(line)].push_back(sample.transcript[i]);
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
        std::string text = groups[g];
        if (g + 1 < groups.size()) {
            if (text.empty() || text.back() != ' ')
                throw ConfigError("flip: line group lacks its trailing join space");
            text.pop_back();
        }
        std::reverse(text.begin(), text.end());
        out.transcript += text;
        for (std::size_t i = 0; i < text.size(); ++i)
            out.per_char_line.push_back(static_cast<int>(g));
        if (g + 1 < groups.size()) {
            out.transcript += ' ';
            out.per_char_line.push_back(static_cast<int>(g));
        }
    }
    out.line_bands = sample.line_bands;  // rows are untouched by a mirror
    return out;
}

// --------------------------------------------------------------- dataset IO

namespace {

std::string sample_stem(const std::string& dir, int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d", index);
    return (fs::path(dir) / buf).string();
}

}  // namespace

void save_dataset(const std::string& dir, const std::vector<LabeledSample>& samples,
                  const std::vector<std::pair<std::string, std::string>>& manifest) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create dataset directory " + dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const std::string stem = sample_stem(dir, static_cast<int>(i));
        write_pgm(s.image, stem + ".pgm");
        std::ofstream gt(stem + ".gt.txt", std::ios::binary);
        gt << s.transcript << "\n";
        if (!gt) throw IoError("cannot write " + stem + ".gt.txt");
        std::ofstream bands(stem + ".bands.txt", std::ios::binary);
        for (std::size_t j = 0; j < s.line_bands.size(); ++j)
            bands << j << " " << s.line_bands[j].row_start << " " << s.line_bands[j].row_end
                  << "\n";
        if (!bands) throw IoError("cannot write " + stem + ".bands.txt");
    }
    std::ofstream mf((fs::path(dir) / "manifest.txt").string(), std::ios::binary);
    bool have_count = false;
    for (const auto& [k, v] : manifest) {
        mf << k << "=" << v << "\n";
        if (k == "count") have_count = true;
    }
    if (!have_count) mf << "count=" << samples.size() << "\n";
    if (!mf) throw IoError("cannot write manifest in " + dir);
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    std::ifstream mf((fs::path(dir) / "manifest.txt").string());
    if (!mf) throw IoError("no manifest.txt in " + dir);
    std::string line;
    std::int64_t count = -1;
    while (std::getline(mf, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError(dir + "/manifest.txt: bad line '" + line + "'");
        ds.manifest.emplace_back(line.substr(0, eq), line.substr(eq + 1));
        if (ds.manifest.back().first == "count") count = std::stoll(ds.manifest.back().second);
    }
    if (count < 0) throw IoError(dir + "/manifest.txt: missing count");

    for (int i = 0; i < count; ++i) {
        const std::string stem = sample_stem(dir, i);
        LabeledSample s;
        s.image = read_pgm(stem + ".pgm");
        std::ifstream gt(stem + ".gt.txt");
        if (!gt) throw IoError("missing " + stem + ".gt.txt");
        std::getline(gt, s.transcript);
        // join spaces belong to the preceding line (drawn chars never include
        // the space, so every space is a line break)
        int cur = 0;
        for (char c : s.transcript) {
            s.per_char_line.push_back(cur);
            if (c == ' ') ++cur;
        }
        std::ifstream bands(stem + ".bands.txt");
        if (bands) {
            std::int64_t j, r0, r1;
            while (bands >> j >> r0 >> r1) s.line_bands.push_back({r0, r1});
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace origami
