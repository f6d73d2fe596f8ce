#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "origami/ctc.hpp"
#include "origami/image.hpp"

// Synthetic multi-line pages from an embedded 5x7 glyph font, plus the
// hard-to-segment distortions: seam-carving line compaction, projective and
// elastic warps, and the horizontal-flip experiment.

namespace origami {

class GlyphFont {
public:
    static const GlyphFont& builtin();  // digits and A..Z on a 5x7 grid

    bool has(char c) const;
    bool pixel(char c, int row, int col) const;  // row in [0,7), col in [0,5)
    int ink_count(char c) const;

    static constexpr int rows = 7;
    static constexpr int cols = 5;

private:
    GlyphFont();
    std::array<std::array<std::uint8_t, 5>, 36> glyphs_{};  // column bytes, bit 0 = top
    int index_of(char c) const;
};

struct PageSpec {
    std::int64_t height = 96;
    std::int64_t width = 96;
    int lines = 3;
    int chars_min = 5;
    int chars_max = 5;
    int gap_min = 4;  // interline gap, px
    int gap_max = 8;
    int jitter = 1;  // per-char vertical offset, px
    int margin = 4;
    int scale = 2;  // glyph cell magnification
    std::uint64_t seed = 1;

    void validate() const;  // throws ConfigError listing every violated bound
};

struct LineBand {
    std::int64_t row_start = 0;  // inclusive
    std::int64_t row_end = 0;    // inclusive
};

struct LabeledSample {
    Image image;
    std::string transcript;  // lines joined by single spaces, no break markers
    std::vector<LineBand> line_bands;  // evaluation-only, never for training
    std::vector<int> per_char_line;    // line of each transcript char; join
                                       // spaces belong to the preceding line
};

// Deterministic in (spec, seed): sample i uses seed ^ i. Drawn characters are
// the non-blank, non-space vocabulary entries; space is reserved as the line
// joiner.
std::vector<LabeledSample> generate(const PageSpec& spec, const Vocabulary& vocab, int n);

// |dI/dx| + |dI/dy| with central differences, borders clamped. h*w row-major.
std::vector<float> seam_energy(const Image& img);
// Minimal-energy 8-connected horizontal seam: one row index per column,
// adjacent entries differ by at most 1; ties resolved toward the top.
std::vector<std::int64_t> find_min_seam(std::int64_t h, std::int64_t w,
                                        const std::vector<float>& energy);
// Removes seams until height is exactly floor(h/2) (odd heights get one white
// pad row first). Bands, when given, are kept as conservative supersets.
Image compact_lines(const Image& img, std::vector<LineBand>* bands = nullptr);

using Homography = std::array<double, 9>;  // row-major, maps source -> dest

// Inverse-maps through H with bilinear sampling; outside the source quad the
// result is white (1.0). Bands are corner-mapped to min/max rows.
Image apply_homography(const Image& img, const Homography& H,
                       std::vector<LineBand>* bands = nullptr);
// Rotation ~ U(-max_rotation_deg, +), per-axis scale ~ U(1-jitter, 1+jitter),
// mild perspective terms from the same jitter, all about the image center.
Image warp_projective(const Image& img, double max_rotation_deg, double max_scale_jitter,
                      std::uint64_t seed, std::vector<LineBand>* bands = nullptr);

// Per-pixel displacements ~ U(-1,1)*alpha, Gaussian-smoothed with radius
// sigma. Exposed separately so tests can pin the field bit-exactly.
void elastic_field(std::int64_t h, std::int64_t w, double alpha, double sigma,
                   std::uint64_t seed, std::vector<float>& dx, std::vector<float>& dy);
Image warp_elastic(const Image& img, double alpha, double sigma, std::uint64_t seed,
                   std::vector<LineBand>* bands = nullptr);

// Mirrors the image and reverses each line's text; line order is preserved
// and the transcript is rebuilt with the same join rule.
LabeledSample flip_horizontal_with_gt(const LabeledSample& sample);

// On-disk dataset: %06d.pgm + %06d.gt.txt + %06d.bands.txt + manifest.txt.
struct Dataset {
    std::vector<LabeledSample> samples;
    std::vector<std::pair<std::string, std::string>> manifest;
};

void save_dataset(const std::string& dir, const std::vector<LabeledSample>& samples,
                  const std::vector<std::pair<std::string, std::string>>& manifest);
Dataset load_dataset(const std::string& dir);

}  // namespace origami
