#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "origami/ctc.hpp"
#include "origami/data.hpp"
#include "origami/errors.hpp"
#include "origami/interpret.hpp"
#include "origami/model.hpp"
#include "origami/ops.hpp"
#include "origami/train.hpp"

using namespace origami;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config(bool use_ln) {
    ModelConfig cfg;
    cfg.backbone = BackboneKind::vgg_s;
    cfg.input_h = 32;
    cfg.input_w = 48;
    cfg.l1 = 8;
    cfg.l2 = 12;
    cfg.channels = {6, 6, 8, 10, 12, 12, 12};
    cfg.num_classes = 11;
    cfg.use_ln = use_ln;
    return cfg;
}

PageSpec tiny_page(std::uint64_t seed) {
    PageSpec spec;
    spec.height = 32;
    spec.width = 48;
    spec.lines = 1;
    spec.chars_min = 2;
    spec.chars_max = 2;
    spec.gap_min = 2;
    spec.gap_max = 2;
    spec.jitter = 1;
    spec.seed = seed;
    return spec;
}

double neuron(Model<double>& m, const Image& img, std::int64_t f, std::int64_t c) {
    NoGradGuard ng;
    std::vector<double> buf(img.pix.begin(), img.pix.end());
    auto x = Tensor<double>::from_data({1, 1, img.h, img.w}, buf);
    return m.forward_logits(x).at({0, f, c});
}

}  // namespace

TEST_CASE("IG of the baseline image is exactly zero") {
    auto model = build_model<double>(tiny_config(true), 17);
    Image white = white_image(32, 48);
    auto attr = integrated_gradients(model, white, 3, 2, 50);
    CHECK(attr.h == 32);
    CHECK(attr.w == 48);
    CHECK(attr.frame_index == 3);
    CHECK(attr.class_index == 2);
    for (double v : attr.heat) CHECK(v == 0.0);
}

TEST_CASE("IG with steps=1 is gradient x input at the baseline") {
    auto vocab = Vocabulary::from_characters("0123456789 ");
    auto pages = generate(tiny_page(4), vocab, 1);
    auto model = build_model<double>(tiny_config(true), 17);

    auto attr = integrated_gradients(model, pages[0].image, 5, 3, 1);

    // reference: one backward through the all-white input
    std::vector<double> white(32 * 48, 1.0);
    auto x = Tensor<double>::from_data({1, 1, 32, 48}, white, true);
    pick(model.forward_logits(x), {0, 5, 3}).backward();
    auto g = x.grad();
    model.zero_grad();
    for (std::size_t i = 0; i < attr.heat.size(); ++i) {
        const double ref = (static_cast<double>(pages[0].image.pix[i]) - 1.0) * g[i];
        CHECK(attr.heat[i] == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("IG is independent of the chunk size") {
    auto vocab = Vocabulary::from_characters("0123456789 ");
    auto pages = generate(tiny_page(4), vocab, 1);
    auto model = build_model<double>(tiny_config(true), 17);

    auto a = integrated_gradients(model, pages[0].image, 5, 3, 20, 7);
    auto b = integrated_gradients(model, pages[0].image, 5, 3, 20, 20);
    REQUIRE(a.heat.size() == b.heat.size());
    for (std::size_t i = 0; i < a.heat.size(); ++i)
        CHECK(a.heat[i] == doctest::Approx(b.heat[i]).epsilon(1e-13));
}

TEST_CASE("IG completeness within 5% at steps=300 (double, well-conditioned neurons)") {
    auto vocab = Vocabulary::from_characters("0123456789 ");
    auto pages = generate(tiny_page(4), vocab, 4);
    auto model = build_model<double>(tiny_config(false), 17);
    Image white = white_image(32, 48);

    int checked = 0;
    for (const auto& page : pages) {
        for (auto [f, c] : {std::pair<int, int>{2, 3}, {7, 8}}) {
            const double dF = neuron(model, page.image, f, c) - neuron(model, white, f, c);
            if (std::abs(dF) < 0.05) continue;  // relative bound is meaningless near zero
            auto attr = integrated_gradients(model, page.image, f, c, 300, 25);
            double sum = 0;
            for (double v : attr.heat) sum += v;
            CAPTURE(dF);
            CHECK(std::abs(sum - dF) <= 0.05 * std::abs(dF));
            ++checked;
        }
    }
    CHECK(checked >= 4);
}

TEST_CASE("IG argument validation") {
    auto model = build_model<float>(tiny_config(true), 17);
    Image img = white_image(32, 48);
    CHECK_THROWS_AS(integrated_gradients(model, img, 12, 0, 50), ConfigError);  // l2 = 12
    CHECK_THROWS_AS(integrated_gradients(model, img, -1, 0, 50), ConfigError);
    CHECK_THROWS_AS(integrated_gradients(model, img, 0, 11, 50), ConfigError);
    CHECK_THROWS_AS(integrated_gradients(model, img, 0, 0, 0), ConfigError);
    Image small = white_image(16, 48);
    CHECK_THROWS_AS(integrated_gradients(model, small, 0, 0, 1), ShapeError);

    auto blind_cfg = tiny_config(true);
    blind_cfg.collapse = CollapseMode::blind;
    auto blind = build_model<float>(blind_cfg, 17);
    CHECK_THROWS_AS(integrated_gradients(blind, img, 0, 0, 1), ConfigError);
}

TEST_CASE("smoothgrad-abs: sigma=0 n=1 equals |IG|, maps are non-negative, seeds reproduce") {
    auto vocab = Vocabulary::from_characters("0123456789 ");
    auto pages = generate(tiny_page(4), vocab, 1);
    auto model = build_model<float>(tiny_config(true), 17);
    const auto& img = pages[0].image;

    auto ig = integrated_gradients(model, img, 5, 3, 10);
    auto sg0 = smoothgrad_abs(model, img, 5, 3, 1, 0.0, 1, 10);
    REQUIRE(sg0.heat.size() == ig.heat.size());
    for (std::size_t i = 0; i < ig.heat.size(); ++i) CHECK(sg0.heat[i] == std::abs(ig.heat[i]));

    auto sg1 = smoothgrad_abs(model, img, 5, 3, 3, 0.1, 9, 10);
    auto sg2 = smoothgrad_abs(model, img, 5, 3, 3, 0.1, 9, 10);
    bool differs_from_clean = false;
    for (std::size_t i = 0; i < sg1.heat.size(); ++i) {
        CHECK(sg1.heat[i] >= 0.0);
        REQUIRE(sg1.heat[i] == sg2.heat[i]);  // bit-exact reproduction
        if (sg1.heat[i] != sg0.heat[i]) differs_from_clean = true;
    }
    CHECK(differs_from_clean);

    CHECK_THROWS_AS(smoothgrad_abs(model, img, 5, 3, 0, 0.1), ConfigError);
    CHECK_THROWS_AS(smoothgrad_abs(model, img, 5, 3, 1, -0.5), ConfigError);
}

TEST_CASE("select_character_frames picks run starts (or middles) per decoded char") {
    // frames: blank, a, a, blank, b  with a=1, b=2
    const std::vector<double> scores = {
        9, 0, 0,  // blank
        0, 9, 0,  // a
        0, 9, 0,  // a
        9, 0, 0,  // blank
        0, 0, 9,  // b
    };
    auto t = Tensor<double>::from_data({5, 3}, scores);
    auto got = select_character_frames(t);
    REQUIRE(got.size() == 2);
    CHECK(got[0].frame_index == 1);
    CHECK(got[0].class_index == 1);
    CHECK(got[0].char_position == 0);
    CHECK(got[1].frame_index == 4);
    CHECK(got[1].class_index == 2);
    CHECK(got[1].char_position == 1);

    // middle of a 3-frame run
    const std::vector<double> run3 = {
        0, 9, 0,
        0, 9, 0,
        0, 9, 0,
        9, 0, 0,
    };
    auto mid = select_character_frames(Tensor<double>::from_data({4, 3}, run3),
                                       FramePick::run_middle);
    REQUIRE(mid.size() == 1);
    CHECK(mid[0].frame_index == 1);

    // all blank -> empty
    const std::vector<double> blanks = {9, 0, 0, 9, 0, 0};
    CHECK(select_character_frames(Tensor<double>::from_data({2, 3}, blanks)).empty());

    // entry count always equals the greedy decode length; frames agree with run_starts
    auto vocab = Vocabulary::from_characters("0123456789 ");
    auto pages = generate(tiny_page(7), vocab, 2);
    auto model = build_model<float>(tiny_config(true), 3);
    for (const auto& page : pages) {
        auto frames = select_character_frames(model, page.image);
        NoGradGuard ng;
        auto out = model.forward(to_tensor(page.image));
        auto dec = greedy_decode(slice_axis0(out, 0));
        REQUIRE(frames.size() == dec.labels.size());
        for (std::size_t i = 0; i < frames.size(); ++i) {
            CHECK(frames[i].frame_index == dec.run_starts[i]);
            CHECK(frames[i].class_index == dec.labels[i]);
            CHECK(frames[i].char_position == static_cast<std::int64_t>(i));
        }
    }
}

TEST_CASE("otsu: bimodal separation, constant map, exhaustive verification") {
    AttributionMap bimodal;
    bimodal.h = 10;
    bimodal.w = 10;
    bimodal.heat.assign(100, 0.0);
    for (int i = 50; i < 100; ++i) bimodal.heat[static_cast<std::size_t>(i)] = 1.0;
    CHECK(otsu_bin(bimodal) == 0);  // every t in 0..254 ties; lower wins
    auto mask = otsu_threshold(bimodal);
    for (int i = 0; i < 100; ++i)
        CHECK(mask.mask[static_cast<std::size_t>(i)] == (i >= 50 ? 1 : 0));

    AttributionMap flat;
    flat.h = 4;
    flat.w = 4;
    flat.heat.assign(16, 0.7);
    CHECK(otsu_bin(flat) == -1);
    auto zeros = otsu_threshold(flat);
    for (auto m : zeros.mask) CHECK(m == 0);

    // three-level map, threshold cross-checked by exhaustive scan
    AttributionMap tri;
    tri.h = 10;
    tri.w = 10;
    tri.heat.assign(100, 0.0);
    for (int i = 60; i < 90; ++i) tri.heat[static_cast<std::size_t>(i)] = 0.5;
    for (int i = 90; i < 100; ++i) tri.heat[static_cast<std::size_t>(i)] = 1.0;

    std::array<std::int64_t, 256> hist{};
    for (double v : tri.heat) {
        const int b = std::min(255, static_cast<int>((v - 0.0) / (1.0 - 0.0) * 256.0));
        ++hist[static_cast<std::size_t>(b)];
    }
    int best = 0;
    double best_var = -1.0;
    for (int t = 0; t < 256; ++t) {
        double cum0 = 0, sum0 = 0, total_sum = 0;
        for (int b = 0; b < 256; ++b) {
            total_sum += static_cast<double>(b) * static_cast<double>(hist[static_cast<std::size_t>(b)]);
            if (b <= t) {
                cum0 += static_cast<double>(hist[static_cast<std::size_t>(b)]);
                sum0 += static_cast<double>(b) * static_cast<double>(hist[static_cast<std::size_t>(b)]);
            }
        }
        double var = 0;
        if (cum0 > 0 && cum0 < 100) {
            const double mu0 = sum0 / cum0;
            const double mu1 = (total_sum - sum0) / (100 - cum0);
            var = cum0 * (100 - cum0) * (mu0 - mu1) * (mu0 - mu1);
        }
        if (var > best_var) {
            best_var = var;
            best = t;
        }
    }
    CHECK(otsu_bin(tri) == best);
}

TEST_CASE("center of mass") {
    BinaryMap m;
    m.h = 6;
    m.w = 8;
    m.mask.assign(48, 0);

    auto empty = center_of_mass(m);
    CHECK_FALSE(empty.valid);

    m.mask[static_cast<std::size_t>(3 * 8 + 5)] = 1;
    auto single = center_of_mass(m);
    CHECK(single.valid);
    CHECK(single.row == 3.0);
    CHECK(single.col == 5.0);

    // symmetric 2x2 square at rows 1-2, cols 2-3
    BinaryMap sq;
    sq.h = 6;
    sq.w = 8;
    sq.mask.assign(48, 0);
    for (int r = 1; r <= 2; ++r)
        for (int c = 2; c <= 3; ++c) sq.mask[static_cast<std::size_t>(r * 8 + c)] = 1;
    auto com = center_of_mass(sq);
    CHECK(com.row == 1.5);
    CHECK(com.col == 2.5);

    BinaryMap two;
    two.h = 2;
    two.w = 4;
    two.mask.assign(8, 0);
    two.mask[0] = 1;
    two.mask[2] = 1;
    auto pair = center_of_mass(two);
    CHECK(pair.row == 0.0);
    CHECK(pair.col == 1.0);
}

TEST_CASE("line scatter overlay: exact palette colors, faint background, comment") {
    const auto dir = fs::temp_directory_path() / "origami_interpret_test";
    fs::create_directories(dir);
    const auto path = (dir / "scatter.ppm").string();

    Image img = white_image(12, 16);
    img.at(6, 6) = 0.0f;  // one ink pixel

    // no localizations: pure faint image
    emit_line_scatter(img, {}, path);
    auto plain = read_ppm(path);
    REQUIRE(plain.h == 12);
    REQUIRE(plain.w == 16);
    CHECK(plain.pix[0] == 255);                                     // white stays white
    CHECK(plain.pix[static_cast<std::size_t>(3 * (6 * 16 + 6))] == 170);  // ink washed out

    std::vector<CharLocalization> locs = {
        {0, 2.0, 3.0, 0},
        {1, 8.2, 12.6, 1},
        {2, 5.0, 9.0, 7},  // line 7 wraps to palette[1]
    };
    emit_line_scatter(img, locs, path);
    auto rgb = read_ppm(path);
    const auto& pal = scatter_palette();
    auto px = [&](std::int64_t r, std::int64_t c) {
        const std::size_t o = static_cast<std::size_t>(3 * (r * 16 + c));
        return std::array<std::uint8_t, 3>{rgb.pix[o], rgb.pix[o + 1], rgb.pix[o + 2]};
    };
    CHECK(px(2, 3) == pal[0]);
    CHECK(px(1, 2) == pal[0]);  // 3x3 marker corner
    CHECK(px(8, 13) == pal[1]);
    CHECK(px(5, 9) == pal[static_cast<std::size_t>(7 % pal.size())]);

    // marker pixel count: three 3x3 markers, no overlap
    std::size_t colored = 0;
    for (std::size_t i = 0; i < rgb.pix.size(); i += 3)
        if (!(rgb.pix[i] == rgb.pix[i + 1] && rgb.pix[i + 1] == rgb.pix[i + 2])) ++colored;
    CHECK(colored == 27);

    std::ifstream in(path, std::ios::binary);
    std::string header(256, '\0');
    in.read(header.data(), 256);
    CHECK(header.find("palette 230,25,75") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("heat map PGM dump is the min-max normalized map") {
    const auto dir = fs::temp_directory_path() / "origami_interpret_pgm";
    fs::create_directories(dir);
    const auto path = (dir / "heat.pgm").string();

    AttributionMap m;
    m.h = 2;
    m.w = 3;
    m.heat = {-1.0, 0.0, 3.0, 1.0, -1.0, 3.0};
    m.frame_index = 4;
    m.class_index = 2;
    save_heatmap_pgm(m, path);
    auto img = read_pgm(path);
    REQUIRE(img.h == 2);
    REQUIRE(img.w == 3);
    CHECK(img.pix[0] == 0.0f);
    CHECK(img.pix[2] == 1.0f);
    CHECK(img.pix[1] == doctest::Approx(0.25).epsilon(0.01));  // quantized to 8 bits
    fs::remove_all(dir);
}

TEST_CASE("localization pipeline on a memorized page lands inside the line band") {
    auto vocab = Vocabulary::from_characters("0123456789 ");
    auto pages = generate(tiny_page(9), vocab, 1);
    std::vector<LabeledSample> copies(50, pages[0]);

    auto cfg = tiny_config(false);
    auto model = build_model<float>(cfg, 17);
    TrainConfig tc;
    tc.max_steps = 300;
    tc.batch = 4;
    tc.eval_interval = 100;
    tc.seed = 5;
    tc.lr_start = 1e-3;
    tc.lr_end = 1e-4;
    auto res = train(model, copies, {pages[0]}, vocab, tc);
    REQUIRE(res.best_cer == 0.0);

    auto locs = localize_characters(model, pages[0], vocab, 3, 0.05, 1, 25);
    REQUIRE(locs.size() == pages[0].transcript.size());
    REQUIRE(pages[0].line_bands.size() == 1);
    const auto band = pages[0].line_bands[0];
    for (const auto& loc : locs) {
        CHECK(loc.line_assignment == 0);  // exact decode carries ground truth
        CHECK(loc.row >= 0.0);
        CHECK(loc.row <= 31.0);
        CHECK(loc.col >= 0.0);
        CHECK(loc.col <= 47.0);
        CHECK(loc.row >= static_cast<double>(band.row_start) - 4.0);
        CHECK(loc.row <= static_cast<double>(band.row_end) + 4.0);
    }

    const auto dir = fs::temp_directory_path() / "origami_interpret_loc";
    fs::create_directories(dir);
    emit_line_scatter(pages[0].image, locs, (dir / "lines.ppm").string());
    CHECK(fs::exists(dir / "lines.ppm"));
    fs::remove_all(dir);
}
