#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "origami/cli.hpp"
#include "origami/data.hpp"
#include "origami/model.hpp"
#include "origami/train.hpp"

using namespace origami;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code;
    std::string out;
    std::string err;
};

RunResult run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "origami-test-cli" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// 32x48 single-line pages and the matching model, sized for fast test runs
std::vector<std::string> tiny_gen_args(const std::string& out_dir) {
    return {"gen-data", "--out", out_dir,    "--n",     "5",  "--lines", "1",
            "--chars-per-line", "2",         "--height", "32", "--width", "48",
            "--seed", "9"};
}

std::vector<std::string> tiny_model_args() {
    return {"--input-h", "32", "--input-w", "48", "--l1", "8", "--l2", "12",
            "--channels", "6,6,8,10,12,12,12"};
}

void append(std::vector<std::string>& args, const std::vector<std::string>& extra) {
    args.insert(args.end(), extra.begin(), extra.end());
}

ModelConfig tiny_model_config(int num_classes) {
    ModelConfig cfg;
    cfg.input_h = 32;
    cfg.input_w = 48;
    cfg.l1 = 8;
    cfg.l2 = 12;
    cfg.channels = {6, 6, 8, 10, 12, 12, 12};
    cfg.num_classes = num_classes;
    return cfg;
}

// checkpoint whose greedy decode is forced by a decoder bias: every frame's
// argmax becomes `cls` (0 = blank = empty decode) regardless of the weights
std::string biased_checkpoint(const fs::path& dir, int cls) {
    auto model = build_model<float>(tiny_model_config(12), 4);
    auto bias = model.param("dec.conv8.b");
    for (std::int64_t c = 0; c < 12; ++c) bias.data()[c] = c == cls ? 20.0f : -20.0f;
    const auto path = (dir / ("biased" + std::to_string(cls) + ".ckpt")).string();
    save_checkpoint(model, path);
    return path;
}

}  // namespace

TEST_CASE("help and command dispatch") {
    auto r = run({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("usage:") != std::string::npos);
    CHECK(r.out.find("gen-data") != std::string::npos);
    CHECK(r.out.find("ablate-collapse") != std::string::npos);
    CHECK(r.out.find("--lr-start") != std::string::npos);

    CHECK(run({}).code == 1);                       // no command
    CHECK(run({"frobnicate"}).code == 1);           // unknown command
    CHECK(run({"gen-data", "--help"}).code == 0);   // per-command help
}

TEST_CASE("option parsing rejects bad input") {
    const auto dir = fresh_dir("parse");
    auto bogus = run({"gen-data", "--out", (dir / "d").string(), "--bogus", "3"});
    CHECK(bogus.code == 1);
    CHECK(bogus.err.find("unknown option '--bogus'") != std::string::npos);

    auto notint = run({"gen-data", "--out", (dir / "d").string(), "--n", "xyz"});
    CHECK(notint.code == 1);
    CHECK(notint.err.find("not an integer") != std::string::npos);

    auto notreal = run({"gen-data", "--out", (dir / "d").string(), "--rot-deg", "big"});
    CHECK(notreal.code == 1);

    auto dangling = run({"gen-data", "--out"});
    CHECK(dangling.code == 1);
    CHECK(dangling.err.find("needs a value") != std::string::npos);

    auto nodashes = run({"gen-data", "out", "d"});
    CHECK(nodashes.code == 1);

    auto noout = run({"gen-data", "--n", "3"});
    CHECK(noout.code == 1);
    CHECK(noout.err.find("--out") != std::string::npos);
}

TEST_CASE("gen-data writes a loadable dataset and a histogram") {
    const auto dir = fresh_dir("gen");
    const auto data = (dir / "data").string();
    auto r = run(tiny_gen_args(data));
    CHECK(r.code == 0);
    CHECK(r.out.find("wrote 5 samples") != std::string::npos);
    CHECK(r.out.find("transcript length 2: 5") != std::string::npos);

    auto ds = load_dataset(data);
    REQUIRE(ds.samples.size() == 5);
    for (const auto& s : ds.samples) {
        CHECK(s.image.h == 32);
        CHECK(s.image.w == 48);
        CHECK(s.transcript.size() == 2);
    }
    CHECK(fs::exists(fs::path(data) / "resolved-config.txt"));

    // existing directory is refused unless --force (bare boolean form)
    auto again = run(tiny_gen_args(data));
    CHECK(again.code == 1);
    CHECK(again.err.find("already exists") != std::string::npos);
    auto forced_args = tiny_gen_args(data);
    forced_args.push_back("--force");
    CHECK(run(forced_args).code == 0);
}

TEST_CASE("gen-data is seed-deterministic and seed-sensitive") {
    const auto dir = fresh_dir("det");
    const auto a = (dir / "a").string(), b = (dir / "b").string(), c = (dir / "c").string();
    REQUIRE(run(tiny_gen_args(a)).code == 0);
    REQUIRE(run(tiny_gen_args(b)).code == 0);
    auto other_seed = tiny_gen_args(c);
    other_seed.back() = "10";
    REQUIRE(run(other_seed).code == 0);

    CHECK(slurp(fs::path(a) / "000002.pgm") == slurp(fs::path(b) / "000002.pgm"));
    CHECK(slurp(fs::path(a) / "000002.gt.txt") == slurp(fs::path(b) / "000002.gt.txt"));
    bool any_differs = false;
    for (int i = 0; i < 5; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%06d.pgm", i);
        any_differs = any_differs || slurp(fs::path(a) / name) != slurp(fs::path(c) / name);
    }
    CHECK(any_differs);
}

TEST_CASE("gen-data distortions change geometry as advertised") {
    const auto dir = fresh_dir("distort");
    auto compact = tiny_gen_args((dir / "compact").string());
    append(compact, {"--distort", "compact", "--height", "40"});
    REQUIRE(run(compact).code == 0);
    auto ds = load_dataset((dir / "compact").string());
    for (const auto& s : ds.samples) CHECK(s.image.h == 20);  // floor(40/2)

    auto flip = tiny_gen_args((dir / "flip").string());
    append(flip, {"--distort", "flip"});
    REQUIRE(run(flip).code == 0);
    auto plain = load_dataset((dir / "compact").string());  // different data; just existence
    auto flipped = load_dataset((dir / "flip").string());
    CHECK(flipped.samples.size() == 5);

    auto bad = tiny_gen_args((dir / "bad").string());
    append(bad, {"--distort", "vortex"});
    auto r = run(bad);
    CHECK(r.code == 1);
    CHECK(r.err.find("vortex") != std::string::npos);
}

TEST_CASE("config file plus overrides, last one wins") {
    const auto dir = fresh_dir("config");
    const auto cfg = dir / "run.cfg";
    {
        std::ofstream f(cfg);
        f << "# tiny pages\n";
        f << "n = 4\n";
        f << "height=40\n";
        f << "lines=1\n";
        f << "chars-per-line=2\n";
        f << "width=48\n";
        f << "seed=9\n";
    }
    const auto data = (dir / "data").string();
    auto r = run({"gen-data", "--config", cfg.string(), "--height", "32", "--out", data});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("wrote 4 samples") != std::string::npos);
    auto ds = load_dataset(data);
    CHECK(ds.samples[0].image.h == 32);  // override beat the file

    const std::string resolved = slurp(fs::path(data) / "resolved-config.txt");
    CHECK(resolved.find("height=32\n") != std::string::npos);
    CHECK(resolved.find("n=4\n") != std::string::npos);

    // a resolved config replays to byte-identical data
    const auto replay = (dir / "replay").string();
    auto r2 = run({"gen-data", "--config", (fs::path(data) / "resolved-config.txt").string(),
                   "--out", replay});
    REQUIRE(r2.code == 0);
    for (int i = 0; i < 4; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%06d.pgm", i);
        CHECK(slurp(fs::path(data) / name) == slurp(fs::path(replay) / name));
    }

    // config file errors: unknown key, malformed line, missing file
    {
        std::ofstream f(cfg);
        f << "no-such-key=1\n";
    }
    auto bad = run({"gen-data", "--config", cfg.string(), "--out", (dir / "x").string()});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("no-such-key") != std::string::npos);
    {
        std::ofstream f(cfg);
        f << "just a line\n";
    }
    CHECK(run({"gen-data", "--config", cfg.string(), "--out", (dir / "x").string()}).code == 1);
    auto missing = run({"gen-data", "--config", (dir / "gone.cfg").string(), "--out",
                        (dir / "x").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("cannot open") != std::string::npos);
}

TEST_CASE("train then eval on a tiny run") {
    const auto dir = fresh_dir("train");
    const auto data = (dir / "data").string();
    REQUIRE(run(tiny_gen_args(data)).code == 0);

    const auto out = (dir / "run").string();
    std::vector<std::string> args = {"train", "--data", data, "--out", out};
    append(args, tiny_model_args());
    append(args, {"--use-ln", "false", "--lr-start", "0.001", "--lr-end", "0.0001",
                  "--max-steps", "60", "--eval-interval", "20", "--batch", "5", "--seed", "3"});
    auto r = run(args);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("steps: 60") != std::string::npos);
    CHECK(r.out.find("final cer:") != std::string::npos);
    CHECK(fs::exists(fs::path(out) / "best.ckpt"));
    CHECK(fs::exists(fs::path(out) / "final.ckpt"));
    CHECK(fs::exists(fs::path(out) / "train-log.csv"));
    CHECK(slurp(fs::path(out) / "train-log.csv").find("step,loss,lr,cer") == 0);
    CHECK(fs::exists(fs::path(out) / "resolved-config.txt"));

    // eval prints the same corpus CER the library computes, and writes predictions
    const auto ev = (dir / "eval").string();
    auto re = run({"eval", "--checkpoint", (fs::path(out) / "best.ckpt").string(), "--data",
                   data, "--out", ev, "--batch", "4"});
    REQUIRE(re.code == 0);
    auto model = load_checkpoint((fs::path(out) / "best.ckpt").string());
    auto expected = evaluate(model, load_dataset(data).samples,
                             Vocabulary::from_characters("0123456789 "), 4);
    char want[64];
    std::snprintf(want, sizeof want, "corpus cer: %.6f", expected.corpus_cer);
    CHECK(re.out.find(want) != std::string::npos);
    std::snprintf(want, sizeof want, "ncer: %.6f", expected.ncer);
    CHECK(re.out.find(want) != std::string::npos);
    const std::string preds = slurp(fs::path(ev) / "predictions.txt");
    CHECK(std::count(preds.begin(), preds.end(), '\n') == 5);
    CHECK(preds.find("000000\t") != std::string::npos);

    // vocabulary mismatches are config errors
    auto rv = run({"eval", "--checkpoint", (fs::path(out) / "best.ckpt").string(), "--data",
                   data, "--out", ev, "--vocab", "012"});
    CHECK(rv.code == 1);
    CHECK(rv.err.find("classes") != std::string::npos);
}

TEST_CASE("train warm-starts from a checkpoint with init-from") {
    const auto dir = fresh_dir("warm");
    const auto data = (dir / "data").string();
    REQUIRE(run(tiny_gen_args(data)).code == 0);

    const auto cold = (dir / "cold").string();
    std::vector<std::string> args = {"train", "--data", data, "--out", cold};
    append(args, tiny_model_args());
    append(args, {"--use-ln", "false", "--lr-start", "0.001", "--lr-end", "0.001",
                  "--max-steps", "10", "--eval-interval", "10", "--batch", "5", "--seed", "3"});
    REQUIRE(run(args).code == 0);

    // the warm run takes its model config from the checkpoint, not the flags
    const auto warm = (dir / "warm").string();
    auto rw = run({"train", "--data", data, "--out", warm, "--init-from",
                   (fs::path(cold) / "final.ckpt").string(), "--lr-start", "0.001", "--lr-end",
                   "0.001", "--max-steps", "5", "--eval-interval", "5", "--batch", "5", "--seed",
                   "4"});
    REQUIRE(rw.code == 0);
    auto resumed = load_checkpoint((fs::path(warm) / "final.ckpt").string());
    auto origin = load_checkpoint((fs::path(cold) / "final.ckpt").string());
    CHECK(resumed.config().l2 == origin.config().l2);

    auto missing = run({"train", "--data", data, "--out", (dir / "x").string(), "--init-from",
                        (dir / "nope.ckpt").string()});
    CHECK(missing.code == 2);

    const auto bin_data = (dir / "bin-data").string();
    auto bin_args = tiny_gen_args(bin_data);
    append(bin_args, {"--vocab", "01"});
    REQUIRE(run(bin_args).code == 0);
    auto clash = run({"train", "--data", bin_data, "--out", (dir / "y").string(), "--vocab",
                      "01", "--init-from", (fs::path(cold) / "final.ckpt").string()});
    CHECK(clash.code == 1);
    CHECK(clash.err.find("classes") != std::string::npos);
}

TEST_CASE("train rejects transcripts outside the vocabulary") {
    const auto dir = fresh_dir("cover");
    const auto data = (dir / "data").string();
    REQUIRE(run(tiny_gen_args(data)).code == 0);
    bool beyond_01 = false;
    for (const auto& s : load_dataset(data).samples)
        for (char c : s.transcript) beyond_01 = beyond_01 || c > '1';
    REQUIRE(beyond_01);

    std::vector<std::string> args = {"train", "--data", data, "--out",
                                     (dir / "run").string(), "--vocab", "01"};
    append(args, tiny_model_args());
    auto r = run(args);
    CHECK(r.code == 1);
    CHECK(r.err.find("not in the vocabulary") != std::string::npos);
}

TEST_CASE("attribute single_char and line_scatter") {
    const auto dir = fresh_dir("attr");
    const auto data = (dir / "data").string();
    REQUIRE(run(tiny_gen_args(data)).code == 0);

    // forced non-blank decode: exactly one decoded character
    const auto ck = biased_checkpoint(dir, 3);
    const auto out = (dir / "one").string();
    auto r = run({"attribute", "--checkpoint", ck, "--data", data, "--out", out,
                  "--sample-id", "1", "--mode", "single_char", "--sg-n", "1", "--sg-sigma",
                  "0", "--steps", "4"});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(fs::path(out) / "attr-sample1-char0.pgm"));
    CHECK(slurp(fs::path(out) / "attr-sample1-char0.pgm").rfind("P5", 0) == 0);

    // --char narrows to one file; out-of-range --char is a config error
    const auto out2 = (dir / "narrow").string();
    auto r2 = run({"attribute", "--checkpoint", ck, "--data", data, "--out", out2,
                   "--sample-id", "0", "--mode", "single_char", "--char", "0", "--sg-n", "1",
                   "--sg-sigma", "0", "--steps", "4"});
    REQUIRE(r2.code == 0);
    int pgms = 0;
    for (const auto& e : fs::directory_iterator(out2))
        pgms += e.path().extension() == ".pgm" ? 1 : 0;
    CHECK(pgms == 1);
    auto rr = run({"attribute", "--checkpoint", ck, "--data", data, "--out", out2,
                   "--sample-id", "0", "--mode", "single_char", "--char", "7"});
    CHECK(rr.code == 1);
    CHECK(rr.err.find("--char 7") != std::string::npos);

    // forced blank decode: warning, exit 0, no files
    const auto blank_ck = biased_checkpoint(dir, 0);
    const auto out3 = (dir / "empty").string();
    auto r3 = run({"attribute", "--checkpoint", blank_ck, "--data", data, "--out", out3,
                   "--sample-id", "0", "--mode", "single_char"});
    CHECK(r3.code == 0);
    CHECK(r3.out.find("warning: decode is empty") != std::string::npos);
    CHECK(!fs::exists(out3));

    // line_scatter writes one PPM and reports the marker count
    const auto out4 = (dir / "scatter").string();
    auto r4 = run({"attribute", "--checkpoint", ck, "--data", data, "--out", out4,
                   "--sample-id", "0", "--mode", "line_scatter", "--sg-n", "1", "--sg-sigma",
                   "0", "--steps", "4"});
    REQUIRE(r4.code == 0);
    CHECK(fs::exists(fs::path(out4) / "scatter-sample0.ppm"));
    CHECK(r4.out.find("markers)") != std::string::npos);

    auto roob = run({"attribute", "--checkpoint", ck, "--data", data, "--out",
                     (dir / "oob").string(), "--sample-id", "99"});
    CHECK(roob.code == 1);
    auto rmode = run({"attribute", "--checkpoint", ck, "--data", data, "--out",
                      (dir / "m").string(), "--mode", "sideways"});
    CHECK(rmode.code == 1);
}

TEST_CASE("runtime failures exit with 2") {
    const auto dir = fresh_dir("runtime");
    auto r = run({"eval", "--checkpoint", (dir / "missing.ckpt").string(), "--data",
                  (dir / "nodata").string(), "--out", (dir / "o").string()});
    CHECK(r.code == 2);
    CHECK(!r.err.empty());

    auto r2 = run({"train", "--data", (dir / "nodata").string(), "--out",
                   (dir / "o").string()});
    CHECK(r2.code == 2);
}

TEST_CASE("ablate-collapse trains both arms and prints the gap") {
    const auto dir = fresh_dir("ablate");
    const auto data = (dir / "data").string();
    REQUIRE(run(tiny_gen_args(data)).code == 0);

    const auto out = (dir / "abl").string();
    std::vector<std::string> args = {"ablate-collapse", "--data", data, "--out", out};
    append(args, tiny_model_args());
    append(args, {"--max-steps", "4", "--eval-interval", "4", "--batch", "5", "--seed", "3"});
    auto r = run(args);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("origami cer:") != std::string::npos);
    CHECK(r.out.find("blind cer:") != std::string::npos);
    CHECK(r.out.find("cer gap:") != std::string::npos);
    CHECK(fs::exists(fs::path(out) / "origami" / "final.ckpt"));
    CHECK(fs::exists(fs::path(out) / "blind" / "final.ckpt"));
    CHECK(fs::exists(fs::path(out) / "resolved-config.txt"));

    // the blind arm reuses the origami geometry; both checkpoints reload
    auto a = load_checkpoint((fs::path(out) / "origami" / "final.ckpt").string());
    auto b = load_checkpoint((fs::path(out) / "blind" / "final.ckpt").string());
    CHECK(a.config().collapse == CollapseMode::origami);
    CHECK(b.config().collapse == CollapseMode::blind);
}
