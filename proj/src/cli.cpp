#include "origami/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "origami/ctc.hpp"
#include "origami/data.hpp"
#include "origami/errors.hpp"
#include "origami/interpret.hpp"
#include "origami/model.hpp"
#include "origami/train.hpp"

namespace origami {

namespace fs = std::filesystem;

namespace {

enum class KeyType { integer, real, boolean, text };

struct KeyDef {
    std::string name;
    KeyType type;
    std::string def;
    std::string help;
};

std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_fixed(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

const std::vector<KeyDef>& registry() {
    static const std::vector<KeyDef> kKeys = [] {
        const PageSpec dp;
        const ModelConfig dm;
        const TrainConfig dt;
        std::string channels;
        for (std::size_t i = 0; i < dm.channels.size(); ++i)
            channels += (i ? "," : "") + std::to_string(dm.channels[i]);
        auto I = [](std::int64_t v) { return std::to_string(v); };
        auto R = [](double v) { return fmt_real(v); };
        std::vector<KeyDef> keys = {
            // shared
            {"out", KeyType::text, "", "output directory for this run"},
            {"data", KeyType::text, "", "dataset directory"},
            {"eval-data", KeyType::text, "", "evaluation dataset directory (default: data)"},
            {"checkpoint", KeyType::text, "", "model checkpoint to load"},
            {"init-from", KeyType::text, "",
             "warm-start training from this checkpoint (model config comes from it)"},
            {"seed", KeyType::integer, "1", "seed for data, init, and batch order"},
            {"vocab", KeyType::text, "0123456789",
             "drawable characters; the line-joining space is always added"},
            {"force", KeyType::boolean, "false", "overwrite an existing dataset directory"},
            // gen-data
            {"n", KeyType::integer, "100", "number of pages to generate"},
            {"height", KeyType::integer, I(dp.height), "page height, px"},
            {"width", KeyType::integer, I(dp.width), "page width, px"},
            {"lines", KeyType::integer, std::to_string(dp.lines), "text lines per page"},
            {"chars-min", KeyType::integer, std::to_string(dp.chars_min),
             "minimum characters per line"},
            {"chars-max", KeyType::integer, std::to_string(dp.chars_max),
             "maximum characters per line"},
            {"chars-per-line", KeyType::integer, "0",
             "sets chars-min and chars-max together (0 = keep them)"},
            {"gap-min", KeyType::integer, std::to_string(dp.gap_min), "minimum interline gap, px"},
            {"gap-max", KeyType::integer, std::to_string(dp.gap_max), "maximum interline gap, px"},
            {"jitter", KeyType::integer, std::to_string(dp.jitter),
             "per-character vertical jitter, px"},
            {"margin", KeyType::integer, std::to_string(dp.margin), "page margin, px"},
            {"scale", KeyType::integer, std::to_string(dp.scale), "glyph cell magnification"},
            {"distort", KeyType::text, "none",
             "none | compact | projective | elastic | flip"},
            {"rot-deg", KeyType::real, "4", "projective: max rotation, degrees"},
            {"scale-jitter", KeyType::real, "0.1", "projective: max per-axis scale jitter"},
            {"alpha", KeyType::real, "2", "elastic: max displacement, px"},
            {"sigma", KeyType::real, "4", "elastic: smoothing radius, px"},
            // model
            {"model", KeyType::text, to_string(dm.backbone), "vgg_s | resnet_s | gated_s"},
            {"collapse", KeyType::text, to_string(dm.collapse), "origami | blind"},
            {"depth-mult", KeyType::integer, std::to_string(dm.depth_mult),
             "blocks per encoder stage"},
            {"input-h", KeyType::integer, I(dm.input_h), "model input height, px"},
            {"input-w", KeyType::integer, I(dm.input_w), "model input width, px"},
            {"l1", KeyType::integer, I(dm.l1), "first unfold length, frames"},
            {"l2", KeyType::integer, I(dm.l2), "final unfold length, frames"},
            {"w1", KeyType::integer, I(dm.w1), "first unfold width (0 = input-w/32)"},
            {"final-w", KeyType::integer, I(dm.final_w),
             "final unfold width (0 = round(input-w/64))"},
            {"channels", KeyType::text, channels, "7 comma-separated stage widths"},
            {"use-ln", KeyType::boolean, dm.use_ln ? "true" : "false",
             "static layer norm as first and last layer"},
            {"conv1-kernel", KeyType::integer, std::to_string(dm.conv1_kernel),
             "stem kernel size (odd)"},
            // train
            {"lr-start", KeyType::real, R(dt.lr_start), "initial learning rate"},
            {"lr-end", KeyType::real, R(dt.lr_end), "learning rate after decay-steps"},
            {"decay-steps", KeyType::integer, I(dt.decay_steps), "exponential decay horizon"},
            {"batch", KeyType::integer, I(dt.batch), "batch size"},
            {"max-steps", KeyType::integer, I(dt.max_steps), "training steps"},
            {"eval-interval", KeyType::integer, I(dt.eval_interval), "steps between evaluations"},
            {"beta1", KeyType::real, R(dt.beta1), "Adam first-moment decay"},
            {"beta2", KeyType::real, R(dt.beta2), "Adam second-moment decay"},
            {"adam-eps", KeyType::real, R(dt.eps), "Adam epsilon"},
            {"max-skip-frac", KeyType::real, R(dt.max_skip_frac),
             "largest tolerated fraction of CTC-infeasible samples"},
            {"grad-clip", KeyType::real, R(dt.grad_clip), "global gradient-norm clip (0 = off)"},
            {"target-cer", KeyType::real, R(dt.target_cer),
             "stop when evaluation CER reaches this (0 = run all steps)"},
            {"blind-max-skip-frac", KeyType::real, "1",
             "max-skip-frac for the blind arm of ablate-collapse"},
            // attribute
            {"sample-id", KeyType::integer, "0", "dataset sample to attribute"},
            {"mode", KeyType::text, "line_scatter", "single_char | line_scatter"},
            {"char", KeyType::integer, "-1", "single_char: one decoded character (-1 = all)"},
            {"steps", KeyType::integer, "50", "integrated-gradients path steps"},
            {"sg-n", KeyType::integer, "5", "smoothgrad samples"},
            {"sg-sigma", KeyType::real, "0.1", "smoothgrad noise sigma"},
            {"ig-chunk", KeyType::integer, "25", "path points per forward batch"},
        };
        return keys;
    }();
    return kKeys;
}

const KeyDef* find_key(const std::string& name) {
    for (const auto& k : registry())
        if (k.name == name) return &k;
    return nullptr;
}

class Options {
public:
    Options() {
        for (const auto& k : registry()) values_[k.name] = k.def;
    }

    void set(const std::string& key, const std::string& value) {
        const KeyDef* def = find_key(key);
        if (!def) throw ConfigError("unknown option '" + key + "' (see --help)");
        validate_typed(*def, value);
        values_[key] = value;
    }

    std::int64_t geti(const std::string& key) const {
        return parse_int(*find_key(key), values_.at(key));
    }
    double getd(const std::string& key) const {
        return parse_real(*find_key(key), values_.at(key));
    }
    bool getb(const std::string& key) const {
        return parse_bool(*find_key(key), values_.at(key));
    }
    const std::string& gets(const std::string& key) const { return values_.at(key); }

    // canonical echo, replayable via --config
    void write_resolved(const std::string& dir) const {
        const auto path = fs::path(dir) / "resolved-config.txt";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        for (const auto& k : registry()) {
            std::string v = values_.at(k.name);
            switch (k.type) {
                case KeyType::integer: v = std::to_string(parse_int(k, v)); break;
                case KeyType::real: v = fmt_real(parse_real(k, v)); break;
                case KeyType::boolean: v = parse_bool(k, v) ? "true" : "false"; break;
                case KeyType::text: break;
            }
            out << k.name << "=" << v << "\n";
        }
    }

private:
    static std::int64_t parse_int(const KeyDef& k, const std::string& v) {
        try {
            std::size_t used = 0;
            const long long r = std::stoll(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw ConfigError("option '" + k.name + "': not an integer: '" + v + "'");
        }
    }
    static double parse_real(const KeyDef& k, const std::string& v) {
        try {
            std::size_t used = 0;
            const double r = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw ConfigError("option '" + k.name + "': not a number: '" + v + "'");
        }
    }
    static bool parse_bool(const KeyDef& k, const std::string& v) {
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("option '" + k.name + "': not a boolean: '" + v + "'");
    }
    static void validate_typed(const KeyDef& k, const std::string& v) {
        switch (k.type) {
            case KeyType::integer: parse_int(k, v); break;
            case KeyType::real: parse_real(k, v); break;
            case KeyType::boolean: parse_bool(k, v); break;
            case KeyType::text: break;
        }
    }

    std::map<std::string, std::string> values_;
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

void apply_config_file(Options& opts, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + t + "'");
        opts.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
}

// args after the subcommand; returns true if --help was requested
bool apply_args(Options& opts, const std::vector<std::string>& args, std::size_t start) {
    for (std::size_t i = start; i < args.size(); ++i) {
        const std::string& tok = args[i];
        if (tok.rfind("--", 0) != 0)
            throw ConfigError("expected an option starting with --, got '" + tok + "'");
        const std::string name = tok.substr(2);
        if (name == "help") return true;
        if (name == "config") {
            if (i + 1 >= args.size()) throw ConfigError("--config needs a file path");
            apply_config_file(opts, args[++i]);
            continue;
        }
        const KeyDef* def = find_key(name);
        if (!def) throw ConfigError("unknown option '--" + name + "' (see --help)");
        const bool bare_bool = def->type == KeyType::boolean &&
                               (i + 1 >= args.size() || args[i + 1].rfind("--", 0) == 0);
        if (bare_bool) {
            opts.set(name, "true");
        } else {
            if (i + 1 >= args.size()) throw ConfigError("option '--" + name + "' needs a value");
            opts.set(name, args[++i]);
        }
    }
    return false;
}

void print_help(std::ostream& out) {
    out << "usage: origami <command> [--config FILE] [--key value ...]\n"
        << "\n"
        << "commands:\n"
        << "  gen-data         write a synthetic page dataset (+ optional distortion)\n"
        << "  train            train a recognizer; logs CSV, saves best/final checkpoints\n"
        << "  eval             evaluate a checkpoint; prints corpus CER and nCER\n"
        << "  attribute        emit attribution heat maps or a line-colored scatter\n"
        << "  ablate-collapse  train the origami-vs-blind pair and print the CER gap\n"
        << "\n"
        << "Options may come from key=value lines in --config files and from --key value\n"
        << "overrides, applied left to right (last wins).  Each run writes the resolved\n"
        << "set to <out>/resolved-config.txt, replayable via --config.\n"
        << "\n"
        << "options (default):\n";
    for (const auto& k : registry()) {
        std::string head = "  --" + k.name;
        if (!k.def.empty() || k.type != KeyType::text)
            head += " (" + (k.def.empty() ? std::string("''") : k.def) + ")";
        out << head << "\n      " << k.help << "\n";
    }
}

std::string require_dir_key(const Options& opts, const std::string& key,
                            const std::string& cmd) {
    const std::string& v = opts.gets(key);
    if (v.empty()) throw ConfigError(cmd + ": --" + key + " must be set");
    return v;
}

Vocabulary make_vocab(const Options& opts) {
    std::string chars = opts.gets("vocab");
    if (chars.find(' ') == std::string::npos) chars += ' ';  // line joiner
    return Vocabulary::from_characters(chars);
}

PageSpec make_page_spec(const Options& opts) {
    PageSpec spec;
    spec.height = opts.geti("height");
    spec.width = opts.geti("width");
    spec.lines = static_cast<int>(opts.geti("lines"));
    spec.chars_min = static_cast<int>(opts.geti("chars-min"));
    spec.chars_max = static_cast<int>(opts.geti("chars-max"));
    const auto per_line = opts.geti("chars-per-line");
    if (per_line > 0) {
        spec.chars_min = static_cast<int>(per_line);
        spec.chars_max = static_cast<int>(per_line);
    }
    spec.gap_min = static_cast<int>(opts.geti("gap-min"));
    spec.gap_max = static_cast<int>(opts.geti("gap-max"));
    spec.jitter = static_cast<int>(opts.geti("jitter"));
    spec.margin = static_cast<int>(opts.geti("margin"));
    spec.scale = static_cast<int>(opts.geti("scale"));
    spec.seed = static_cast<std::uint64_t>(opts.geti("seed"));
    return spec;
}

ModelConfig make_model_config(const Options& opts, const Vocabulary& vocab) {
    ModelConfig mc;
    mc.backbone = backbone_from_string(opts.gets("model"));
    mc.collapse = collapse_from_string(opts.gets("collapse"));
    mc.depth_mult = static_cast<int>(opts.geti("depth-mult"));
    mc.input_h = opts.geti("input-h");
    mc.input_w = opts.geti("input-w");
    mc.l1 = opts.geti("l1");
    mc.l2 = opts.geti("l2");
    mc.w1 = opts.geti("w1");
    mc.final_w = opts.geti("final-w");
    mc.use_ln = opts.getb("use-ln");
    mc.conv1_kernel = static_cast<int>(opts.geti("conv1-kernel"));
    mc.num_classes = vocab.size();

    const std::string& csv = opts.gets("channels");
    std::vector<std::int64_t> channels;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        try {
            std::size_t used = 0;
            channels.push_back(std::stoll(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("option 'channels': bad entry '" + item + "' in '" + csv + "'");
        }
    }
    if (channels.size() != mc.channels.size())
        throw ConfigError("option 'channels': need " + std::to_string(mc.channels.size()) +
                          " comma-separated values, got " + std::to_string(channels.size()));
    std::copy(channels.begin(), channels.end(), mc.channels.begin());
    return mc;
}

TrainConfig make_train_config(const Options& opts, const std::string& out_dir) {
    TrainConfig tc;
    tc.lr_start = opts.getd("lr-start");
    tc.lr_end = opts.getd("lr-end");
    tc.decay_steps = opts.geti("decay-steps");
    tc.batch = opts.geti("batch");
    tc.max_steps = opts.geti("max-steps");
    tc.eval_interval = opts.geti("eval-interval");
    tc.beta1 = opts.getd("beta1");
    tc.beta2 = opts.getd("beta2");
    tc.eps = opts.getd("adam-eps");
    tc.max_skip_frac = opts.getd("max-skip-frac");
    tc.grad_clip = opts.getd("grad-clip");
    tc.target_cer = opts.getd("target-cer");
    tc.seed = static_cast<std::uint64_t>(opts.geti("seed"));
    tc.checkpoint_path = (fs::path(out_dir) / "best.ckpt").string();
    tc.log_path = (fs::path(out_dir) / "train-log.csv").string();
    return tc;
}

void check_vocab_covers(const Vocabulary& vocab, const std::vector<LabeledSample>& samples) {
    for (const auto& s : samples)
        for (char c : s.transcript)
            if (!vocab.contains(c))
                throw ConfigError(std::string("dataset transcript uses '") + c +
                                  "', which is not in the vocabulary");
}

int cmd_gen_data(const Options& opts, std::ostream& out) {
    const std::string dir = require_dir_key(opts, "out", "gen-data");
    if (fs::exists(dir) && !opts.getb("force"))
        throw ConfigError("gen-data: " + dir + " already exists (use --force to overwrite)");

    PageSpec spec = make_page_spec(opts);
    auto vocab = make_vocab(opts);
    const auto n = opts.geti("n");
    if (n < 1) throw ConfigError("gen-data: --n must be >= 1");
    auto samples = generate(spec, vocab, static_cast<int>(n));

    const std::string& distort = opts.gets("distort");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto& s = samples[i];
        const std::uint64_t wseed = spec.seed * 1000003ull + i + 1;
        if (distort == "none") {
        } else if (distort == "compact") {
            s.image = compact_lines(s.image, &s.line_bands);
        } else if (distort == "projective") {
            s.image = warp_projective(s.image, opts.getd("rot-deg"), opts.getd("scale-jitter"),
                                      wseed, &s.line_bands);
        } else if (distort == "elastic") {
            s.image = warp_elastic(s.image, opts.getd("alpha"), opts.getd("sigma"), wseed,
                                   &s.line_bands);
        } else if (distort == "flip") {
            s = flip_horizontal_with_gt(s);
        } else {
            throw ConfigError("gen-data: unknown distort '" + distort + "'");
        }
    }

    std::vector<std::pair<std::string, std::string>> manifest = {
        {"height", std::to_string(spec.height)},
        {"width", std::to_string(spec.width)},
        {"lines", std::to_string(spec.lines)},
        {"chars_min", std::to_string(spec.chars_min)},
        {"chars_max", std::to_string(spec.chars_max)},
        {"seed", std::to_string(spec.seed)},
        {"distort", distort},
        {"vocab", opts.gets("vocab")},
    };
    save_dataset(dir, samples, manifest);
    opts.write_resolved(dir);

    out << "wrote " << samples.size() << " samples to " << dir << "\n";
    std::map<std::size_t, std::int64_t> hist;
    for (const auto& s : samples) ++hist[s.transcript.size()];
    for (const auto& [len, count] : hist)
        out << "transcript length " << len << ": " << count << "\n";
    return 0;
}

int cmd_train(const Options& opts, std::ostream& out) {
    const std::string data_dir = require_dir_key(opts, "data", "train");
    const std::string out_dir = require_dir_key(opts, "out", "train");
    const std::string eval_dir =
        opts.gets("eval-data").empty() ? data_dir : opts.gets("eval-data");

    auto train_set = load_dataset(data_dir).samples;
    auto eval_set = load_dataset(eval_dir).samples;
    auto vocab = make_vocab(opts);
    check_vocab_covers(vocab, train_set);
    check_vocab_covers(vocab, eval_set);

    fs::create_directories(out_dir);
    auto mc = make_model_config(opts, vocab);
    auto tc = make_train_config(opts, out_dir);
    auto model = opts.gets("init-from").empty()
                     ? build_model<float>(mc, static_cast<std::uint64_t>(opts.geti("seed")))
                     : load_checkpoint(opts.gets("init-from"));
    if (model.config().num_classes != vocab.size())
        throw ConfigError("train: checkpoint has " +
                          std::to_string(model.config().num_classes) +
                          " classes but the vocabulary needs " + std::to_string(vocab.size()));
    opts.write_resolved(out_dir);

    auto res = train(model, train_set, eval_set, vocab, tc);
    save_checkpoint(model, (fs::path(out_dir) / "final.ckpt").string());

    out << "steps: " << res.steps_run << "\n";
    out << "skipped samples: " << res.skipped_samples << "\n";
    if (res.best_step >= 0)
        out << "best cer: " << fmt_fixed(res.best_cer) << " at step " << res.best_step << "\n";
    out << "final cer: " << fmt_fixed(res.final_cer) << "\n";
    return 0;
}

int cmd_eval(const Options& opts, std::ostream& out) {
    const std::string ck = require_dir_key(opts, "checkpoint", "eval");
    const std::string data_dir = require_dir_key(opts, "data", "eval");
    const std::string out_dir = require_dir_key(opts, "out", "eval");

    auto model = load_checkpoint(ck);
    auto set = load_dataset(data_dir).samples;
    auto vocab = make_vocab(opts);
    if (model.config().num_classes != vocab.size())
        throw ConfigError("eval: checkpoint expects " +
                          std::to_string(model.config().num_classes) +
                          " classes but the vocabulary has " + std::to_string(vocab.size()));
    check_vocab_covers(vocab, set);

    auto ev = evaluate(model, set, vocab, opts.geti("batch"));
    fs::create_directories(out_dir);
    const auto pred_path = (fs::path(out_dir) / "predictions.txt").string();
    write_predictions(ev.predictions, pred_path);
    opts.write_resolved(out_dir);

    out << "corpus cer: " << fmt_fixed(ev.corpus_cer) << "\n";
    out << "ncer: " << fmt_fixed(ev.ncer) << "\n";
    out << "wrote " << pred_path << "\n";
    return 0;
}

int cmd_attribute(const Options& opts, std::ostream& out) {
    const std::string ck = require_dir_key(opts, "checkpoint", "attribute");
    const std::string data_dir = require_dir_key(opts, "data", "attribute");
    const std::string out_dir = require_dir_key(opts, "out", "attribute");
    const std::string& mode = opts.gets("mode");
    if (mode != "single_char" && mode != "line_scatter")
        throw ConfigError("attribute: --mode must be single_char or line_scatter, got '" +
                          mode + "'");

    auto model = load_checkpoint(ck);
    auto set = load_dataset(data_dir).samples;
    const auto id = opts.geti("sample-id");
    if (id < 0 || id >= static_cast<std::int64_t>(set.size()))
        throw ConfigError("attribute: --sample-id " + std::to_string(id) + " outside [0," +
                          std::to_string(set.size()) + ")");
    const auto& sample = set[static_cast<std::size_t>(id)];
    auto vocab = make_vocab(opts);

    const int steps = static_cast<int>(opts.geti("steps"));
    const int sg_n = static_cast<int>(opts.geti("sg-n"));
    const double sg_sigma = opts.getd("sg-sigma");
    const int chunk = static_cast<int>(opts.geti("ig-chunk"));
    const auto seed = static_cast<std::uint64_t>(opts.geti("seed"));

    auto frames = select_character_frames(model, sample.image);
    if (frames.empty()) {
        out << "warning: decode is empty; no attribution files written\n";
        return 0;
    }
    fs::create_directories(out_dir);
    opts.write_resolved(out_dir);

    if (mode == "single_char") {
        const auto which = opts.geti("char");
        if (which >= static_cast<std::int64_t>(frames.size()))
            throw ConfigError("attribute: --char " + std::to_string(which) +
                              " outside the " + std::to_string(frames.size()) +
                              "-character decode");
        for (const auto& cf : frames) {
            if (which >= 0 && cf.char_position != which) continue;
            auto heat = smoothgrad_abs(model, sample.image, cf.frame_index, cf.class_index,
                                       sg_n, sg_sigma,
                                       seed + static_cast<std::uint64_t>(cf.char_position),
                                       steps);
            heat.char_position = cf.char_position;
            const auto path = (fs::path(out_dir) / ("attr-sample" + std::to_string(id) +
                                                    "-char" + std::to_string(cf.char_position) +
                                                    ".pgm"))
                                  .string();
            save_heatmap_pgm(heat, path);
            out << "wrote " << path << "\n";
        }
        return 0;
    }

    auto locs = localize_characters(model, sample, vocab, sg_n, sg_sigma, seed, steps);
    (void)chunk;
    const auto path =
        (fs::path(out_dir) / ("scatter-sample" + std::to_string(id) + ".ppm")).string();
    emit_line_scatter(sample.image, locs, path);
    out << "wrote " << path << " (" << locs.size() << " markers)\n";
    return 0;
}

int cmd_ablate_collapse(const Options& opts, std::ostream& out) {
    const std::string data_dir = require_dir_key(opts, "data", "ablate-collapse");
    const std::string out_dir = require_dir_key(opts, "out", "ablate-collapse");
    const std::string eval_dir =
        opts.gets("eval-data").empty() ? data_dir : opts.gets("eval-data");

    auto train_set = load_dataset(data_dir).samples;
    auto eval_set = load_dataset(eval_dir).samples;
    auto vocab = make_vocab(opts);
    check_vocab_covers(vocab, train_set);
    check_vocab_covers(vocab, eval_set);

    fs::create_directories(out_dir);
    opts.write_resolved(out_dir);

    double cer[2] = {0, 0};
    const char* arm_name[2] = {"origami", "blind"};
    for (int arm = 0; arm < 2; ++arm) {
        const std::string arm_dir = (fs::path(out_dir) / arm_name[arm]).string();
        fs::create_directories(arm_dir);
        auto mc = make_model_config(opts, vocab);
        mc.collapse = arm == 0 ? CollapseMode::origami : CollapseMode::blind;
        auto tc = make_train_config(opts, arm_dir);
        if (arm == 1) tc.max_skip_frac = opts.getd("blind-max-skip-frac");
        auto model = build_model<float>(mc, static_cast<std::uint64_t>(opts.geti("seed")));
        auto res = train(model, train_set, eval_set, vocab, tc);
        save_checkpoint(model, (fs::path(arm_dir) / "final.ckpt").string());
        cer[arm] = res.final_cer;
        out << arm_name[arm] << " cer: " << fmt_fixed(res.final_cer) << " (steps "
            << res.steps_run << ", skipped " << res.skipped_samples << ")\n";
    }
    out << "cer gap: " << fmt_fixed(cer[1] - cer[0]) << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        if (args.empty()) {
            print_help(out);
            return 1;
        }
        const std::string& cmd = args[0];
        if (cmd == "--help" || cmd == "help") {
            print_help(out);
            return 0;
        }

        Options opts;
        if (apply_args(opts, args, 1)) {
            print_help(out);
            return 0;
        }

        if (cmd == "gen-data") return cmd_gen_data(opts, out);
        if (cmd == "train") return cmd_train(opts, out);
        if (cmd == "eval") return cmd_eval(opts, out);
        if (cmd == "attribute") return cmd_attribute(opts, out);
        if (cmd == "ablate-collapse") return cmd_ablate_collapse(opts, out);
        throw ConfigError("unknown command '" + cmd + "' (see --help)");
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace origami
