#include "origami/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "origami/errors.hpp"
#include "origami/ops.hpp"

namespace origami {

BackboneKind backbone_from_string(const std::string& s) {
    if (s == "vgg_s") return BackboneKind::vgg_s;
    if (s == "resnet_s") return BackboneKind::resnet_s;
    if (s == "gated_s") return BackboneKind::gated_s;
    throw ConfigError("unknown backbone '" + s + "' (want vgg_s, resnet_s, or gated_s)");
}

std::string to_string(BackboneKind k) {
    switch (k) {
        case BackboneKind::vgg_s: return "vgg_s";
        case BackboneKind::resnet_s: return "resnet_s";
        case BackboneKind::gated_s: return "gated_s";
    }
    return "?";
}

CollapseMode collapse_from_string(const std::string& s) {
    if (s == "origami") return CollapseMode::origami;
    if (s == "blind") return CollapseMode::blind;
    throw ConfigError("unknown collapse mode '" + s + "' (want origami or blind)");
}

std::string to_string(CollapseMode m) {
    return m == CollapseMode::origami ? "origami" : "blind";
}

std::int64_t ModelConfig::encoder_h() const {
    std::int64_t h = input_h;
    for (int i = 0; i < 3; ++i) h = h / 2;  // pools after conv2/3/4
    return h;
}

std::int64_t ModelConfig::encoder_w() const {
    std::int64_t w = input_w;
    for (int i = 0; i < 4; ++i) w = w / 2;  // pools after conv2/3/4/5
    return w;
}

std::int64_t ModelConfig::w1_effective() const {
    if (w1 > 0) return w1;
    return std::max<std::int64_t>(1, input_w / 32);
}

std::int64_t ModelConfig::final_w_effective() const {
    if (final_w > 0) return final_w;
    return std::max<std::int64_t>(1, (input_w + 32) / 64);  // round half up
}

void ModelConfig::validate() const {
    std::vector<std::string> bad;
    if (depth_mult < 1) bad.push_back("depth_mult must be >= 1");
    if (num_classes < 2) bad.push_back("num_classes must be >= 2 (blank plus one character)");
    if (channels.size() != 7)
        bad.push_back("channels must list 7 stages (conv1..conv7), got " +
                      std::to_string(channels.size()));
    for (std::int64_t c : channels)
        if (c < 1) {
            bad.push_back("channels must all be >= 1");
            break;
        }
    if (conv1_kernel < 1 || conv1_kernel % 2 == 0)
        bad.push_back("conv1_kernel must be odd and >= 1");
    if (input_h < 8) bad.push_back("input_h must be >= 8 (three vertical halvings)");
    if (input_w < 16) bad.push_back("input_w must be >= 16 (four horizontal halvings)");
    if (l1 < 1) bad.push_back("l1 must be >= 1");
    if (l2 < l1) bad.push_back("l1 must not exceed l2 (unfolding only grows the long axis)");
    if (w1 < 0 || final_w < 0) bad.push_back("w1/final_w must be positive or 0 for defaults");
    if (!bad.empty()) {
        std::string msg = "model config invalid:";
        for (const auto& b : bad) msg += "\n  - " + b;
        throw ConfigError(msg);
    }
}

void check_l2_covers(const ModelConfig& cfg, std::int64_t max_transcript_len) {
    if (cfg.l2 < max_transcript_len + 1)
        throw ConfigError("l2=" + std::to_string(cfg.l2) +
                          " is too short for the longest transcript (" +
                          std::to_string(max_transcript_len) + " chars); need l2 >= " +
                          std::to_string(max_transcript_len + 1));
}

namespace {

int blocks_in_stage(const ModelConfig& cfg, int stage) {
    return stage == 7 ? 1 : cfg.depth_mult;
}

std::int64_t stage_in_channels(const ModelConfig& cfg, int stage) {
    return cfg.channels[static_cast<std::size_t>(stage - 2)];
}

std::int64_t stage_out_channels(const ModelConfig& cfg, int stage) {
    return cfg.channels[static_cast<std::size_t>(stage - 1)];
}

}  // namespace

template <class T>
std::int64_t Model<T>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

template <class T>
std::vector<Tensor<T>> Model<T>::parameters() {
    std::vector<Tensor<T>> out;
    out.reserve(params_.size());
    for (auto& [name, t] : params_) out.push_back(t);
    return out;
}

template <class T>
Tensor<T>& Model<T>::param(const std::string& name) {
    for (auto& [n, t] : params_)
        if (n == name) return t;
    throw ConfigError("model has no parameter '" + name + "'");
}

template <class T>
const Tensor<T>& Model<T>::cparam(const std::string& name) const {
    for (const auto& [n, t] : params_)
        if (n == name) return t;
    throw ConfigError("model has no parameter '" + name + "'");
}

template <class T>
void Model<T>::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

template <class T>
Tensor<T> Model<T>::run_stage(Tensor<T> x, int stage) const {
    const std::string sp = (stage == 7 ? "dec.s7." : "enc.s" + std::to_string(stage) + ".");
    const int blocks = blocks_in_stage(cfg_, stage);
    const Stride2 one{1, 1};
    switch (cfg_.backbone) {
        case BackboneKind::vgg_s:
            for (int b = 0; b < blocks; ++b) {
                const std::string bp = sp + "b" + std::to_string(b) + ".";
                x = relu(conv2d(x, cparam(bp + "w"), cparam(bp + "b"), one, one));
            }
            return x;
        case BackboneKind::resnet_s:
            for (int b = 0; b < blocks; ++b) {
                const std::string bp = sp + "b" + std::to_string(b) + ".";
                auto y = relu(conv2d(x, cparam(bp + "c1.w"), cparam(bp + "c1.b"), one, one));
                y = conv2d(y, cparam(bp + "c2.w"), cparam(bp + "c2.b"), one, one);
                Tensor<T> skip = x;
                if (b == 0 && x.dim(1) != y.dim(1))
                    skip = conv2d(x, cparam(bp + "skip.w"), cparam(bp + "skip.b"));
                x = relu(add(y, skip));
            }
            return x;
        case BackboneKind::gated_s: {
            if (stage_in_channels(cfg_, stage) != stage_out_channels(cfg_, stage))
                x = relu(conv2d(x, cparam(sp + "in.w"), cparam(sp + "in.b")));
            for (int b = 0; b < blocks; ++b) {
                const std::string bp = sp + "b" + std::to_string(b) + ".";
                auto a = origami::tanh(conv2d(x, cparam(bp + "ga.w"), cparam(bp + "ga.b"), one, one));
                auto g = sigmoid(conv2d(x, cparam(bp + "gb.w"), cparam(bp + "gb.b"), one, one));
                x = add(x, mul(a, g));
            }
            return x;
        }
    }
    throw ConfigError("unreachable backbone kind");
}

template <class T>
Tensor<T> Model<T>::encode(const Tensor<T>& image) const {
    if (image.ndim() != 4 || image.dim(1) != 1 || image.dim(2) != cfg_.input_h ||
        image.dim(3) != cfg_.input_w)
        throw ShapeError("model: image must be [N,1," + std::to_string(cfg_.input_h) + "," +
                         std::to_string(cfg_.input_w) + "], got " + shape_str(image.shape()));
    auto x = cfg_.use_ln ? static_layer_norm(image) : image;  // ln1
    const int k = cfg_.conv1_kernel;
    x = relu(conv2d(x, cparam("enc.conv1.w"), cparam("enc.conv1.b"), {1, 1}, {k / 2, k / 2}));
    x = run_stage(x, 2);
    x = maxpool2d(x, {2, 2}, {2, 2});
    x = run_stage(x, 3);
    x = maxpool2d(x, {2, 2}, {2, 2});
    x = run_stage(x, 4);
    x = maxpool2d(x, {2, 2}, {2, 2});
    x = run_stage(x, 5);
    x = maxpool2d(x, {1, 2}, {1, 2});  // halve width only; height is already H/8
    return run_stage(x, 6);
}

template <class T>
Tensor<T> Model<T>::logits_from(const Tensor<T>& image) const {
    auto x = encode(image);
    x = bilinear_resize(x, cfg_.l1, cfg_.w1_effective());
    x = run_stage(x, 7);
    x = bilinear_resize(x, cfg_.l2, cfg_.final_w_effective());
    x = conv2d(x, cparam("dec.conv8.w"), cparam("dec.conv8.b"));  // 1x1 to C
    x = mean_over_axis(x, 3);                                     // [N, C, L2]
    x = permute(x, {0, 2, 1});                                    // [N, L2, C]
    if (cfg_.use_ln) x = static_layer_norm(x);                    // ln2
    return x;
}

template <class T>
Tensor<T> Model<T>::forward_logits(const Tensor<T>& image) const {
    if (cfg_.collapse != CollapseMode::origami)
        throw ConfigError("forward: model was built with collapse=blind");
    return logits_from(image);
}

template <class T>
Tensor<T> Model<T>::forward(const Tensor<T>& image) const {
    return log_softmax(forward_logits(image), 2);
}

template <class T>
Tensor<T> Model<T>::forward_blind_collapse(const Tensor<T>& image) const {
    if (cfg_.collapse != CollapseMode::blind)
        throw ConfigError("forward_blind_collapse: model was built with collapse=origami");
    auto x = encode(image);
    x = mean_over_axis(x, 2);  // collapse the vertical axis outright
    const std::int64_t n = x.dim(0), c = x.dim(1), w = x.dim(2);
    x = reshape(x, {n, c, 1, w});
    x = conv2d(x, cparam("dec.conv8.w"), cparam("dec.conv8.b"));
    x = reshape(x, {n, static_cast<std::int64_t>(cfg_.num_classes), w});
    x = permute(x, {0, 2, 1});                  // [N, W', C]
    if (cfg_.use_ln) x = static_layer_norm(x);  // ln2
    return log_softmax(x, 2);
}

namespace {

template <class T>
class ParamBuilder {
public:
    ParamBuilder(std::vector<std::pair<std::string, Tensor<T>>>& params, std::uint64_t seed)
        : params_(params), rng_(seed) {}

    void conv(const std::string& name, std::int64_t cout, std::int64_t cin, std::int64_t kh,
              std::int64_t kw) {
        const double fan_in = static_cast<double>(cin * kh * kw);
        const double limit = std::sqrt(6.0 / fan_in);
        std::uniform_real_distribution<double> d(-limit, limit);
        std::vector<T> w(static_cast<std::size_t>(cout * cin * kh * kw));
        for (auto& v : w) v = static_cast<T>(d(rng_));
        params_.emplace_back(name + ".w", Tensor<T>::from_data({cout, cin, kh, kw}, std::move(w),
                                                               true));
        params_.emplace_back(name + ".b", Tensor<T>::zeros({cout}, true));
    }

private:
    std::vector<std::pair<std::string, Tensor<T>>>& params_;
    std::mt19937_64 rng_;
};

}  // namespace

template <class T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model<T> m;
    m.cfg_ = cfg;
    ParamBuilder<T> pb(m.params_, seed);

    pb.conv("enc.conv1", cfg.channels[0], 1, cfg.conv1_kernel, cfg.conv1_kernel);
    const int last_stage = cfg.collapse == CollapseMode::origami ? 7 : 6;
    for (int stage = 2; stage <= last_stage; ++stage) {
        const std::string sp = (stage == 7 ? "dec.s7." : "enc.s" + std::to_string(stage) + ".");
        const std::int64_t cin = stage_in_channels(cfg, stage);
        const std::int64_t cout = stage_out_channels(cfg, stage);
        const int blocks = blocks_in_stage(cfg, stage);
        switch (cfg.backbone) {
            case BackboneKind::vgg_s:
                for (int b = 0; b < blocks; ++b)
                    pb.conv(sp + "b" + std::to_string(b), cout, b == 0 ? cin : cout, 3, 3);
                break;
            case BackboneKind::resnet_s:
                for (int b = 0; b < blocks; ++b) {
                    const std::string bp = sp + "b" + std::to_string(b);
                    const std::int64_t bin = b == 0 ? cin : cout;
                    pb.conv(bp + ".c1", cout, bin, 3, 3);
                    pb.conv(bp + ".c2", cout, cout, 3, 3);
                    if (b == 0 && cin != cout) pb.conv(bp + ".skip", cout, cin, 1, 1);
                }
                break;
            case BackboneKind::gated_s:
                if (cin != cout) pb.conv(sp + "in", cout, cin, 1, 1);
                for (int b = 0; b < blocks; ++b) {
                    const std::string bp = sp + "b" + std::to_string(b);
                    pb.conv(bp + ".ga", cout, cout, 3, 3);
                    pb.conv(bp + ".gb", cout, cout, 3, 3);
                }
                break;
        }
    }
    const std::int64_t proj_in =
        cfg.collapse == CollapseMode::origami ? cfg.channels[6] : cfg.channels[5];
    pb.conv("dec.conv8", cfg.num_classes, proj_in, 1, 1);
    return m;
}

std::vector<ShapeTraceEntry> shape_trace(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<ShapeTraceEntry> tr;
    std::int64_t h = cfg.input_h, w = cfg.input_w;
    tr.push_back({"conv1", h, w});
    h /= 2;
    w /= 2;
    tr.push_back({"conv2_x", h, w});
    h /= 2;
    w /= 2;
    tr.push_back({"conv3_x", h, w});
    h /= 2;
    w /= 2;
    tr.push_back({"conv4_x", h, w});
    w /= 2;
    tr.push_back({"conv5_x", h, w});
    tr.push_back({"conv6_x", h, w});
    if (cfg.collapse == CollapseMode::origami) {
        tr.push_back({"stage_a", cfg.l1, cfg.w1_effective()});
        tr.push_back({"stage_b", cfg.l2, cfg.final_w_effective()});
    } else {
        tr.push_back({"blind_collapse", 1, w});
    }
    return tr;
}

namespace {

std::string shape_csv(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(s[i]);
    }
    return out;
}

std::int64_t parse_ll(const std::string& s) {
    try {
        std::size_t used = 0;
        const std::int64_t v = std::stoll(s, &used);
        if (used != s.size()) throw IoError("checkpoint: bad integer '" + s + "'");
        return v;
    } catch (const IoError&) {
        throw;
    } catch (const std::exception&) {
        throw IoError("checkpoint: bad integer '" + s + "'");
    }
}

Shape parse_shape_csv(const std::string& s) {
    Shape shape;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) shape.push_back(parse_ll(tok));
    return shape;
}

}  // namespace

void save_checkpoint(const Model<float>& model, const std::string& path) {
    const ModelConfig& c = model.config();
    std::ostringstream m;
    m << "format=origami-checkpoint-v1\n";
    m << "backbone=" << to_string(c.backbone) << '\n';
    m << "collapse=" << to_string(c.collapse) << '\n';
    m << "depth_mult=" << c.depth_mult << '\n';
    m << "input_h=" << c.input_h << '\n';
    m << "input_w=" << c.input_w << '\n';
    m << "l1=" << c.l1 << '\n';
    m << "l2=" << c.l2 << '\n';
    m << "w1=" << c.w1 << '\n';
    m << "final_w=" << c.final_w << '\n';
    m << "channels=";
    for (std::size_t i = 0; i < c.channels.size(); ++i)
        m << (i ? "," : "") << c.channels[i];
    m << '\n';
    m << "num_classes=" << c.num_classes << '\n';
    m << "use_ln=" << (c.use_ln ? 1 : 0) << '\n';
    m << "conv1_kernel=" << c.conv1_kernel << '\n';
    m << "tensors=" << model.named_parameters().size() << '\n';
    std::int64_t offset = 0;
    for (std::size_t i = 0; i < model.named_parameters().size(); ++i) {
        const auto& [name, t] = model.named_parameters()[i];
        m << "tensor." << i << '=' << name << ';' << shape_csv(t.shape()) << ';' << offset << '\n';
        offset += t.numel();
    }
    m << "floats=" << offset << '\n';
    m << "data:\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot write " + path);
    const std::string header = m.str();
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, t] : model.named_parameters())
        out.write(reinterpret_cast<const char*>(t.data().data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!out) throw IoError("checkpoint: write failed for " + path);
}

Model<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path);
    std::string line;
    auto next_kv = [&](const std::string& want_key) -> std::string {
        if (!std::getline(in, line))
            throw IoError("checkpoint: truncated manifest in " + path);
        const auto eq = line.find('=');
        if (eq == std::string::npos || line.substr(0, eq) != want_key)
            throw IoError("checkpoint: expected key '" + want_key + "', got '" + line + "'");
        return line.substr(eq + 1);
    };

    if (next_kv("format") != "origami-checkpoint-v1")
        throw IoError("checkpoint: unsupported format in " + path);
    ModelConfig cfg;
    cfg.backbone = backbone_from_string(next_kv("backbone"));
    cfg.collapse = collapse_from_string(next_kv("collapse"));
    cfg.depth_mult = static_cast<int>(parse_ll(next_kv("depth_mult")));
    cfg.input_h = parse_ll(next_kv("input_h"));
    cfg.input_w = parse_ll(next_kv("input_w"));
    cfg.l1 = parse_ll(next_kv("l1"));
    cfg.l2 = parse_ll(next_kv("l2"));
    cfg.w1 = parse_ll(next_kv("w1"));
    cfg.final_w = parse_ll(next_kv("final_w"));
    cfg.channels = parse_shape_csv(next_kv("channels"));
    cfg.num_classes = static_cast<int>(parse_ll(next_kv("num_classes")));
    cfg.use_ln = next_kv("use_ln") == "1";
    cfg.conv1_kernel = static_cast<int>(parse_ll(next_kv("conv1_kernel")));

    auto model = build_model<float>(cfg, 0);
    const std::size_t n_tensors = static_cast<std::size_t>(parse_ll(next_kv("tensors")));
    if (n_tensors != model.named_parameters().size())
        throw IoError("checkpoint: tensor count " + std::to_string(n_tensors) +
                      " does not match rebuilt model (" +
                      std::to_string(model.named_parameters().size()) + ")");
    std::int64_t offset = 0;
    for (std::size_t i = 0; i < n_tensors; ++i) {
        const std::string v = next_kv("tensor." + std::to_string(i));
        const auto p1 = v.find(';');
        const auto p2 = v.find(';', p1 + 1);
        if (p1 == std::string::npos || p2 == std::string::npos)
            throw IoError("checkpoint: malformed tensor line '" + v + "'");
        const std::string name = v.substr(0, p1);
        const Shape shape = parse_shape_csv(v.substr(p1 + 1, p2 - p1 - 1));
        const std::int64_t off = parse_ll(v.substr(p2 + 1));
        const auto& [want_name, t] = model.named_parameters()[i];
        if (name != want_name || shape != t.shape() || off != offset)
            throw IoError("checkpoint: registry mismatch at tensor " + std::to_string(i) +
                          " ('" + name + "' vs '" + want_name + "')");
        offset += t.numel();
    }
    const std::int64_t floats = parse_ll(next_kv("floats"));
    if (floats != offset) throw IoError("checkpoint: float count mismatch");
    if (!std::getline(in, line) || line != "data:")
        throw IoError("checkpoint: missing data section");
    for (auto& t : model.parameters()) {
        in.read(reinterpret_cast<char*>(t.data().data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
        if (!in) throw IoError("checkpoint: truncated data blob in " + path);
    }
    char extra;
    if (in.read(&extra, 1)) throw IoError("checkpoint: trailing bytes in " + path);
    return model;
}

template class Model<float>;
template class Model<double>;
template Model<float> build_model<float>(const ModelConfig&, std::uint64_t);
template Model<double> build_model<double>(const ModelConfig&, std::uint64_t);

}  // namespace origami
