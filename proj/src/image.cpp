#include "origami/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "origami/errors.hpp"

namespace origami {

Image white_image(std::int64_t h, std::int64_t w) {
    Image img;
    img.h = h;
    img.w = w;
    img.pix.assign(static_cast<std::size_t>(h * w), 1.0f);
    return img;
}

Tensor<float> to_tensor(const Image& img) {
    std::vector<float> v = img.pix;
    return Tensor<float>::from_data({1, 1, img.h, img.w}, std::move(v));
}

Image from_tensor_plane(const Tensor<float>& t, std::int64_t n) {
    if (t.ndim() != 4 || t.dim(1) != 1)
        throw ShapeError("from_tensor_plane: want [N,1,H,W], got " + shape_str(t.shape()));
    Image img;
    img.h = t.dim(2);
    img.w = t.dim(3);
    img.pix.resize(static_cast<std::size_t>(img.h * img.w));
    const auto base = static_cast<std::size_t>(n * img.h * img.w);
    std::copy_n(t.data().data() + base, img.pix.size(), img.pix.begin());
    return img;
}

namespace {

std::uint8_t to_byte(float v) {
    const float c = std::min(1.0f, std::max(0.0f, v));
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

// Reads the next whitespace-separated token, skipping '#' comment lines.
std::string next_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

std::int64_t next_int(std::istream& in, const std::string& path) {
    const std::string tok = next_token(in);
    try {
        return std::stoll(tok);
    } catch (const std::exception&) {
        throw IoError(path + ": malformed header token '" + tok + "'");
    }
}

void write_header(std::ofstream& out, const char* magic, const std::string& comment,
                  std::int64_t w, std::int64_t h) {
    out << magic << "\n";
    if (!comment.empty()) out << "# " << comment << "\n";
    out << w << " " << h << "\n255\n";
}

}  // namespace

void write_pgm(const Image& img, const std::string& path, const std::string& comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    write_header(out, "P5", comment, img.w, img.h);
    std::vector<std::uint8_t> bytes(img.pix.size());
    for (std::size_t i = 0; i < img.pix.size(); ++i) bytes[i] = to_byte(img.pix[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path);
}

Image read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    if (next_token(in) != "P5") throw IoError(path + ": not a binary PGM (P5)");
    Image img;
    img.w = next_int(in, path);
    img.h = next_int(in, path);
    const std::int64_t maxval = next_int(in, path);
    if (img.w < 1 || img.h < 1 || maxval != 255)
        throw IoError(path + ": unsupported PGM geometry or maxval");
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(img.h * img.w));
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw IoError(path + ": truncated pixel data");
    img.pix.resize(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) img.pix[i] = bytes[i] / 255.0f;
    return img;
}

void write_ppm(const RgbImage& img, const std::string& path, const std::string& comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    write_header(out, "P6", comment, img.w, img.h);
    out.write(reinterpret_cast<const char*>(img.pix.data()),
              static_cast<std::streamsize>(img.pix.size()));
    if (!out) throw IoError("write failed for " + path);
}

RgbImage read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    if (next_token(in) != "P6") throw IoError(path + ": not a binary PPM (P6)");
    RgbImage img;
    img.w = next_int(in, path);
    img.h = next_int(in, path);
    const std::int64_t maxval = next_int(in, path);
    if (img.w < 1 || img.h < 1 || maxval != 255)
        throw IoError(path + ": unsupported PPM geometry or maxval");
    img.pix.resize(static_cast<std::size_t>(img.h * img.w * 3));
    in.read(reinterpret_cast<char*>(img.pix.data()),
            static_cast<std::streamsize>(img.pix.size()));
    if (!in) throw IoError(path + ": truncated pixel data");
    return img;
}

}  // namespace origami
