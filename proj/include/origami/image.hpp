#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "origami/tensor.hpp"

// Grayscale images as float [0,1], white = 1.0, row-major. 8-bit PGM/PPM on disk.

namespace origami {

struct Image {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::vector<float> pix;  // h*w, row-major

    float at(std::int64_t r, std::int64_t c) const {
        return pix[static_cast<std::size_t>(r * w + c)];
    }
    float& at(std::int64_t r, std::int64_t c) {
        return pix[static_cast<std::size_t>(r * w + c)];
    }
};

Image white_image(std::int64_t h, std::int64_t w);

// [1,1,h,w] float tensor; values copied.
Tensor<float> to_tensor(const Image& img);
Image from_tensor_plane(const Tensor<float>& t, std::int64_t n = 0);

void write_pgm(const Image& img, const std::string& path, const std::string& comment = "");
Image read_pgm(const std::string& path);

struct RgbImage {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::vector<std::uint8_t> pix;  // h*w*3, row-major rgb
};

void write_ppm(const RgbImage& img, const std::string& path, const std::string& comment = "");
RgbImage read_ppm(const std::string& path);

}  // namespace origami
