#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "funie/errors.hpp"
#include "funie/tensor.hpp"

namespace funie {

/// 8-bit RGB image, row-major, interleaved.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    ImageU8() = default;
    ImageU8(int w, int h);
    ImageU8(int w, int h, std::vector<std::uint8_t> px);

    std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    bool empty() const { return pixels.empty(); }

    friend bool operator==(const ImageU8&, const ImageU8&) = default;
};

/// Reads PNG, binary PPM (P6/P5) or JPEG, detected from the file contents.
/// Grayscale is promoted to R=G=B, alpha is dropped and 16-bit samples are
/// reduced to 8 bits.
ImageU8 load_image(const std::filesystem::path& path);
/// Writes PNG or PPM according to the extension (.png / .ppm).
void save_image(const ImageU8& img, const std::filesystem::path& path);
/// True for extensions load_image is expected to handle or reject meaningfully.
bool is_image_file(const std::filesystem::path& path);

/// u -> u / 127.5 - 1 as a [1,3,H,W] tensor.
Tensor<float> normalize(const ImageU8& img);
/// Stacks equally sized images into [N,3,H,W].
Tensor<float> normalize_batch(std::span<const ImageU8* const> images);
/// Inverse of normalize for batch entry `index`; clamps to [-1,1] and rounds
/// half away from zero.
ImageU8 denormalize(const Tensor<float>& t, std::int64_t index = 0);

/// Bilinear resampling with pixel-center alignment.
ImageU8 resize_bilinear(const ImageU8& img, int width, int height);

}  // namespace funie
