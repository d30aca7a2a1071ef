#pragma once

#include <cstdint>

#include <json.hpp>

#include "funie/image.hpp"

namespace funie {

/// Procedural clean scene: background gradient, 5-12 colored ellipses and
/// rectangles, low-amplitude texture. Width and height must be multiples of 32.
ImageU8 synth_scene(int width, int height, std::uint64_t seed);

enum class HueCast { green, blue };

struct DegradeParams {
    double severity = 0.0;       // [0,1], drives the per-channel attenuation
    HueCast cast = HueCast::green;
    double hue_shift = 0.0;      // [0,1], blend weight toward the cast color
    double contrast_scale = 1.0; // (0,1], factor about each channel mean
    double blur_radius = 0.0;    // Gaussian sigma in pixels
    double noise_std = 0.0;      // additive noise, 8-bit units
    std::uint64_t seed = 0;

    /// Component strengths as non-decreasing functions of `severity`.
    static DegradeParams at_severity(double severity, HueCast cast, std::uint64_t seed);
    void validate() const;
};

nlohmann::json to_json(const DegradeParams& p);

/// Attenuation (red most), hue cast, contrast compression, blur, noise, in
/// that order. Severity 0 with identity components returns the input.
ImageU8 degrade(const ImageU8& img, const DegradeParams& params);

}  // namespace funie
