#include "funie/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "funie/rng.hpp"

namespace funie {

namespace {

using Rgb = std::array<double, 3>;

Rgb random_color(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 255.0);
    return {u(rng), u(rng), u(rng)};
}

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

// Separable Gaussian with mirrored borders, on an interleaved float buffer.
void gaussian_blur(std::vector<double>& buf, int w, int h, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& e : k) e /= total;
    auto mirror = [](int i, int n) {
        if (n == 1) return 0;
        while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
        return i;
    };
    std::vector<double> tmp(buf.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * buf[(y * w + mirror(x + i, w)) * 3 + c];
                tmp[(y * w + x) * 3 + c] = acc;
            }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp[(mirror(y + i, h) * w + x) * 3 + c];
                buf[(y * w + x) * 3 + c] = acc;
            }
}

}  // namespace

ImageU8 synth_scene(int width, int height, std::uint64_t seed) {
    if (width <= 0 || height <= 0 || width % 32 != 0 || height % 32 != 0) {
        throw InvalidArgument("scene size must be a positive multiple of 32, got " + std::to_string(width) + "x" +
                              std::to_string(height));
    }
    auto rng = make_rng(seed, "scene");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> buf(static_cast<std::size_t>(width) * height * 3);

    const Rgb c0 = random_color(rng), c1 = random_color(rng);
    const double theta = unit(rng) * 2 * std::numbers::pi;
    const double dx = std::cos(theta), dy = std::sin(theta);
    const double span = std::abs(dx) * width + std::abs(dy) * height;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double t = std::clamp(((x - width / 2.0) * dx + (y - height / 2.0) * dy) / span + 0.5, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) buf[(y * width + x) * 3 + c] = c0[c] * (1 - t) + c1[c] * t;
        }

    const int shapes = 5 + static_cast<int>(rng() % 8);
    for (int s = 0; s < shapes; ++s) {
        const bool ellipse = rng() % 2 == 0;
        const Rgb color = random_color(rng);
        const double cx = unit(rng) * width, cy = unit(rng) * height;
        const double rx = (0.05 + 0.3 * unit(rng)) * width, ry = (0.05 + 0.3 * unit(rng)) * height;
        const double alpha = 0.7 + 0.3 * unit(rng);
        const double rot = unit(rng) * std::numbers::pi;
        const double cr = std::cos(rot), sr = std::sin(rot);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const double px = x + 0.5 - cx, py = y + 0.5 - cy;
                bool inside;
                if (ellipse) {
                    const double u = (px * cr + py * sr) / rx, v = (-px * sr + py * cr) / ry;
                    inside = u * u + v * v <= 1.0;
                } else {
                    inside = std::abs(px) <= rx && std::abs(py) <= ry;
                }
                if (!inside) continue;
                double* p = &buf[(y * width + x) * 3];
                for (int c = 0; c < 3; ++c) p[c] = p[c] * (1 - alpha) + color[c] * alpha;
            }
    }

    // Texture: a few low-amplitude oriented sinusoids.
    for (int wave = 0; wave < 3; ++wave) {
        const double freq = 0.05 + 0.25 * unit(rng), phase = unit(rng) * 2 * std::numbers::pi;
        const double ang = unit(rng) * std::numbers::pi, amp = 2.0 + 4.0 * unit(rng);
        const double ax = std::cos(ang) * freq, ay = std::sin(ang) * freq;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const double d = amp * std::sin(ax * x + ay * y + phase);
                for (int c = 0; c < 3; ++c) buf[(y * width + x) * 3 + c] += d;
            }
    }

    ImageU8 img(width, height);
    for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = to_u8(buf[i]);
    return img;
}

DegradeParams DegradeParams::at_severity(double severity, HueCast cast, std::uint64_t seed) {
    DegradeParams p;
    p.severity = severity;
    p.cast = cast;
    p.hue_shift = 0.45 * severity;
    p.contrast_scale = 1.0 - 0.45 * severity;
    p.blur_radius = 1.2 * severity;
    p.noise_std = 5.0 * severity;
    p.seed = seed;
    p.validate();
    return p;
}

void DegradeParams::validate() const {
    auto in = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; };
    if (!in(severity, 0, 1)) throw InvalidArgument("degrade severity must lie in [0,1]");
    if (!in(hue_shift, 0, 1)) throw InvalidArgument("hue_shift must lie in [0,1]");
    if (!in(contrast_scale, 0, 1) || contrast_scale == 0) throw InvalidArgument("contrast_scale must lie in (0,1]");
    if (!in(blur_radius, 0, 64)) throw InvalidArgument("blur_radius must lie in [0,64]");
    if (!in(noise_std, 0, 255)) throw InvalidArgument("noise_std must lie in [0,255]");
}

nlohmann::json to_json(const DegradeParams& p) {
    return {{"severity", p.severity},
            {"cast", p.cast == HueCast::green ? "green" : "blue"},
            {"hue_shift", p.hue_shift},
            {"contrast_scale", p.contrast_scale},
            {"blur_radius", p.blur_radius},
            {"noise_std", p.noise_std},
            {"seed", p.seed}};
}

ImageU8 degrade(const ImageU8& img, const DegradeParams& params) {
    params.validate();
    const bool attenuate = params.severity > 0;
    const bool cast = params.hue_shift > 0;
    const bool compress = params.contrast_scale < 1;
    const bool blur = params.blur_radius > 0;
    const bool noise = params.noise_std > 0;
    if (!attenuate && !cast && !compress && !blur && !noise) return img;

    std::vector<double> buf(img.pixels.begin(), img.pixels.end());
    const std::size_t n = buf.size() / 3;
    if (attenuate) {
        const double s = params.severity;
        const Rgb keep{1.0 - 0.7 * s, 1.0 - 0.1 * s, 1.0 - 0.1 * s};
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) buf[3 * i + c] *= keep[c];
    }
    if (cast) {
        const Rgb tint = params.cast == HueCast::green ? Rgb{40, 170, 110} : Rgb{30, 110, 190};
        const double h = params.hue_shift;
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) buf[3 * i + c] = buf[3 * i + c] * (1 - h) + tint[c] * h;
    }
    if (compress) {
        Rgb mean{0, 0, 0};
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) mean[c] += buf[3 * i + c];
        for (auto& m : mean) m /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) buf[3 * i + c] = mean[c] + params.contrast_scale * (buf[3 * i + c] - mean[c]);
    }
    if (blur) gaussian_blur(buf, img.width, img.height, params.blur_radius);
    if (noise) {
        auto rng = make_rng(params.seed, "degrade-noise");
        std::normal_distribution<double> gauss(0.0, params.noise_std);
        for (auto& v : buf) v += gauss(rng);
    }
    ImageU8 out(img.width, img.height);
    for (std::size_t i = 0; i < buf.size(); ++i) out.pixels[i] = to_u8(buf[i]);
    return out;
}

}  // namespace funie
