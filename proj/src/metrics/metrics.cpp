#include "funie/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace funie::metrics {

namespace {

void require_same_size(const ImageU8& x, const ImageU8& y, const char* what) {
    if (x.width != y.width || x.height != y.height) {
        throw InvalidArgument(std::string(what) + ": image sizes differ (" + std::to_string(x.width) + "x" +
                              std::to_string(x.height) + " vs " + std::to_string(y.width) + "x" +
                              std::to_string(y.height) + ")");
    }
}

void require_valid(const ImageU8& img, const char* what) {
    if (img.empty() || img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw InvalidArgument(std::string(what) + " needs a non-empty 3-channel image");
}

void require_blocks(const ImageU8& img, int block, const char* what) {
    require_valid(img, what);
    if (block <= 0 || img.width < block || img.height < block) {
        throw InvalidArgument(std::string(what) + " needs each side >= block size " + std::to_string(block) + ", got " +
                              std::to_string(img.width) + "x" + std::to_string(img.height));
    }
}

// Luminance scaled by 1000 so window sums stay exact integers.
std::vector<std::int64_t> luminance_milli(const ImageU8& img) {
    std::vector<std::int64_t> out(static_cast<std::size_t>(img.width) * img.height);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto* p = &img.pixels[3 * i];
        out[i] = 299 * p[0] + 587 * p[1] + 114 * p[2];
    }
    return out;
}

SsimWindowStats stats_from_sums(std::int64_t n, std::int64_t sx, std::int64_t sy, std::int64_t sxx, std::int64_t syy,
                                std::int64_t sxy) {
    using i128 = __int128;
    const double nn = static_cast<double>(n) * static_cast<double>(n) * 1e6;
    SsimWindowStats s;
    s.mu_x = static_cast<double>(sx) / (1000.0 * n);
    s.mu_y = static_cast<double>(sy) / (1000.0 * n);
    s.var_x = static_cast<double>(static_cast<i128>(n) * sxx - static_cast<i128>(sx) * sx) / nn;
    s.var_y = static_cast<double>(static_cast<i128>(n) * syy - static_cast<i128>(sy) * sy) / nn;
    s.cov_xy = static_cast<double>(static_cast<i128>(n) * sxy - static_cast<i128>(sx) * sy) / nn;
    return s;
}

std::vector<double> sobel_weighted(const ImageU8& img, int c) {
    const int w = img.width, h = img.height;
    std::vector<double> out(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        const int ym = (y + h - 1) % h, yp = (y + 1) % h;
        for (int x = 0; x < w; ++x) {
            const int xm = (x + w - 1) % w, xp = (x + 1) % w;
            const double gx = (img.at(xp, ym, c) + 2.0 * img.at(xp, y, c) + img.at(xp, yp, c)) -
                              (img.at(xm, ym, c) + 2.0 * img.at(xm, y, c) + img.at(xm, yp, c));
            const double gy = (img.at(xm, yp, c) + 2.0 * img.at(x, yp, c) + img.at(xp, yp, c)) -
                              (img.at(xm, ym, c) + 2.0 * img.at(x, ym, c) + img.at(xp, ym, c));
            out[static_cast<std::size_t>(y) * w + x] = img.at(x, y, c) * std::sqrt(gx * gx + gy * gy);
        }
    }
    return out;
}

// Calls fn(min, max) for every full block x block tile; returns the tile count.
template <typename Fn>
std::int64_t for_each_block(const std::vector<double>& plane, int w, int h, int block, Fn&& fn) {
    const int bx = w / block, by = h / block;
    for (int j = 0; j < by; ++j)
        for (int i = 0; i < bx; ++i) {
            double lo = plane[static_cast<std::size_t>(j) * block * w + i * block], hi = lo;
            for (int y = j * block; y < (j + 1) * block; ++y)
                for (int x = i * block; x < (i + 1) * block; ++x) {
                    const double v = plane[static_cast<std::size_t>(y) * w + x];
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            fn(lo, hi);
        }
    return static_cast<std::int64_t>(bx) * by;
}

// Trimmed mean and spread of integer samples given as a histogram over
// [offset, offset + bins); `scale` divides the integer sample values.
std::pair<double, double> trimmed_stats(const std::vector<std::int64_t>& hist, std::int64_t offset, double scale,
                                        double alpha) {
    std::int64_t k = 0;
    for (auto c : hist) k += c;
    const auto low = static_cast<std::int64_t>(std::ceil(alpha * static_cast<double>(k)));
    const auto high = static_cast<std::int64_t>(std::floor(alpha * static_cast<double>(k)));
    const std::int64_t keep = k - low - high;
    if (keep <= 0) throw InvalidArgument("trim fraction leaves no samples");
    std::int64_t skip = low, take = keep, sum = 0;
    for (std::size_t b = 0; b < hist.size() && take > 0; ++b) {
        std::int64_t c = hist[b];
        const auto skipped = std::min(c, skip);
        skip -= skipped;
        c -= skipped;
        const auto used = std::min(c, take);
        take -= used;
        sum += used * (static_cast<std::int64_t>(b) + offset);
    }
    const double mu = static_cast<double>(sum) / static_cast<double>(keep) / scale;
    double var = 0.0;
    for (std::size_t b = 0; b < hist.size(); ++b) {
        if (hist[b] == 0) continue;
        const double d = (static_cast<double>(static_cast<std::int64_t>(b) + offset) / scale) - mu;
        var += static_cast<double>(hist[b]) * d * d;
    }
    return {mu, var / static_cast<double>(k)};
}

}  // namespace

double psnr(const ImageU8& x, const ImageU8& y) {
    require_valid(x, "psnr");
    require_valid(y, "psnr");
    require_same_size(x, y, "psnr");
    std::int64_t sse = 0;
    for (std::size_t i = 0; i < x.pixels.size(); ++i) {
        const std::int64_t d = static_cast<std::int64_t>(x.pixels[i]) - y.pixels[i];
        sse += d * d;
    }
    if (sse == 0) return kPsnrCap;
    const double mse = static_cast<double>(sse) / static_cast<double>(x.pixels.size());
    return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

std::vector<double> luminance(const ImageU8& img) {
    std::vector<double> out(static_cast<std::size_t>(img.width) * img.height);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto* p = &img.pixels[3 * i];
        out[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
    return out;
}

SsimWindowStats ssim_window_stats(const ImageU8& x, const ImageU8& y, int x0, int y0, const SsimConfig& cfg) {
    require_same_size(x, y, "ssim");
    if (x0 < 0 || y0 < 0 || x0 + cfg.window > x.width || y0 + cfg.window > x.height)
        throw InvalidArgument("ssim window outside the image");
    std::int64_t sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int r = y0; r < y0 + cfg.window; ++r)
        for (int c = x0; c < x0 + cfg.window; ++c) {
            const std::int64_t a = 299 * x.at(c, r, 0) + 587 * x.at(c, r, 1) + 114 * x.at(c, r, 2);
            const std::int64_t b = 299 * y.at(c, r, 0) + 587 * y.at(c, r, 1) + 114 * y.at(c, r, 2);
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
        }
    return stats_from_sums(static_cast<std::int64_t>(cfg.window) * cfg.window, sx, sy, sxx, syy, sxy);
}

double ssim_from_stats(const SsimWindowStats& s, const SsimConfig& cfg) {
    const double l = (2 * s.mu_x * s.mu_y + cfg.c1) / (s.mu_x * s.mu_x + s.mu_y * s.mu_y + cfg.c1);
    const double cs = (2 * s.cov_xy + cfg.c2) / (s.var_x + s.var_y + cfg.c2);
    return l * cs;
}

double ssim(const ImageU8& x, const ImageU8& y, const SsimConfig& cfg) {
    require_valid(x, "ssim");
    require_valid(y, "ssim");
    require_same_size(x, y, "ssim");
    const int win = cfg.window, w = x.width, h = x.height;
    if (win <= 0 || w < win || h < win) {
        throw InvalidArgument("ssim needs images at least " + std::to_string(win) + "x" + std::to_string(win) +
                              ", got " + std::to_string(w) + "x" + std::to_string(h));
    }
    const auto a = luminance_milli(x), b = luminance_milli(y);
    // Vertical running sums over `win` rows per column, then a horizontal slide.
    std::array<std::vector<std::int64_t>, 5> col;
    for (auto& v : col) v.assign(w, 0);
    auto add_row = [&](int r, int sign) {
        for (int c = 0; c < w; ++c) {
            const auto va = a[static_cast<std::size_t>(r) * w + c], vb = b[static_cast<std::size_t>(r) * w + c];
            col[0][c] += sign * va;
            col[1][c] += sign * vb;
            col[2][c] += sign * va * va;
            col[3][c] += sign * vb * vb;
            col[4][c] += sign * va * vb;
        }
    };
    for (int r = 0; r < win; ++r) add_row(r, 1);
    const std::int64_t n = static_cast<std::int64_t>(win) * win;
    double total = 0.0;
    for (int y0 = 0; y0 + win <= h; ++y0) {
        if (y0 > 0) {
            add_row(y0 - 1, -1);
            add_row(y0 + win - 1, 1);
        }
        std::array<std::int64_t, 5> s{};
        for (int c = 0; c < win; ++c)
            for (int k = 0; k < 5; ++k) s[k] += col[k][c];
        for (int x0 = 0; x0 + win <= w; ++x0) {
            if (x0 > 0)
                for (int k = 0; k < 5; ++k) s[k] += col[k][x0 + win - 1] - col[k][x0 - 1];
            total += ssim_from_stats(stats_from_sums(n, s[0], s[1], s[2], s[3], s[4]), cfg);
        }
    }
    return total / (static_cast<double>(w - win + 1) * static_cast<double>(h - win + 1));
}

double uicm(const ImageU8& img, const UiqmConfig& cfg) {
    require_valid(img, "uicm");
    std::vector<std::int64_t> rg(511, 0), yb(1021, 0);
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        const int r = img.pixels[i], g = img.pixels[i + 1], b = img.pixels[i + 2];
        ++rg[r - g + 255];
        ++yb[r + g - 2 * b + 510];  // twice YB
    }
    const auto [mu_rg, var_rg] = trimmed_stats(rg, -255, 1.0, cfg.trim_alpha);
    const auto [mu_yb, var_yb] = trimmed_stats(yb, -510, 2.0, cfg.trim_alpha);
    return cfg.uicm_mean * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb) + cfg.uicm_spread * std::sqrt(var_rg + var_yb);
}

double uism(const ImageU8& img, const UiqmConfig& cfg) {
    require_blocks(img, cfg.block, "uism");
    static constexpr double kChannelWeight[3] = {0.299, 0.587, 0.114};
    double out = 0.0;
    for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        const auto blocks = for_each_block(sobel_weighted(img, c), img.width, img.height, cfg.block,
                                           [&](double lo, double hi) {
                                               if (lo > 0 && hi > 0) acc += std::log(hi / lo);
                                           });
        out += kChannelWeight[c] * (2.0 / static_cast<double>(blocks)) * acc;
    }
    return out;
}

double uiconm(const ImageU8& img, const UiqmConfig& cfg) {
    require_blocks(img, cfg.block, "uiconm");
    double acc = 0.0;
    const auto blocks = for_each_block(luminance(img), img.width, img.height, cfg.block, [&](double lo, double hi) {
        if (hi + lo <= 0) return;
        const double w = (hi - lo) / (hi + lo);
        if (w > 0 && w < 1) acc += w * std::log(w);
    });
    return acc / static_cast<double>(blocks);
}

double combine_uiqm(double uicm_v, double uism_v, double uiconm_v, const UiqmConfig& cfg) {
    return cfg.w_uicm * uicm_v + cfg.w_uism * uism_v + cfg.w_uiconm * uiconm_v;
}

UiqmScores uiqm(const ImageU8& img, const UiqmConfig& cfg) {
    UiqmScores s;
    s.uicm = uicm(img, cfg);
    s.uism = uism(img, cfg);
    s.uiconm = uiconm(img, cfg);
    s.uiqm = combine_uiqm(s.uicm, s.uism, s.uiconm, cfg);
    return s;
}

}  // namespace funie::metrics
