#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "funie/image.hpp"

namespace funie::metrics {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(255^2 / MSE) over all samples, capped at kPsnrCap.
double psnr(const ImageU8& x, const ImageU8& y);

struct SsimConfig {
    int window = 8;
    double c1 = 6.5025;   // (255 * 0.01)^2
    double c2 = 58.5225;  // (255 * 0.03)^2
};

/// Moments of one window on the 8-bit luminance scale.
struct SsimWindowStats {
    double mu_x = 0, mu_y = 0;
    double var_x = 0, var_y = 0;
    double cov_xy = 0;
};

/// Y = 0.299 R + 0.587 G + 0.114 B per pixel, row-major.
std::vector<double> luminance(const ImageU8& img);

/// Population moments of the window whose top-left corner is (x0, y0).
SsimWindowStats ssim_window_stats(const ImageU8& x, const ImageU8& y, int x0, int y0, const SsimConfig& cfg = {});
double ssim_from_stats(const SsimWindowStats& s, const SsimConfig& cfg = {});

/// Mean structural similarity over all stride-1 windows of the luminance.
double ssim(const ImageU8& x, const ImageU8& y, const SsimConfig& cfg = {});

struct UiqmConfig {
    double w_uicm = 0.0282;
    double w_uism = 0.2953;
    double w_uiconm = 3.5753;
    double uicm_mean = -0.0268;
    double uicm_spread = 0.1586;
    double trim_alpha = 0.1;  // per tail
    int block = 8;
};

/// Colorfulness from alpha-trimmed statistics of RG = R - G and
/// YB = (R + G) / 2 - B. The trim drops ceil(aK) low and floor(aK) high
/// samples; the variance is taken about the trimmed mean over all samples.
double uicm(const ImageU8& img, const UiqmConfig& cfg = {});
/// Sharpness: EME of (channel x Sobel magnitude) per channel, weighted
/// 0.299 / 0.587 / 0.114. Sobel wraps around the image borders.
double uism(const ImageU8& img, const UiqmConfig& cfg = {});
/// Contrast: mean over blocks of w ln w, w the Michelson contrast of the
/// block luminance.
double uiconm(const ImageU8& img, const UiqmConfig& cfg = {});

struct UiqmScores {
    double uiqm = 0, uicm = 0, uism = 0, uiconm = 0;
};

UiqmScores uiqm(const ImageU8& img, const UiqmConfig& cfg = {});
double combine_uiqm(double uicm, double uism, double uiconm, const UiqmConfig& cfg = {});

// Reporting.

struct MetricRow {
    std::string name;
    std::optional<double> psnr_db;  // full-reference metrics need a ground truth
    std::optional<double> ssim;
    double uiqm = 0, uicm = 0, uism = 0, uiconm = 0;
};

struct MetricSummary {
    double mean = 0;
    double std = 0;  // population
    std::size_t count = 0;
    std::string formatted(int precision = 4) const;  // "mean ± std"
};

struct MetricReport {
    std::vector<MetricRow> per_image;
    std::map<std::string, MetricSummary> aggregate;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

inline const std::vector<std::string> kMetricNames{"psnr_db", "ssim", "uiqm", "uicm", "uism", "uiconm"};

/// Metrics of `img`; psnr and ssim only when a reference is given.
MetricRow evaluate_image(const std::string& name, const ImageU8& img, const ImageU8* reference = nullptr);

/// Summarizes a single metric. Values are summed in sorted order so the
/// result does not depend on row order.
MetricSummary summarize(std::vector<double> values);

/// Per-metric mean and population std. Full-reference metrics are
/// aggregated over the rows that carry them.
MetricReport aggregate(std::vector<MetricRow> rows);

void write_report(const MetricReport& report, const std::string& json_path, const std::string& csv_path);

}  // namespace funie::metrics
