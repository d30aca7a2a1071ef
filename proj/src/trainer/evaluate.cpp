#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "funie/parallel.hpp"
#include "funie/rng.hpp"
#include "funie/trainer.hpp"

namespace funie {

ImageU8 enhance_image(const GeneratorNet& g, const ImageU8& img) {
    if (img.width % GeneratorNet::kDownsampleFactor != 0 || img.height % GeneratorNet::kDownsampleFactor != 0) {
        throw InvalidArgument("image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                              "; both sides must be multiples of 32 (resize first)");
    }
    NoGradGuard no_grad;
    GeneratorNet net = g;  // shares storage; infer mode leaves running stats alone
    return denormalize(net.forward(normalize(img), {ops::Mode::infer}));
}

metrics::MetricReport evaluate_holdout(const GeneratorNet& g, const DatasetSplit& holdout) {
    const bool paired = !holdout.pairs.empty();
    const std::size_t n = paired ? holdout.pairs.size() : holdout.poor.size();
    std::vector<metrics::MetricRow> rows(n);
    parallel_for(n, [&](std::size_t i) {
        if (paired) {
            const auto& p = holdout.pairs[i];
            rows[i] = metrics::evaluate_image(p.name, enhance_image(g, p.distorted), &p.groundtruth);
        } else {
            const auto& p = holdout.poor[i];
            rows[i] = metrics::evaluate_image(p.name, enhance_image(g, p.image));
        }
    });
    return metrics::aggregate(std::move(rows));
}

metrics::MetricReport evaluate_inputs(const DatasetSplit& holdout) {
    const bool paired = !holdout.pairs.empty();
    const std::size_t n = paired ? holdout.pairs.size() : holdout.poor.size();
    std::vector<metrics::MetricRow> rows(n);
    parallel_for(n, [&](std::size_t i) {
        if (paired) {
            const auto& p = holdout.pairs[i];
            rows[i] = metrics::evaluate_image(p.name, p.distorted, &p.groundtruth);
        } else {
            rows[i] = metrics::evaluate_image(holdout.poor[i].name, holdout.poor[i].image);
        }
    });
    return metrics::aggregate(std::move(rows));
}

nlohmann::json BenchmarkResult::to_json() const {
    return {{"mean_fps", mean_fps},         {"mean_ms", mean_ms},
            {"p50_ms", p50_ms},             {"p95_ms", p95_ms},
            {"parameter_count", parameter_count}, {"serialized_bytes", serialized_bytes},
            {"runs", samples_ms.size()}};
}

BenchmarkResult benchmark_inference(const GeneratorNet& g, int image_size, int runs, int warmup) {
    if (runs < 1) throw InvalidArgument("benchmark needs at least one timed run");
    if (warmup < 0) throw InvalidArgument("warmup runs must be >= 0");
    if (image_size <= 0 || image_size % GeneratorNet::kDownsampleFactor != 0) {
        throw InvalidArgument("benchmark image size must be a positive multiple of 32");
    }
    ImageU8 img(image_size, image_size);
    auto rng = make_rng(0, "benchmark-input");
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xFF);

    for (int i = 0; i < warmup; ++i) enhance_image(g, img);
    BenchmarkResult r;
    for (int i = 0; i < runs; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        enhance_image(g, img);
        const auto t1 = std::chrono::steady_clock::now();
        r.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    auto sorted = r.samples_ms;
    std::sort(sorted.begin(), sorted.end());
    // Nearest-rank percentiles.
    auto pct = [&](double q) {
        const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
        return sorted[std::max<std::size_t>(rank, 1) - 1];
    };
    r.p50_ms = pct(0.50);
    r.p95_ms = pct(0.95);
    r.mean_ms = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    r.mean_fps = 1000.0 / r.mean_ms;
    const auto count = count_params(g);
    r.parameter_count = count.parameter_count;
    r.serialized_bytes = count.serialized_bytes;
    return r;
}

}  // namespace funie
