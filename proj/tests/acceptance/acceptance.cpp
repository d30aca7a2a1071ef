// Acceptance suite: one PASS/FAIL (or SKIP) line per criterion.
//
//   acceptance            run every criterion
//   acceptance C4 C6      run a subset
//
// Exit status is non-zero when any criterion that ran failed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "funie/metrics.hpp"
#include "funie/synth.hpp"
#include "funie/trainer.hpp"
#include "gradcheck.hpp"
#include "metric_oracles.hpp"

using namespace funie;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
    bool skipped = false;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

fs::path work_dir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "funie_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

// ---- Shared desk-scale paired setup (criteria 4 and 6) ----

constexpr int kTrainPairs = 20;
constexpr int kHoldoutPairs = 4;
constexpr int kDeskSize = 64;
constexpr std::int64_t kPairedIterations = 2000;
constexpr std::uint64_t kDataSeed = 7;

const Dataset& desk_dataset() {
    static const Dataset ds = [] {
        SynthOptions o;
        o.count = kTrainPairs + kHoldoutPairs;
        o.size = kDeskSize;
        o.seed = kDataSeed;
        o.severity_range = {0.4, 0.8};
        DatasetLayout layout = build_synthetic_dataset(work_dir() / "paired", o);
        layout.holdout_fraction = static_cast<double>(kHoldoutPairs) / (kTrainPairs + kHoldoutPairs);
        return load_dataset(layout, kDataSeed);
    }();
    return ds;
}

TrainConfig desk_config(std::uint64_t seed, bool supervised_terms) {
    TrainConfig c;
    c.mode = DatasetMode::paired;
    c.iterations = kPairedIterations;
    c.image_size = kDeskSize;
    c.seed = seed;
    c.loss_weights.enable_l1 = supervised_terms;
    c.loss_weights.enable_con = supervised_terms;
    return c;
}

struct DeskRun {
    metrics::MetricReport holdout;
    double seconds = 0;
};

// Trained holdout reports, cached so criterion 6 reuses the criterion-4 run.
const DeskRun& desk_run(std::uint64_t seed, bool supervised_terms) {
    static std::map<std::pair<std::uint64_t, bool>, DeskRun> cache;
    const auto key = std::make_pair(seed, supervised_terms);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    const auto t0 = Clock::now();
    const auto state = train_paired(desk_config(seed, supervised_terms), desk_dataset().train);
    DeskRun run{evaluate_holdout(state.g, desk_dataset().holdout), 0};
    run.seconds = seconds_since(t0);
    std::printf("  [run] seed %llu %s: %.0f s, holdout psnr %.3f ssim %.4f uiqm %.4f\n",
                static_cast<unsigned long long>(seed), supervised_terms ? "full objective" : "adversarial only",
                run.seconds, run.holdout.aggregate.at("psnr_db").mean, run.holdout.aggregate.at("ssim").mean,
                run.holdout.aggregate.at("uiqm").mean);
    std::fflush(stdout);
    return cache.emplace(key, std::move(run)).first->second;
}

// ---- Criteria ----

Outcome c1_architecture() {
    const auto t0 = Clock::now();
    NoGradGuard no_grad;
    auto g = GeneratorNet::build();
    GeneratorProbe probe;
    const FTensor x = FTensor::zeros({1, 3, 256, 256});
    const FTensor y = g.forward(x, {ops::Mode::infer}, &probe);
    const Shape bottleneck = probe.encoder_out[4].shape();
    auto d = DiscriminatorNet::build();
    const FTensor map = d.forward(x, x, ops::Mode::infer);
    const double secs = seconds_since(t0);
    const bool ok = bottleneck == Shape{1, 256, 8, 8} && map.shape() == Shape{1, 1, 16, 16} &&
                    y.shape() == Shape{1, 3, 256, 256} && secs < 10.0;
    return {ok, "bottleneck " + shape_str(bottleneck) + ", validity map " + shape_str(map.shape()) + ", output " +
                    shape_str(y.shape()) + fmt(", %.2f s (< 10 s)", secs)};
}

Outcome c2_gradients() {
    const auto t0 = Clock::now();
    double worst = 0;
    std::string worst_name;
    std::size_t ops_checked = 0, elements = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        for (const auto& r : testing::grad_check_all_operators(seed)) {
            ++ops_checked;
            elements += r.result.checked;
            if (r.result.max_rel_error >= worst) {
                worst = r.result.max_rel_error;
                worst_name = r.name;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-3 && secs < 120.0,
            fmt("%zu operator checks over %zu elements, worst rel error %.2e (%s) < 1e-3, %.1f s (< 120 s)", ops_checked,
                elements, worst, worst_name.c_str(), secs)};
}

Outcome c3_loss_formulas() {
    const auto t0 = Clock::now();
    const FTensor x = FTensor::zeros({2, 3, 32, 32});
    const FTensor y = FTensor::full({2, 3, 32, 32}, 0.5f);
    // Logit 0 is probability 0.5 everywhere.
    const Critic half = [](const FTensor&, const FTensor& c) { return FTensor::zeros({c.dim(0), 1, 2, 2}); };
    const double d_loss = loss_adv_discriminator(half, x, y, x).item();
    const double d_prob = (ops::bce(FTensor::full({1, 1, 2, 2}, 0.5f), 1) +
                           ops::bce(FTensor::full({1, 1, 2, 2}, 0.5f), 0)).item();
    const double two_ln2 = 2 * std::numbers::ln2;
    const double sum = combine_paired(LossWeights{}, FTensor::scalar(0.6931f), FTensor::scalar(1.0f),
                                      FTensor::scalar(0.5f)).item();
    const Mapping identity = [](const FTensor& t) { return t; };
    const double cyc = loss_cycle(identity, identity, x, y).item();
    const LossWeights w;
    const bool defaults = w.lambda_1 == 0.7f && w.lambda_c == 0.3f && w.lambda_cyc == 0.1f;
    const double secs = seconds_since(t0);
    const bool ok = std::abs(d_loss - two_ln2) <= 1e-6 && std::abs(d_prob - two_ln2) <= 1e-6 &&
                    std::abs(sum - 1.5431) <= 1e-6 && cyc == 0.0 && defaults && secs < 10.0;
    return {ok, fmt("D loss at 0.5 = %.7f (logits) / %.7f (probs) vs 2ln2 %.7f; weighted sum %.7f vs 1.5431; "
                    "cycle(identity) %.1f; defaults %s; %.2f s",
                    d_loss, d_prob, two_ln2, sum, cyc, defaults ? "0.7/0.3/0.1" : "WRONG", secs)};
}

Outcome c4_paired_training() {
    const auto input = evaluate_inputs(desk_dataset().holdout);
    const auto& run = desk_run(0, true);
    const double dpsnr = run.holdout.aggregate.at("psnr_db").mean - input.aggregate.at("psnr_db").mean;
    const double dssim = run.holdout.aggregate.at("ssim").mean - input.aggregate.at("ssim").mean;
    const bool ok = dpsnr >= 2.0 && dssim >= 0.05 && run.seconds <= 1800.0;
    return {ok, fmt("%d train / %d holdout, %lld iterations: PSNR %.3f -> %.3f (%+.3f dB, need >= +2), "
                    "SSIM %.4f -> %.4f (%+.4f, need >= +0.05), %.0f s (<= 1800 s)",
                    kTrainPairs, kHoldoutPairs, static_cast<long long>(kPairedIterations),
                    input.aggregate.at("psnr_db").mean, run.holdout.aggregate.at("psnr_db").mean, dpsnr,
                    input.aggregate.at("ssim").mean, run.holdout.aggregate.at("ssim").mean, dssim, run.seconds)};
}

Outcome c5_unpaired_training() {
    const auto t0 = Clock::now();
    SynthOptions o;
    o.mode = DatasetMode::unpaired;
    o.count = 20;
    o.size = kDeskSize;
    o.seed = kDataSeed;
    o.severity_range = {0.4, 0.8};
    const auto layout = build_synthetic_dataset(work_dir() / "unpaired", o);
    const auto ds = load_dataset(layout, kDataSeed);
    TrainConfig c;
    c.mode = DatasetMode::unpaired;
    c.iterations = 500;
    c.image_size = kDeskSize;
    const auto s = train_unpaired(c, ds.train);
    double initial = 0, final_avg = 0;
    for (int i = 0; i < 10; ++i) initial += s.history[i].g_cyc / 10;
    for (std::size_t i = s.history.size() - 10; i < s.history.size(); ++i) final_avg += s.history[i].g_cyc / 10;
    const double last = s.history.back().g_cyc;
    const double secs = seconds_since(t0);
    // The end point is averaged the same way as the start so one noisy batch
    // cannot decide the outcome.
    return {final_avg < 0.5 * initial && secs <= 1800.0,
            fmt("cycle loss first-10 mean %.4f, last-10 mean %.4f (%.1f%%, need < 50%%), final iteration %.4f, "
                "%.0f s (<= 1800 s)",
                initial, final_avg, 100 * final_avg / initial, last, secs)};
}

Outcome c6_ablation() {
    int agree = 0;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const double full = desk_run(seed, true).holdout.aggregate.at("uiqm").mean;
        const double ablated = desk_run(seed, false).holdout.aggregate.at("uiqm").mean;
        if (ablated < full) ++agree;
        detail += fmt("seed %llu: full %.4f vs no-L1/no-con %.4f; ", static_cast<unsigned long long>(seed), full, ablated);
    }
    return {agree >= 2, detail + fmt("%d of 3 seeds lower without the terms (need >= 2)", agree)};
}

Outcome c7_metric_oracles() {
    const auto t0 = Clock::now();
    double worst = 0;
    auto track = [&](double a, double b) {
        worst = std::max(worst, std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}));
    };
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto a = oracle::random_image(64, 64, 1000 + seed);
        const auto b = oracle::add_noise(a, 12.0, 2000 + seed);
        track(metrics::psnr(a, b), oracle::oracle_psnr(a, b));
        track(metrics::ssim(a, b), oracle::oracle_ssim(a, b));
        const auto q = metrics::uiqm(a);
        track(q.uicm, oracle::oracle_uicm(a));
        track(q.uism, oracle::oracle_uism(a));
        track(q.uiconm, oracle::oracle_uiconm(a));
        track(q.uiqm, 0.0282 * oracle::oracle_uicm(a) + 0.2953 * oracle::oracle_uism(a) +
                          3.5753 * oracle::oracle_uiconm(a));
    }
    bool identities = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto a = oracle::random_image(64, 64, 3000 + seed);
        identities = identities && metrics::ssim(a, a) == 1.0 && metrics::psnr(a, a) == metrics::kPsnrCap;
        ImageU8 gray = a;
        for (std::size_t i = 0; i < gray.pixels.size(); i += 3) gray.pixels[i + 1] = gray.pixels[i + 2] = gray.pixels[i];
        identities = identities && metrics::uicm(gray) == 0.0;
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-6 && identities && secs < 60.0,
            fmt("20 random 64x64 images, worst rel deviation %.2e (<= 1e-6); identities %s; %.1f s (< 60 s)", worst,
                identities ? "exact" : "BROKEN", secs)};
}

Outcome c8_model_size() {
    const auto t0 = Clock::now();
    const auto g = GeneratorNet::build();
    const auto count = count_params(g);
    const auto path = work_dir() / "default_generator";
    save_weights(g, path);
    const auto on_disk = static_cast<std::int64_t>(fs::file_size(path));
    const double secs = seconds_since(t0);
    return {count.serialized_bytes < 60'000'000 && on_disk == count.serialized_bytes && secs < 10.0,
            fmt("%lld parameters, %lld serialized bytes (%.2f MB, need < 60 MB), file %lld bytes, %.2f s",
                static_cast<long long>(count.parameter_count), static_cast<long long>(count.serialized_bytes),
                count.serialized_bytes / 1e6, static_cast<long long>(on_disk), secs)};
}

Outcome c9_benchmark() {
    std::ostringstream out, err;
    const int code = cli::run({"bench", "--size", "256", "--runs", "10"}, out, err);
    if (code != 0) return {false, "bench exited " + std::to_string(code) + ": " + err.str()};
    std::istringstream lines(out.str());
    std::string line, last;
    while (std::getline(lines, line))
        if (!line.empty()) last = line;
    const auto j = nlohmann::json::parse(last);
    const double fps = j.at("mean_fps"), p50 = j.at("p50_ms"), p95 = j.at("p95_ms");
    return {fps > 0.5, fmt("256x256: mean %.2f FPS (need > 0.5), p50 %.1f ms, p95 %.1f ms", fps, p50, p95)};
}

Outcome c10_determinism() {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string detail;
    auto hash_all = [](const TrainState& s) {
        std::vector<FTensor> all;
        auto add = [&](const std::vector<NamedTensor>& st) {
            for (const auto& t : st) all.push_back(t.tensor);
        };
        add(s.g.state());
        add(s.d.state());
        if (s.config.mode == DatasetMode::unpaired) {
            add(s.g_r.state());
            add(s.d_x.state());
        }
        return nn::hash_tensors(all);
    };
    for (auto mode : {DatasetMode::paired, DatasetMode::unpaired}) {
        DatasetSplit split;
        if (mode == DatasetMode::paired) {
            split = desk_dataset().train;
        } else {
            for (const auto& p : desk_dataset().train.pairs) {
                split.poor.push_back({p.name, p.distorted});
                split.good.push_back({p.name, p.groundtruth});
            }
        }
        TrainConfig c;
        c.mode = mode;
        c.image_size = kDeskSize;
        c.iterations = 20;
        c.seed = 5;
        c.noise_mode = NoiseMode::dropout;
        auto a = init_training(c), b = init_training(c);
        train_until(a, split);
        train_until(b, split);
        auto first = init_training(c);
        train_until(first, split, 10);
        const auto path = work_dir() / (std::string("resume_") + to_string(mode));
        save_training(first, path);
        auto resumed = load_training(path);
        train_until(resumed, split);
        const bool same_history = a.history == b.history;
        const bool same_weights = hash_all(a) == hash_all(b);
        const bool resume_equal = hash_all(resumed) == hash_all(a) && resumed.history == a.history;
        ok = ok && same_history && same_weights && resume_equal;
        detail += fmt("%s: repeat history %s, weights %s, resume %s; ", to_string(mode),
                      same_history ? "bitwise equal" : "DIFFERS", same_weights ? "equal" : "DIFFER",
                      resume_equal ? "identical" : "DIFFERS");
    }
    const double secs = seconds_since(t0);
    return {ok && secs < 300.0, detail + fmt("%.0f s (< 300 s)", secs)};
}

Outcome c11_euvp() {
    const char* root = std::getenv("FUNIE_EUVP_DIR");
    if (!root) return {true, "set FUNIE_EUVP_DIR to an EUVP-layout paired folder to run (optional)", true};
    const char* iters_env = std::getenv("FUNIE_EUVP_ITERS");
    DatasetLayout layout{DatasetMode::paired, root};
    const auto ds = load_dataset(layout, 0, 256);
    TrainConfig c;
    c.image_size = 256;
    c.iterations = iters_env ? std::atoll(iters_env) : 60000;
    c.log_every = 1000;
    TrainHooks hooks;
    hooks.out_dir = work_dir() / "euvp";
    hooks.on_log = [](const LossRecord& r) {
        std::printf("  [euvp] iteration %lld total %.4f\n", static_cast<long long>(r.iteration), r.total);
        std::fflush(stdout);
    };
    const auto s = train_paired(c, ds.train, hooks);
    const auto input = evaluate_inputs(ds.holdout);
    const auto enhanced = evaluate_holdout(s.g, ds.holdout);
    std::string detail;
    for (const char* m : {"psnr_db", "ssim", "uiqm"}) {
        detail += fmt("%s Input %s / Enhanced %s; ", m, input.aggregate.at(m).formatted(4).c_str(),
                      enhanced.aggregate.at(m).formatted(4).c_str());
    }
    return {true, detail + "(informational)"};
}

struct Criterion {
    std::string id;
    std::string title;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {"C1", "architecture fidelity", c1_architecture},
        {"C2", "gradient correctness", c2_gradients},
        {"C3", "loss-formula fidelity", c3_loss_formulas},
        {"C4", "desk-scale paired training improves enhancement", c4_paired_training},
        {"C5", "desk-scale unpaired training is functional", c5_unpaired_training},
        {"C6", "ablation direction", c6_ablation},
        {"C7", "metric oracles", c7_metric_oracles},
        {"C8", "model-size sanity", c8_model_size},
        {"C9", "benchmark harness", c9_benchmark},
        {"C10", "determinism and resume", c10_determinism},
        {"C11", "optional EUVP integration", c11_euvp},
    };
    std::set<std::string> wanted(argv + 1, argv + argc);
    int failed = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const char* tag = o.skipped ? "SKIP" : o.pass ? "PASS" : "FAIL";
        if (!o.skipped && !o.pass) ++failed;
        std::printf("%s %s %s: %s\n", tag, c.id.c_str(), c.title.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
