#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "funie/dataset.hpp"
#include "funie/metrics.hpp"
#include "funie/objectives.hpp"
#include "funie/optim.hpp"

namespace funie {

struct TrainConfig {
    DatasetMode mode = DatasetMode::paired;
    int batch_size = 8;
    std::int64_t iterations = 500;
    int image_size = 64;
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    LossWeights loss_weights;
    NoiseMode noise_mode = NoiseMode::off;
    std::uint64_t seed = 0;
    std::int64_t checkpoint_every = 0;  // 0 = only the final checkpoint
    std::int64_t log_every = 50;
    /// Skip the discriminator update when its loss falls below this value.
    std::optional<double> d_skip_below;
    /// Identity pre-training passes over the pools before unpaired training.
    int warmup_epochs = 0;
    bool augment = true;  // random flip/transpose per batch item
    GeneratorNet::Plan generator_plan = GeneratorNet::kDefaultPlan;
    std::vector<int> discriminator_plan = DiscriminatorNet::default_plan();
    std::uint64_t content_seed = 0;
    std::string content_weights;  // optional content-extractor checkpoint

    void validate() const;
    AdamConfig adam() const;
    nlohmann::json to_json() const;
    /// Starts from defaults; keys present in `j` override them. Unknown keys throw.
    static TrainConfig from_json(const nlohmann::json& j);
};

struct LossRecord {
    std::int64_t iteration = 0;  // 1-based
    double d_loss = 0;
    double g_adv = 0;
    double g_l1 = 0;
    double g_con = 0;
    double g_cyc = 0;
    double total = 0;  // generator objective
    bool d_skipped = false;

    friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

/// Everything needed to continue a run: networks, optimizer moments,
/// iteration counter and loss history. In unpaired mode `g` is G_F (X->Y),
/// `g_r` is G_R (Y->X), `d` judges domain Y and `d_x` judges domain X.
struct TrainState {
    TrainConfig config;
    std::int64_t iteration = 0;
    GeneratorNet g;
    DiscriminatorNet d;
    GeneratorNet g_r;
    DiscriminatorNet d_x;
    OptimState<float> opt_g;  // G (paired) or G_F and G_R jointly (unpaired)
    OptimState<float> opt_d;
    OptimState<float> opt_d_x;
    std::vector<LossRecord> history;

    std::vector<FTensor> generator_parameters() const;
};

struct TrainHooks {
    std::function<void(const LossRecord&)> on_log;  // every log_every iterations
    std::filesystem::path out_dir;                   // periodic checkpoints, diagnostics
    std::function<void(TrainState&)> before_iteration;
    std::function<void(TrainState&)> after_discriminator_step;
};

TrainState init_training(const TrainConfig& config);

/// Runs iterations until state.iteration == target (or config.iterations when
/// target is 0). Paired: D step on detached fakes, then G step. Unpaired: D_Y
/// and D_X steps, then a joint G_F/G_R step.
void train_until(TrainState& state, const DatasetSplit& train, std::int64_t target = 0, const TrainHooks& hooks = {});

TrainState train_paired(const TrainConfig& config, const DatasetSplit& train, const TrainHooks& hooks = {});
TrainState train_unpaired(const TrainConfig& config, const DatasetSplit& train, const TrainHooks& hooks = {});

/// Pre-trains the generators towards the identity map with an L1 objective.
/// Returns the final warmup loss.
double identity_warmup(TrainState& state, const DatasetSplit& train, int epochs);

void save_training(const TrainState& state, const std::filesystem::path& path);
TrainState load_training(const std::filesystem::path& path);

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path);

/// Generator for inference from a weights file or a training checkpoint
/// (the forward generator for unpaired runs).
GeneratorNet load_inference_generator(const std::filesystem::path& path);

/// Enhances one image in infer mode; dimensions must be multiples of 32.
ImageU8 enhance_image(const GeneratorNet& g, const ImageU8& img);

/// Paired holdout: metrics of G(distorted) against ground truth. Unpaired
/// holdout: no-reference metrics of G(poor).
metrics::MetricReport evaluate_holdout(const GeneratorNet& g, const DatasetSplit& holdout);
/// The same report for the unenhanced inputs.
metrics::MetricReport evaluate_inputs(const DatasetSplit& holdout);

struct BenchmarkResult {
    double mean_fps = 0;
    double p50_ms = 0;
    double p95_ms = 0;
    double mean_ms = 0;
    std::int64_t parameter_count = 0;
    std::int64_t serialized_bytes = 0;
    std::vector<double> samples_ms;

    nlohmann::json to_json() const;
};

/// Times `runs` single-image forward passes after `warmup` untimed ones.
BenchmarkResult benchmark_inference(const GeneratorNet& g, int image_size, int runs, int warmup = 3);

}  // namespace funie
