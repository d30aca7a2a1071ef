#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "funie/checkpoint.hpp"
#include "funie/ops.hpp"
#include "funie/tensor.hpp"

namespace funie {

using FTensor = Tensor<float>;

enum class NoiseMode { off, dropout };

struct ForwardOptions {
    ops::Mode mode = ops::Mode::train;
    NoiseMode noise = NoiseMode::off;
    std::uint64_t noise_seed = 0;
};

struct BatchNormParams {
    FTensor gamma;
    FTensor beta;
    ops::RunningStats<float> stats;
};

/// Convolution (plain or transposed) with bias and optional batch norm.
struct ConvStage {
    std::string name;
    FTensor weight;
    FTensor bias;
    std::optional<BatchNormParams> bn;
};

struct NamedTensor {
    std::string name;
    FTensor tensor;
    bool trainable;
};

struct ParamCount {
    std::int64_t parameter_count;  // every stored scalar, trainable or not
    std::int64_t trainable_count;
    std::int64_t serialized_bytes;
};

inline constexpr float kLeakySlope = 0.2f;
inline constexpr float kInitStd = 0.02f;
inline constexpr float kDropoutRate = 0.5f;

/// Observation points for the skip wiring. `on_skip` may replace the tensor an
/// encoder stage (index 0..3 for e1..e4) sends across its skip connection; the
/// encoder chain itself is untouched.
struct GeneratorProbe {
    std::function<FTensor(int, const FTensor&)> on_skip;
    std::array<FTensor, 5> encoder_out;
    std::array<FTensor, 5> decoder_in;
};

/// Five stride-2 encoder stages, five stride-2 transposed decoder stages with
/// mirrored skips (e1,d5) (e2,d4) (e3,d3) (e4,d2), tanh output.
class GeneratorNet {
  public:
    static constexpr int kBottleneckChannels = 256;
    static constexpr int kDownsampleFactor = 32;
    using Plan = std::array<int, 5>;
    static constexpr Plan kDefaultPlan{32, 64, 128, 256, 256};

    static GeneratorNet build(const Plan& plan = kDefaultPlan, std::uint64_t seed = 0);

    FTensor forward(const FTensor& batch, const ForwardOptions& opts, GeneratorProbe* probe = nullptr);

    std::vector<FTensor> parameters() const;
    std::vector<NamedTensor> state() const;
    const Plan& channel_plan() const { return plan_; }
    std::uint64_t seed() const { return seed_; }

  private:
    Plan plan_{};
    std::uint64_t seed_ = 0;
    std::array<ConvStage, 5> encoder_;
    std::array<ConvStage, 5> decoder_;
};

/// Markovian patch discriminator over (condition ++ candidate): four 3x3
/// stride-2 stages and a 3x3 stride-1 single-channel validity head.
class DiscriminatorNet {
  public:
    static constexpr int kDownsampleFactor = 16;
    static constexpr int kInputChannels = 6;
    using Plan = std::vector<int>;
    static const Plan& default_plan();

    static DiscriminatorNet build(const Plan& plan = default_plan(), std::uint64_t seed = 0);

    /// Pre-sigmoid validity map [N,1,H/16,W/16].
    FTensor forward_logits(const FTensor& condition, const FTensor& candidate, ops::Mode mode);
    /// Per-patch validity probabilities in (0,1).
    FTensor forward(const FTensor& condition, const FTensor& candidate, ops::Mode mode);

    std::vector<FTensor> parameters() const;
    std::vector<NamedTensor> state() const;
    const Plan& channel_plan() const { return plan_; }
    std::uint64_t seed() const { return seed_; }

  private:
    Plan plan_;
    std::uint64_t seed_ = 0;
    std::vector<ConvStage> stages_;
    ConvStage head_;
};

// Shared helpers for conv stacks.
namespace nn {

ConvStage make_conv_stage(std::string name, std::int64_t out_c, std::int64_t in_c, int k, bool with_bn,
                          std::mt19937_64& rng, float init_std = kInitStd);
ConvStage make_transpose_stage(std::string name, std::int64_t in_c, std::int64_t out_c, int k, bool with_bn,
                               std::mt19937_64& rng, float init_std = kInitStd);
void append_state(const ConvStage& stage, std::vector<NamedTensor>& out);
void append_parameters(const ConvStage& stage, std::vector<FTensor>& out);

std::vector<checkpoint::TensorRecord> to_records(const std::vector<NamedTensor>& state);
/// Copies record values into `state` by name; every entry must be present with a matching shape.
void assign_records(const std::vector<NamedTensor>& state, const checkpoint::File& file,
                    const std::string& prefix = "");

/// Stable 64-bit hash of tensor values (FNV-1a over the raw bytes).
std::uint64_t hash_tensors(const std::vector<FTensor>& tensors);

}  // namespace nn

nlohmann::json generator_meta(const GeneratorNet& net);
nlohmann::json discriminator_meta(const DiscriminatorNet& net);

void save_weights(const GeneratorNet& net, const std::filesystem::path& path);
void save_weights(const DiscriminatorNet& net, const std::filesystem::path& path);
GeneratorNet load_generator(const std::filesystem::path& path);
DiscriminatorNet load_discriminator(const std::filesystem::path& path);
/// Rebuilds a generator from an already-decoded file whose tensors carry `prefix`.
GeneratorNet generator_from_file(const checkpoint::File& file, const nlohmann::json& meta,
                                 const std::string& prefix = "");
DiscriminatorNet discriminator_from_file(const checkpoint::File& file, const nlohmann::json& meta,
                                         const std::string& prefix = "");

ParamCount count_params(const GeneratorNet& net);
ParamCount count_params(const DiscriminatorNet& net);

}  // namespace funie
