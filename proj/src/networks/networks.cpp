#include "funie/networks.hpp"

#include <cstring>

#include "funie/rng.hpp"

namespace funie {

namespace nn {

namespace {

FTensor normal_tensor(Shape shape, float mean, float std, std::mt19937_64& rng) {
    std::normal_distribution<float> dist(mean, std);
    std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& e : v) e = dist(rng);
    return FTensor(std::move(shape), std::move(v), true);
}

BatchNormParams make_bn(std::int64_t channels, std::mt19937_64& rng) {
    BatchNormParams bn;
    bn.gamma = normal_tensor({channels}, 1.0f, kInitStd, rng);
    bn.beta = FTensor::zeros({channels}, true);
    bn.stats.mean = FTensor::zeros({channels});
    bn.stats.var = FTensor::full({channels}, 1.0f);
    return bn;
}

}  // namespace

ConvStage make_conv_stage(std::string name, std::int64_t out_c, std::int64_t in_c, int k, bool with_bn,
                          std::mt19937_64& rng, float init_std) {
    ConvStage s;
    s.name = std::move(name);
    s.weight = normal_tensor({out_c, in_c, k, k}, 0.0f, init_std, rng);
    s.bias = FTensor::zeros({out_c}, true);
    if (with_bn) s.bn = make_bn(out_c, rng);
    return s;
}

ConvStage make_transpose_stage(std::string name, std::int64_t in_c, std::int64_t out_c, int k, bool with_bn,
                               std::mt19937_64& rng, float init_std) {
    ConvStage s;
    s.name = std::move(name);
    s.weight = normal_tensor({in_c, out_c, k, k}, 0.0f, init_std, rng);
    s.bias = FTensor::zeros({out_c}, true);
    if (with_bn) s.bn = make_bn(out_c, rng);
    return s;
}

void append_state(const ConvStage& stage, std::vector<NamedTensor>& out) {
    out.push_back({stage.name + ".weight", stage.weight, true});
    out.push_back({stage.name + ".bias", stage.bias, true});
    if (stage.bn) {
        out.push_back({stage.name + ".bn.gamma", stage.bn->gamma, true});
        out.push_back({stage.name + ".bn.beta", stage.bn->beta, true});
        out.push_back({stage.name + ".bn.running_mean", stage.bn->stats.mean, false});
        out.push_back({stage.name + ".bn.running_var", stage.bn->stats.var, false});
    }
}

void append_parameters(const ConvStage& stage, std::vector<FTensor>& out) {
    out.push_back(stage.weight);
    out.push_back(stage.bias);
    if (stage.bn) {
        out.push_back(stage.bn->gamma);
        out.push_back(stage.bn->beta);
    }
}

std::vector<checkpoint::TensorRecord> to_records(const std::vector<NamedTensor>& state) {
    std::vector<checkpoint::TensorRecord> out;
    out.reserve(state.size());
    for (const auto& e : state) {
        auto v = e.tensor.values();
        out.push_back({e.name, e.tensor.shape(), std::vector<float>(v.begin(), v.end())});
    }
    return out;
}

void assign_records(const std::vector<NamedTensor>& state, const checkpoint::File& file, const std::string& prefix) {
    for (const auto& e : state) {
        const auto* rec = file.find(prefix + e.name);
        if (!rec) throw checkpoint::FormatError("missing tensor '" + prefix + e.name + "'", checkpoint::kPreambleBytes);
        if (rec->shape != e.tensor.shape()) {
            throw checkpoint::FormatError("shape mismatch for '" + prefix + e.name + "': file " + shape_str(rec->shape) +
                                              " vs model " + shape_str(e.tensor.shape()),
                                          checkpoint::kPreambleBytes);
        }
        auto dst = FTensor(e.tensor).mutable_values();
        std::copy(rec->values.begin(), rec->values.end(), dst.begin());
    }
}

std::uint64_t hash_tensors(const std::vector<FTensor>& tensors) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& t : tensors) {
        const auto* raw = reinterpret_cast<const unsigned char*>(t.values().data());
        for (std::size_t i = 0; i < 4 * t.numel(); ++i) {
            h ^= raw[i];
            h *= 0x100000001B3ULL;
        }
    }
    return h;
}

}  // namespace nn

namespace {

FTensor apply_bn(ConvStage& stage, const FTensor& x, ops::Mode mode) {
    if (!stage.bn) return x;
    return ops::batch_norm(x, stage.bn->gamma, stage.bn->beta, mode, stage.bn->stats);
}

void require_nchw3(const FTensor& x, const char* what) {
    if (x.rank() != 4 || x.dim(1) != 3)
        throw InvalidArgument(std::string(what) + " must be [N,3,H,W], got " + shape_str(x.shape()));
}

}  // namespace

GeneratorNet GeneratorNet::build(const Plan& plan, std::uint64_t seed) {
    for (int w : plan)
        if (w <= 0) throw InvalidArgument("generator channel plan widths must be positive");
    if (plan[4] != kBottleneckChannels) {
        throw InvalidArgument("generator bottleneck width must be " + std::to_string(kBottleneckChannels) + ", got " +
                              std::to_string(plan[4]));
    }
    GeneratorNet net;
    net.plan_ = plan;
    net.seed_ = seed;
    auto rng = make_rng(seed, "init");
    std::int64_t in_c = 3;
    for (int i = 0; i < 5; ++i) {
        net.encoder_[i] = nn::make_conv_stage("e" + std::to_string(i + 1), plan[i], in_c, 4, i > 0, rng);
        in_c = plan[i];
    }
    // d1 mirrors e4; d_k (k >= 2) reads [d_{k-1} ++ e_{6-k}]; d5 emits RGB.
    net.decoder_[0] = nn::make_transpose_stage("d1", plan[4], plan[3], 4, true, rng);
    for (int j = 1; j < 4; ++j) {
        const int skip = 4 - j;
        net.decoder_[j] =
            nn::make_transpose_stage("d" + std::to_string(j + 1), 2 * plan[skip], plan[skip - 1], 4, true, rng);
    }
    net.decoder_[4] = nn::make_transpose_stage("d5", 2 * plan[0], 3, 4, false, rng);
    return net;
}

FTensor GeneratorNet::forward(const FTensor& batch, const ForwardOptions& opts, GeneratorProbe* probe) {
    require_nchw3(batch, "generator input");
    const auto h = batch.dim(2), w = batch.dim(3);
    if (h % kDownsampleFactor != 0 || w % kDownsampleFactor != 0) {
        throw InvalidArgument("generator input height and width must be multiples of " +
                              std::to_string(kDownsampleFactor) + ", got " + std::to_string(h) + "x" +
                              std::to_string(w));
    }
    std::array<FTensor, 5> enc;
    FTensor x = batch;
    for (int i = 0; i < 5; ++i) {
        auto& st = encoder_[i];
        x = apply_bn(st, ops::leaky_relu(ops::conv2d(x, st.weight, st.bias, 2, 1), kLeakySlope), opts.mode);
        enc[i] = x;
        if (probe) probe->encoder_out[i] = x;
    }
    std::array<FTensor, 4> skips;
    for (int i = 0; i < 4; ++i) skips[i] = (probe && probe->on_skip) ? probe->on_skip(i, enc[i]) : enc[i];

    std::mt19937_64 noise_rng(opts.noise_seed);
    FTensor y = enc[4];
    for (int j = 0; j < 5; ++j) {
        if (j > 0) y = ops::concat_channels(y, skips[4 - j]);
        if (probe) probe->decoder_in[j] = y;
        auto& st = decoder_[j];
        y = ops::conv2d_transpose(y, st.weight, st.bias, 2, 1);
        if (j == 4) break;
        y = apply_bn(st, ops::leaky_relu(y, kLeakySlope), opts.mode);
        if (opts.noise == NoiseMode::dropout && j < 3) y = ops::dropout(y, kDropoutRate, noise_rng);
    }
    return ops::activation(y, ops::ActivationKind::tanh);
}

std::vector<FTensor> GeneratorNet::parameters() const {
    std::vector<FTensor> out;
    for (const auto& s : encoder_) nn::append_parameters(s, out);
    for (const auto& s : decoder_) nn::append_parameters(s, out);
    return out;
}

std::vector<NamedTensor> GeneratorNet::state() const {
    std::vector<NamedTensor> out;
    for (const auto& s : encoder_) nn::append_state(s, out);
    for (const auto& s : decoder_) nn::append_state(s, out);
    return out;
}

const DiscriminatorNet::Plan& DiscriminatorNet::default_plan() {
    static const Plan plan{32, 64, 128, 256};
    return plan;
}

DiscriminatorNet DiscriminatorNet::build(const Plan& plan, std::uint64_t seed) {
    if (plan.size() != 4) {
        throw InvalidArgument("discriminator channel plan needs 4 widths, got " + std::to_string(plan.size()));
    }
    for (int w : plan)
        if (w <= 0) throw InvalidArgument("discriminator channel plan widths must be positive");
    DiscriminatorNet net;
    net.plan_ = plan;
    net.seed_ = seed;
    auto rng = make_rng(seed, "init");
    std::int64_t in_c = kInputChannels;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        net.stages_.push_back(nn::make_conv_stage("c" + std::to_string(i + 1), plan[i], in_c, 3, i > 0, rng));
        in_c = plan[i];
    }
    net.head_ = nn::make_conv_stage("head", 1, in_c, 3, false, rng);
    return net;
}

FTensor DiscriminatorNet::forward_logits(const FTensor& condition, const FTensor& candidate, ops::Mode mode) {
    require_nchw3(condition, "discriminator condition");
    require_nchw3(candidate, "discriminator candidate");
    if (condition.shape() != candidate.shape()) {
        throw InvalidArgument("discriminator condition " + shape_str(condition.shape()) + " and candidate " +
                              shape_str(candidate.shape()) + " differ");
    }
    if (condition.dim(2) % kDownsampleFactor != 0 || condition.dim(3) % kDownsampleFactor != 0) {
        throw InvalidArgument("discriminator input height and width must be multiples of " +
                              std::to_string(kDownsampleFactor));
    }
    FTensor x = ops::concat_channels(condition, candidate);
    for (auto& st : stages_)
        x = apply_bn(st, ops::leaky_relu(ops::conv2d(x, st.weight, st.bias, 2, 1), kLeakySlope), mode);
    return ops::conv2d(x, head_.weight, head_.bias, 1, 1);
}

FTensor DiscriminatorNet::forward(const FTensor& condition, const FTensor& candidate, ops::Mode mode) {
    return ops::activation(forward_logits(condition, candidate, mode), ops::ActivationKind::sigmoid);
}

std::vector<FTensor> DiscriminatorNet::parameters() const {
    std::vector<FTensor> out;
    for (const auto& s : stages_) nn::append_parameters(s, out);
    nn::append_parameters(head_, out);
    return out;
}

std::vector<NamedTensor> DiscriminatorNet::state() const {
    std::vector<NamedTensor> out;
    for (const auto& s : stages_) nn::append_state(s, out);
    nn::append_state(head_, out);
    return out;
}

nlohmann::json generator_meta(const GeneratorNet& net) {
    return {{"model_kind", "generator"},
            {"channel_plan", std::vector<int>(net.channel_plan().begin(), net.channel_plan().end())},
            {"seed", net.seed()}};
}

nlohmann::json discriminator_meta(const DiscriminatorNet& net) {
    return {{"model_kind", "discriminator"}, {"channel_plan", net.channel_plan()}, {"seed", net.seed()}};
}

void save_weights(const GeneratorNet& net, const std::filesystem::path& path) {
    checkpoint::write_file(path, generator_meta(net), nn::to_records(net.state()));
}

void save_weights(const DiscriminatorNet& net, const std::filesystem::path& path) {
    checkpoint::write_file(path, discriminator_meta(net), nn::to_records(net.state()));
}

namespace {

template <typename Net>
Net rebuild(const checkpoint::File& file, const nlohmann::json& meta, const std::string& prefix,
            Net (*make)(const nlohmann::json&)) {
    Net net;
    try {
        net = make(meta);
    } catch (const nlohmann::json::exception& e) {
        throw checkpoint::FormatError(std::string("bad architecture record: ") + e.what(), checkpoint::kPreambleBytes);
    } catch (const InvalidArgument& e) {
        throw checkpoint::FormatError(std::string("bad architecture record: ") + e.what(), checkpoint::kPreambleBytes);
    }
    nn::assign_records(net.state(), file, prefix);
    return net;
}

GeneratorNet make_generator(const nlohmann::json& meta) {
    const auto v = meta.at("channel_plan").get<std::vector<int>>();
    if (v.size() != 5) throw InvalidArgument("generator plan needs 5 widths");
    GeneratorNet::Plan plan{};
    std::copy(v.begin(), v.end(), plan.begin());
    return GeneratorNet::build(plan, meta.at("seed").get<std::uint64_t>());
}

DiscriminatorNet make_discriminator(const nlohmann::json& meta) {
    return DiscriminatorNet::build(meta.at("channel_plan").get<std::vector<int>>(), meta.at("seed").get<std::uint64_t>());
}

}  // namespace

GeneratorNet generator_from_file(const checkpoint::File& file, const nlohmann::json& meta, const std::string& prefix) {
    return rebuild<GeneratorNet>(file, meta, prefix, &make_generator);
}

DiscriminatorNet discriminator_from_file(const checkpoint::File& file, const nlohmann::json& meta,
                                         const std::string& prefix) {
    return rebuild<DiscriminatorNet>(file, meta, prefix, &make_discriminator);
}

GeneratorNet load_generator(const std::filesystem::path& path) {
    auto file = checkpoint::read_file(path);
    if (file.header["model_kind"] != "generator") {
        throw checkpoint::FormatError("expected model_kind 'generator', got " + file.header["model_kind"].dump(),
                                      checkpoint::kPreambleBytes);
    }
    return generator_from_file(file, file.header);
}

DiscriminatorNet load_discriminator(const std::filesystem::path& path) {
    auto file = checkpoint::read_file(path);
    if (file.header["model_kind"] != "discriminator") {
        throw checkpoint::FormatError("expected model_kind 'discriminator', got " + file.header["model_kind"].dump(),
                                      checkpoint::kPreambleBytes);
    }
    return discriminator_from_file(file, file.header);
}

namespace {

ParamCount count_state(const std::vector<NamedTensor>& state, const nlohmann::json& meta) {
    ParamCount c{0, 0, 0};
    for (const auto& e : state) {
        c.parameter_count += static_cast<std::int64_t>(e.tensor.numel());
        if (e.trainable) c.trainable_count += static_cast<std::int64_t>(e.tensor.numel());
    }
    c.serialized_bytes = static_cast<std::int64_t>(checkpoint::serialized_size(meta, nn::to_records(state)));
    return c;
}

}  // namespace

ParamCount count_params(const GeneratorNet& net) { return count_state(net.state(), generator_meta(net)); }
ParamCount count_params(const DiscriminatorNet& net) { return count_state(net.state(), discriminator_meta(net)); }

}  // namespace funie
