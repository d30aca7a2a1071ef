#include "funie/objectives.hpp"

#include <cmath>

#include "funie/rng.hpp"

namespace funie {

void LossWeights::validate() const {
    for (float v : {lambda_1, lambda_c, lambda_cyc}) {
        if (!std::isfinite(v) || v < 0.0f) throw InvalidArgument("loss weights must be finite and >= 0");
    }
}

Mapping as_mapping(GeneratorNet& net, ForwardOptions opts) {
    return [&net, opts](const FTensor& x) { return net.forward(x, opts); };
}

Critic as_critic(DiscriminatorNet& net, ops::Mode mode) {
    return [&net, mode](const FTensor& c, const FTensor& y) { return net.forward_logits(c, y, mode); };
}

ContentExtractor ContentExtractor::build(const Plan& plan, std::uint64_t seed) {
    ContentExtractor phi;
    phi.plan_ = plan;
    phi.seed_ = seed;
    auto rng = make_rng(seed, "content-extractor");
    std::int64_t in_c = 3;
    for (int i = 0; i < kStages; ++i) {
        if (plan[i] <= 0) throw InvalidArgument("content extractor widths must be positive");
        const float he = std::sqrt(2.0f / static_cast<float>(in_c * 9));
        auto st = nn::make_conv_stage("f" + std::to_string(i + 1), plan[i], in_c, 3, false, rng, he);
        st.weight.set_requires_grad(false);
        st.bias.set_requires_grad(false);
        phi.stages_.push_back(std::move(st));
        in_c = plan[i];
    }
    return phi;
}

std::vector<FTensor> ContentExtractor::tensors() const {
    std::vector<FTensor> out;
    for (const auto& s : stages_) nn::append_parameters(s, out);
    return out;
}

void ContentExtractor::save(const std::filesystem::path& path) const {
    std::vector<NamedTensor> state;
    for (const auto& s : stages_) nn::append_state(s, state);
    nlohmann::json meta = {{"model_kind", "content-extractor"},
                           {"channel_plan", std::vector<int>(plan_.begin(), plan_.end())},
                           {"seed", seed_}};
    checkpoint::write_file(path, meta, nn::to_records(state));
}

ContentExtractor ContentExtractor::load(const std::filesystem::path& path) {
    auto file = checkpoint::read_file(path);
    if (file.header["model_kind"] != "content-extractor") {
        throw checkpoint::FormatError("expected model_kind 'content-extractor', got " +
                                          file.header["model_kind"].dump(),
                                      checkpoint::kPreambleBytes);
    }
    Plan plan{};
    std::uint64_t seed = 0;
    try {
        auto v = file.header.at("channel_plan").get<std::vector<int>>();
        if (v.size() != kStages) throw InvalidArgument("content extractor plan needs 5 widths");
        std::copy(v.begin(), v.end(), plan.begin());
        seed = file.header.value("seed", std::uint64_t{0});
    } catch (const std::exception& e) {
        throw checkpoint::FormatError(std::string("bad content-extractor header: ") + e.what(),
                                      checkpoint::kPreambleBytes);
    }
    auto phi = build(plan, seed);
    std::vector<NamedTensor> state;
    for (const auto& s : phi.stages_) nn::append_state(s, state);
    nn::assign_records(state, file);
    return phi;
}

FTensor ContentExtractor::features(const FTensor& images) const {
    if (images.rank() != 4 || images.dim(1) != 3)
        throw InvalidArgument("content extractor input must be [N,3,H,W], got " + shape_str(images.shape()));
    if (images.dim(2) < kMinSize || images.dim(3) < kMinSize) {
        throw InvalidArgument("content extractor needs at least " + std::to_string(kMinSize) + "x" +
                              std::to_string(kMinSize) + " inputs for its 5 stride-2 stages, got " +
                              shape_str(images.shape()));
    }
    FTensor x = images;
    for (const auto& st : stages_) x = ops::leaky_relu(ops::conv2d(x, st.weight, st.bias, 2, 1), kLeakySlope);
    return x;
}

FTensor loss_adv_discriminator(const Critic& d, const FTensor& x_cond, const FTensor& y_real, const FTensor& y_fake) {
    if (y_real.shape() != y_fake.shape() || x_cond.shape() != y_real.shape()) {
        throw InvalidArgument("adversarial loss: shape mismatch between condition " + shape_str(x_cond.shape()) +
                              ", real " + shape_str(y_real.shape()) + " and fake " + shape_str(y_fake.shape()));
    }
    auto real = ops::bce_with_logits(d(x_cond, y_real), 1);
    auto fake = ops::bce_with_logits(d(x_cond, y_fake.detach()), 0);
    return real + fake;
}

FTensor loss_adv_generator(const Critic& d, const FTensor& x_cond, const FTensor& y_fake) {
    if (x_cond.shape() != y_fake.shape()) {
        throw InvalidArgument("adversarial loss: condition " + shape_str(x_cond.shape()) + " vs fake " +
                              shape_str(y_fake.shape()));
    }
    return ops::bce_with_logits(d(x_cond, y_fake), 1);
}

FTensor loss_global_similarity(const FTensor& y_true, const FTensor& y_gen) {
    return ops::reduce_loss(y_gen, y_true, ops::LossKind::mean_abs);
}

FTensor loss_content(const ContentExtractor& phi, const FTensor& y_true, const FTensor& y_gen) {
    if (y_true.shape() != y_gen.shape()) {
        throw InvalidArgument("content loss: shape mismatch " + shape_str(y_true.shape()) + " vs " +
                              shape_str(y_gen.shape()));
    }
    return ops::reduce_loss(phi.features(y_gen), phi.features(y_true), ops::LossKind::mean_sq);
}

FTensor combine_paired(const LossWeights& w, const FTensor& adv, const FTensor& l1, const FTensor& con) {
    w.validate();
    FTensor total = adv;
    if (w.enable_l1) total = total + l1 * w.lambda_1;
    if (w.enable_con) total = total + con * w.lambda_c;
    return total;
}

PairedTerms paired_generator_objective(const LossWeights& w, const Critic& d, const ContentExtractor& phi,
                                       const FTensor& x, const FTensor& y_true, const FTensor& y_gen) {
    w.validate();
    PairedTerms terms;
    auto adv = loss_adv_generator(d, x, y_gen);
    terms.adv = adv.item();
    FTensor l1, con;
    if (w.enable_l1) {
        l1 = loss_global_similarity(y_true, y_gen);
        terms.l1 = l1.item();
    }
    if (w.enable_con) {
        con = loss_content(phi, y_true, y_gen);
        terms.con = con.item();
    }
    terms.total = combine_paired(w, adv, l1, con);
    return terms;
}

FTensor loss_cycle(const Mapping& g_f, const Mapping& g_r, const FTensor& x, const FTensor& y) {
    auto forward_cycle = ops::reduce_loss(x, g_r(g_f(x)), ops::LossKind::mean_abs);
    auto backward_cycle = ops::reduce_loss(y, g_f(g_r(y)), ops::LossKind::mean_abs);
    return forward_cycle + backward_cycle;
}

FTensor loss_adv_discriminator_unpaired(const Critic& d, const FTensor& real, const FTensor& fake) {
    if (real.shape() != fake.shape()) {
        throw InvalidArgument("adversarial loss: real " + shape_str(real.shape()) + " vs fake " +
                              shape_str(fake.shape()));
    }
    auto detached = fake.detach();
    return ops::bce_with_logits(d(real, real), 1) + ops::bce_with_logits(d(detached, detached), 0);
}

FTensor loss_adv_generator_unpaired(const Critic& d, const FTensor& fake) {
    return ops::bce_with_logits(d(fake, fake), 1);
}

FTensor unpaired_generator_loss(const LossWeights& w, const Mapping& g_f, const Mapping& g_r, const Critic& d_x,
                                const Critic& d_y, const FTensor& x, const FTensor& y, const FTensor& fake_y,
                                const FTensor& fake_x, float* adv_out, float* cycle_out) {
    w.validate();
    auto adv = loss_adv_generator_unpaired(d_y, fake_y) + loss_adv_generator_unpaired(d_x, fake_x);
    auto cycle = ops::reduce_loss(x, g_r(fake_y), ops::LossKind::mean_abs) +
                 ops::reduce_loss(y, g_f(fake_x), ops::LossKind::mean_abs);
    if (adv_out) *adv_out = adv.item();
    if (cycle_out) *cycle_out = cycle.item();
    return adv + cycle * w.lambda_cyc;
}

UnpairedTerms unpaired_objective(const LossWeights& w, const Mapping& g_f, const Mapping& g_r, const Critic& d_x,
                                 const Critic& d_y, const FTensor& x, const FTensor& y) {
    UnpairedTerms terms;
    auto fake_y = g_f(x);
    auto fake_x = g_r(y);
    terms.loss_dy = loss_adv_discriminator_unpaired(d_y, y, fake_y);
    terms.loss_dx = loss_adv_discriminator_unpaired(d_x, x, fake_x);
    terms.generator_total =
        unpaired_generator_loss(w, g_f, g_r, d_x, d_y, x, y, fake_y, fake_x, &terms.adv, &terms.cycle);
    return terms;
}

}  // namespace funie
