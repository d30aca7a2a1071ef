#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "funie/objectives.hpp"
#include "funie/optim.hpp"

using namespace funie;

namespace {

FTensor random_image_batch(std::int64_t n, std::int64_t h, std::int64_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> v(static_cast<std::size_t>(n * 3 * h * w));
    for (auto& e : v) e = dist(rng);
    return FTensor({n, 3, h, w}, std::move(v));
}

// Critic with constant logit `z`, ignoring its inputs except for shape.
Critic constant_critic(float z) {
    return [z](const FTensor&, const FTensor& y) {
        return FTensor::full({y.dim(0), 1, y.dim(2) / 16, y.dim(3) / 16}, z);
    };
}

const Mapping identity = [](const FTensor& x) { return x; };

std::vector<std::vector<float>> grads_of(const std::vector<FTensor>& params) {
    std::vector<std::vector<float>> out;
    for (const auto& p : params) {
        if (p.has_grad()) {
            out.emplace_back(p.grad().begin(), p.grad().end());
        } else {
            out.emplace_back(p.numel(), 0.0f);
        }
    }
    return out;
}

const GeneratorNet::Plan kSmallPlan{8, 8, 16, 16, 256};

}  // namespace

TEST_CASE("weighted sum of paired terms") {
    LossWeights w;
    auto total = combine_paired(w, FTensor::scalar(0.6931f), FTensor::scalar(1.0f), FTensor::scalar(0.5f));
    CHECK(total.item() == doctest::Approx(1.5431).epsilon(1e-6));

    w.enable_l1 = false;
    CHECK(combine_paired(w, FTensor::scalar(0.6931f), FTensor::scalar(1.0f), FTensor::scalar(0.5f)).item() ==
          doctest::Approx(0.6931 + 0.15).epsilon(1e-6));
    w.enable_con = false;
    CHECK(combine_paired(w, FTensor::scalar(0.6931f), {}, {}).item() == doctest::Approx(0.6931));

    LossWeights bad;
    bad.lambda_c = -0.1f;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = {};
    bad.lambda_cyc = std::nanf("");
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("adversarial terms at an undecided critic") {
    auto x = random_image_batch(2, 32, 32, 1);
    auto y = random_image_batch(2, 32, 32, 2);
    auto d = constant_critic(0.0f);
    CHECK(loss_adv_discriminator(d, x, y, y).item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-6));
    CHECK(loss_adv_generator(d, x, y).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));

    auto terms = unpaired_objective(LossWeights{}, identity, identity, d, d, x, y);
    CHECK(terms.cycle == 0.0f);
    CHECK(terms.generator_total.item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-6));
    CHECK(terms.loss_dx.item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-6));
    CHECK(terms.loss_dy.item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-6));

    CHECK_THROWS_AS(loss_adv_discriminator(d, x, y, random_image_batch(2, 64, 64, 3)), InvalidArgument);
}

TEST_CASE("pixel and cycle terms") {
    auto zeros = FTensor::zeros({1, 3, 32, 32});
    auto half = FTensor::full({1, 3, 32, 32}, 0.5f);
    CHECK(loss_global_similarity(zeros, half).item() == doctest::Approx(0.5));
    CHECK(loss_global_similarity(half, half).item() == 0.0f);

    Mapping shift = [](const FTensor& t) { return t + FTensor::full(t.shape(), 0.1f); };
    auto x = random_image_batch(1, 32, 32, 4);
    CHECK(loss_cycle(identity, identity, x, x).item() == 0.0f);
    CHECK(loss_cycle(shift, identity, x, x).item() == doctest::Approx(0.2).epsilon(1e-5));
}

TEST_CASE("content extractor") {
    auto phi = ContentExtractor::build();
    auto x = random_image_batch(2, 64, 64, 5);
    auto f = phi.features(x);
    CHECK(f.shape() == Shape{2, 160, 2, 2});
    CHECK(loss_content(phi, x, x).item() == 0.0f);
    CHECK(loss_content(phi, x, random_image_batch(2, 64, 64, 6)).item() > 0.0f);
    for (const auto& t : phi.tensors()) CHECK_FALSE(t.requires_grad());

    try {
        phi.features(random_image_batch(1, 16, 16, 7));
        FAIL("expected InvalidArgument");
    } catch (const InvalidArgument& e) {
        CHECK(std::string(e.what()).find("32") != std::string::npos);
    }

    auto dir = std::filesystem::temp_directory_path() / "funie_test_objectives";
    std::filesystem::create_directories(dir);
    auto other = ContentExtractor::build(ContentExtractor::kDefaultPlan, 77);
    CHECK(other.fingerprint() != phi.fingerprint());
    other.save(dir / "phi.fung");
    auto loaded = ContentExtractor::load(dir / "phi.fung");
    CHECK(loaded.fingerprint() == other.fingerprint());

    save_weights(DiscriminatorNet::build(), dir / "d.fung");
    CHECK_THROWS_AS(ContentExtractor::load(dir / "d.fung"), checkpoint::FormatError);
}

TEST_CASE("discriminator loss does not reach the generator") {
    auto g = GeneratorNet::build(kSmallPlan, 1);
    auto d = DiscriminatorNet::build({8, 8, 8, 8}, 2);
    auto x = random_image_batch(2, 32, 32, 8);
    auto y = random_image_batch(2, 32, 32, 9);
    auto fake = g.forward(x, {ops::Mode::train});
    loss_adv_discriminator(as_critic(d, ops::Mode::train), x, y, fake).backward();
    for (const auto& p : g.parameters()) CHECK_FALSE(p.has_grad());
    bool any = false;
    for (const auto& p : d.parameters()) {
        if (!p.has_grad()) continue;
        for (float v : p.grad()) any = any || v != 0.0f;
    }
    CHECK(any);
}

TEST_CASE("disabled terms leave exactly the remaining gradient") {
    auto phi = ContentExtractor::build();
    auto d = DiscriminatorNet::build({8, 8, 8, 8}, 3);
    auto critic = as_critic(d, ops::Mode::infer);
    auto x = random_image_batch(2, 32, 32, 10);
    auto y = random_image_batch(2, 32, 32, 11);

    for (int variant = 0; variant < 3; ++variant) {
        LossWeights w;
        w.enable_l1 = variant != 0;
        w.enable_con = variant != 1;
        if (variant == 2) w.enable_l1 = w.enable_con = false;

        auto g1 = GeneratorNet::build(kSmallPlan, 4);
        auto terms = paired_generator_objective(w, critic, phi, x, y, g1.forward(x, {ops::Mode::train}));
        if (!w.enable_l1) CHECK(terms.l1 == 0.0f);
        if (!w.enable_con) CHECK(terms.con == 0.0f);
        terms.total.backward();

        auto g2 = GeneratorNet::build(kSmallPlan, 4);
        auto gen = g2.forward(x, {ops::Mode::train});
        FTensor manual = loss_adv_generator(critic, x, gen);
        if (w.enable_l1) manual = manual + loss_global_similarity(y, gen) * w.lambda_1;
        if (w.enable_con) manual = manual + loss_content(phi, y, gen) * w.lambda_c;
        CHECK(manual.item() == terms.total.item());
        manual.backward();

        CHECK(grads_of(g1.parameters()) == grads_of(g2.parameters()));
    }
}

TEST_CASE("a small generator step lowers the paired objective under a frozen critic") {
    const auto phi = ContentExtractor::build();
    const auto phi_hash = phi.fingerprint();
    int decreased = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto g = GeneratorNet::build(kSmallPlan, 100 + seed);
        auto d = DiscriminatorNet::build({8, 8, 8, 8}, 200 + seed);
        const auto d_hash = nn::hash_tensors(d.parameters());
        auto critic = as_critic(d, ops::Mode::infer);
        auto x = random_image_batch(2, 32, 32, 300 + seed);
        auto y = random_image_batch(2, 32, 32, 400 + seed);
        LossWeights w;

        auto before = paired_generator_objective(w, critic, phi, x, y, g.forward(x, {ops::Mode::train}));
        before.total.backward();
        auto params = g.parameters();
        OptimState<float> opt;
        opt.config.learning_rate = 1e-5;
        adam_step(params, opt);
        zero_grads(params);

        NoGradGuard no_grad;
        auto after = paired_generator_objective(w, critic, phi, x, y, g.forward(x, {ops::Mode::train}));
        if (after.total.item() < before.total.item()) ++decreased;
        CHECK(nn::hash_tensors(d.parameters()) == d_hash);
    }
    CHECK(decreased >= 18);
    CHECK(phi.fingerprint() == phi_hash);
    for (const auto& t : phi.tensors()) CHECK_FALSE(t.has_grad());
}
