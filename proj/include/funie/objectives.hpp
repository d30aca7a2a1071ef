#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "funie/networks.hpp"

namespace funie {

struct LossWeights {
    float lambda_1 = 0.7f;
    float lambda_c = 0.3f;
    float lambda_cyc = 0.1f;
    bool enable_l1 = true;
    bool enable_con = true;

    /// Throws InvalidArgument when any weight is negative or non-finite.
    void validate() const;
};

/// Image-to-image mapping (a generator or a stand-in).
using Mapping = std::function<FTensor(const FTensor&)>;
/// Conditioned critic returning pre-sigmoid validity logits.
using Critic = std::function<FTensor(const FTensor& condition, const FTensor& candidate)>;

Mapping as_mapping(GeneratorNet& net, ForwardOptions opts);
Critic as_critic(DiscriminatorNet& net, ops::Mode mode);

/// Fixed (never trained) convolutional feature stack used by the content loss.
class ContentExtractor {
  public:
    static constexpr int kStages = 5;
    static constexpr int kMinSize = 32;
    using Plan = std::array<int, kStages>;
    static constexpr Plan kDefaultPlan{16, 32, 64, 128, 160};

    /// Seeded random features: 3x3 stride-2 convs with He-scaled normal weights.
    static ContentExtractor build(const Plan& plan = kDefaultPlan, std::uint64_t seed = 0);
    /// Loads a `content-extractor` checkpoint.
    static ContentExtractor load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    FTensor features(const FTensor& images) const;

    const Plan& channel_plan() const { return plan_; }
    std::vector<FTensor> tensors() const;
    std::uint64_t fingerprint() const { return nn::hash_tensors(tensors()); }

  private:
    Plan plan_{};
    std::uint64_t seed_ = 0;
    std::vector<ConvStage> stages_;
};

/// bce(D(x, y_real), 1) + bce(D(x, y_fake), 0); y_fake is detached here.
FTensor loss_adv_discriminator(const Critic& d, const FTensor& x_cond, const FTensor& y_real, const FTensor& y_fake);
/// Non-saturating generator term bce(D(x, y_fake), 1).
FTensor loss_adv_generator(const Critic& d, const FTensor& x_cond, const FTensor& y_fake);
/// Mean absolute difference.
FTensor loss_global_similarity(const FTensor& y_true, const FTensor& y_gen);
/// Mean squared difference of extractor features.
FTensor loss_content(const ContentExtractor& phi, const FTensor& y_true, const FTensor& y_gen);

struct PairedTerms {
    FTensor total;
    float adv = 0;
    float l1 = 0;   // 0 when disabled
    float con = 0;  // 0 when disabled
};

/// adv + lambda_1 * l1 + lambda_c * con, skipping disabled terms entirely.
FTensor combine_paired(const LossWeights& w, const FTensor& adv, const FTensor& l1, const FTensor& con);

PairedTerms paired_generator_objective(const LossWeights& w, const Critic& d, const ContentExtractor& phi,
                                       const FTensor& x, const FTensor& y_true, const FTensor& y_gen);

/// mean|x - G_R(G_F(x))| + mean|y - G_F(G_R(y))|.
FTensor loss_cycle(const Mapping& g_f, const Mapping& g_r, const FTensor& x, const FTensor& y);

/// Unpaired critics judge an image on its own: the candidate doubles as the
/// condition. Fakes are detached.
FTensor loss_adv_discriminator_unpaired(const Critic& d, const FTensor& real, const FTensor& fake);
FTensor loss_adv_generator_unpaired(const Critic& d, const FTensor& fake);

struct UnpairedTerms {
    FTensor generator_total;  // adv_f + adv_r + lambda_cyc * cycle
    FTensor loss_dx;
    FTensor loss_dy;
    float adv = 0;  // adv_f + adv_r
    float cycle = 0;
};

/// Generator-side terms from already computed fakes, so a trainer can update
/// the critics in between. fake_y = G_F(x), fake_x = G_R(y).
FTensor unpaired_generator_loss(const LossWeights& w, const Mapping& g_f, const Mapping& g_r, const Critic& d_x,
                                const Critic& d_y, const FTensor& x, const FTensor& y, const FTensor& fake_y,
                                const FTensor& fake_x, float* adv_out = nullptr, float* cycle_out = nullptr);

UnpairedTerms unpaired_objective(const LossWeights& w, const Mapping& g_f, const Mapping& g_r, const Critic& d_x,
                                 const Critic& d_y, const FTensor& x, const FTensor& y);

}  // namespace funie
