#include "funie/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>

#include "funie/rng.hpp"

namespace funie {

namespace {

using nlohmann::json;

NoiseMode parse_noise_mode(const std::string& text) {
    if (text == "off") return NoiseMode::off;
    if (text == "dropout") return NoiseMode::dropout;
    throw InvalidArgument("noise mode must be 'off' or 'dropout', got '" + text + "'");
}

const char* noise_name(NoiseMode m) { return m == NoiseMode::dropout ? "dropout" : "off"; }

// Shortest decimal that reads back as the same float, so 0.7f prints as 0.7.
double float_json(float v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::strtod(std::string(buf, res.ptr).c_str(), nullptr);
}

// Temporarily stops gradient accumulation into a network that is not being
// updated in the current step.
class FreezeGuard {
  public:
    explicit FreezeGuard(std::vector<FTensor> params) : params_(std::move(params)) {
        for (auto& p : params_) p.set_requires_grad(false);
    }
    ~FreezeGuard() {
        for (auto& p : params_) p.set_requires_grad(true);
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

  private:
    std::vector<FTensor> params_;
};

// One of the 8 symmetries of the square: bit 0 mirrors x, bit 1 mirrors y,
// bit 2 transposes. Degradations here are isotropic, so pairs stay valid.
ImageU8 dihedral(const ImageU8& img, unsigned k) {
    const int n = img.width;
    ImageU8 out(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            int sx = (k & 1) ? n - 1 - x : x;
            int sy = (k & 2) ? n - 1 - y : y;
            if (k & 4) std::swap(sx, sy);
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
        }
    return out;
}

// `count` distinct indices from [0, n) via a partial Fisher-Yates shuffle.
std::vector<std::size_t> draw_indices(std::size_t n, std::size_t count, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(count);
    return idx;
}

// Builds batch tensors from parallel image lists, transforming whole rows
// together so pairs stay aligned.
std::vector<FTensor> make_batches(const std::vector<std::vector<const ImageU8*>>& columns, bool augment,
                                  std::mt19937_64& rng) {
    const std::size_t n = columns.front().size();
    std::vector<unsigned> sym(n, 0);
    if (augment)
        for (auto& k : sym) k = static_cast<unsigned>(rng() & 7);
    std::vector<FTensor> out;
    for (const auto& col : columns) {
        std::vector<ImageU8> moved;
        moved.reserve(n);
        std::vector<const ImageU8*> ptrs(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (sym[i] != 0) {
                moved.push_back(dihedral(*col[i], sym[i]));
                ptrs[i] = &moved.back();
            } else {
                ptrs[i] = col[i];
            }
        }
        out.push_back(normalize_batch(ptrs));
    }
    return out;
}

void check_sizes(const std::vector<const ImageU8*>& images, int size, const char* what) {
    for (const auto* img : images) {
        if (img->width != size || img->height != size) {
            throw InvalidArgument(std::string(what) + " image is " + std::to_string(img->width) + "x" +
                                  std::to_string(img->height) + " but image_size is " + std::to_string(size));
        }
    }
}

ContentExtractor make_content_extractor(const TrainConfig& c) {
    if (!c.content_weights.empty()) return ContentExtractor::load(c.content_weights);
    return ContentExtractor::build(ContentExtractor::kDefaultPlan, c.content_seed);
}

void adam_update(std::vector<FTensor> params, OptimState<float>& opt) {
    adam_step(params, opt);
    zero_grads(params);
}

void write_diagnostic(const TrainState& state, const LossRecord& rec, const std::string& reason,
                      const TrainHooks& hooks) {
    if (hooks.out_dir.empty()) return;
    std::filesystem::create_directories(hooks.out_dir);
    json diag{{"reason", reason},
              {"iteration", rec.iteration},
              {"d_loss", rec.d_loss},
              {"g_adv", rec.g_adv},
              {"g_l1", rec.g_l1},
              {"g_con", rec.g_con},
              {"g_cyc", rec.g_cyc},
              {"total", rec.total},
              {"config", state.config.to_json()}};
    std::ofstream(hooks.out_dir / "diagnostic.json") << diag.dump(2) << "\n";
    save_training(state, hooks.out_dir / "diagnostic");
}

void check_finite(const TrainState& state, const LossRecord& rec, const TrainHooks& hooks) {
    const double vals[] = {rec.d_loss, rec.g_adv, rec.g_l1, rec.g_con, rec.g_cyc, rec.total};
    for (double v : vals) {
        if (std::isfinite(v)) continue;
        const std::string reason = "non-finite loss at iteration " + std::to_string(rec.iteration);
        write_diagnostic(state, rec, reason, hooks);
        throw NumericError(reason + (hooks.out_dir.empty() ? "" : "; snapshot in " + hooks.out_dir.string()));
    }
}

LossRecord paired_iteration(TrainState& s, const DatasetSplit& train, const ContentExtractor& phi,
                            const TrainHooks& hooks) {
    const auto& c = s.config;
    const std::int64_t it = s.iteration + 1;
    auto rng = make_rng(c.seed, "batch", static_cast<std::uint64_t>(it));
    const auto idx = draw_indices(train.pairs.size(), static_cast<std::size_t>(c.batch_size), rng);
    std::vector<const ImageU8*> xs, ys;
    for (auto i : idx) {
        xs.push_back(&train.pairs[i].distorted);
        ys.push_back(&train.pairs[i].groundtruth);
    }
    const auto batch = make_batches({xs, ys}, c.augment, rng);
    const FTensor& x = batch[0];
    const FTensor& y = batch[1];

    const ForwardOptions gopts{ops::Mode::train, c.noise_mode, derive_seed(c.seed, "noise", it)};
    const FTensor fake = s.g.forward(x, gopts);

    LossRecord rec;
    rec.iteration = it;

    // Discriminator step on the detached fake; G receives nothing here.
    const Critic d = as_critic(s.d, ops::Mode::train);
    {
        const FTensor loss_d = loss_adv_discriminator(d, x, y, fake);
        rec.d_loss = loss_d.item();
        check_finite(s, rec, hooks);
        rec.d_skipped = c.d_skip_below && rec.d_loss < *c.d_skip_below;
        if (!rec.d_skipped) {
            loss_d.backward();
            adam_update(s.d.parameters(), s.opt_d);
        }
    }
    if (hooks.after_discriminator_step) hooks.after_discriminator_step(s);

    // Generator step; D is frozen so its parameters stay bitwise unchanged.
    {
        FreezeGuard freeze(s.d.parameters());
        const PairedTerms terms = paired_generator_objective(c.loss_weights, d, phi, x, y, fake);
        rec.g_adv = terms.adv;
        rec.g_l1 = terms.l1;
        rec.g_con = terms.con;
        rec.total = terms.total.item();
        check_finite(s, rec, hooks);
        terms.total.backward();
        adam_update(s.g.parameters(), s.opt_g);
    }
    return rec;
}

LossRecord unpaired_iteration(TrainState& s, const DatasetSplit& train, const TrainHooks& hooks) {
    const auto& c = s.config;
    const std::int64_t it = s.iteration + 1;
    const auto bsz = static_cast<std::size_t>(c.batch_size);
    auto rng_x = make_rng(c.seed, "batch-poor", static_cast<std::uint64_t>(it));
    auto rng_y = make_rng(c.seed, "batch-good", static_cast<std::uint64_t>(it));
    std::vector<const ImageU8*> xs, ys;
    for (auto i : draw_indices(train.poor.size(), bsz, rng_x)) xs.push_back(&train.poor[i].image);
    for (auto i : draw_indices(train.good.size(), bsz, rng_y)) ys.push_back(&train.good[i].image);
    const FTensor x = make_batches({xs}, c.augment, rng_x)[0];
    const FTensor y = make_batches({ys}, c.augment, rng_y)[0];

    const ForwardOptions fopts{ops::Mode::train, c.noise_mode, derive_seed(c.seed, "noise-f", it)};
    const ForwardOptions ropts{ops::Mode::train, c.noise_mode, derive_seed(c.seed, "noise-r", it)};
    const Mapping g_f = as_mapping(s.g, fopts);
    const Mapping g_r = as_mapping(s.g_r, ropts);
    const Critic d_y = as_critic(s.d, ops::Mode::train);
    const Critic d_x = as_critic(s.d_x, ops::Mode::train);
    const FTensor fake_y = g_f(x);
    const FTensor fake_x = g_r(y);

    LossRecord rec;
    rec.iteration = it;
    {
        const FTensor loss_dy = loss_adv_discriminator_unpaired(d_y, y, fake_y);
        const FTensor loss_dx = loss_adv_discriminator_unpaired(d_x, x, fake_x);
        rec.d_loss = static_cast<double>(loss_dy.item()) + static_cast<double>(loss_dx.item());
        check_finite(s, rec, hooks);
        rec.d_skipped = c.d_skip_below && rec.d_loss < *c.d_skip_below;
        if (!rec.d_skipped) {
            loss_dy.backward();
            adam_update(s.d.parameters(), s.opt_d);
            loss_dx.backward();
            adam_update(s.d_x.parameters(), s.opt_d_x);
        }
    }
    if (hooks.after_discriminator_step) hooks.after_discriminator_step(s);
    {
        FreezeGuard freeze_y(s.d.parameters());
        FreezeGuard freeze_x(s.d_x.parameters());
        float adv = 0, cyc = 0;
        const FTensor total =
            unpaired_generator_loss(c.loss_weights, g_f, g_r, d_x, d_y, x, y, fake_y, fake_x, &adv, &cyc);
        rec.g_adv = adv;
        rec.g_cyc = cyc;
        rec.total = total.item();
        check_finite(s, rec, hooks);
        total.backward();
        adam_update(s.generator_parameters(), s.opt_g);
    }
    return rec;
}

void check_dataset(const TrainConfig& c, const DatasetSplit& train) {
    const auto need = static_cast<std::size_t>(c.batch_size);
    auto fail = [&](const char* what, std::size_t have) {
        throw InvalidArgument(std::string(what) + " has " + std::to_string(have) + " images, fewer than batch_size " +
                              std::to_string(c.batch_size));
    };
    if (c.mode == DatasetMode::paired) {
        if (train.pairs.size() < need) fail("paired training set", train.pairs.size());
        std::vector<const ImageU8*> all;
        for (const auto& p : train.pairs) {
            all.push_back(&p.distorted);
            all.push_back(&p.groundtruth);
        }
        check_sizes(all, c.image_size, "training");
    } else {
        if (train.poor.size() < need) fail("poor pool", train.poor.size());
        if (train.good.size() < need) fail("good pool", train.good.size());
        std::vector<const ImageU8*> all;
        for (const auto& p : train.poor) all.push_back(&p.image);
        for (const auto& p : train.good) all.push_back(&p.image);
        check_sizes(all, c.image_size, "training");
    }
}

// Optimizer moments flattened to one record per parameter.
void append_moments(const std::string& prefix, const OptimState<float>& opt, std::vector<checkpoint::TensorRecord>& out) {
    for (std::size_t i = 0; i < opt.first_moment.size(); ++i) {
        const auto n = static_cast<std::int64_t>(opt.first_moment[i].size());
        out.push_back({prefix + ".m." + std::to_string(i), {n}, opt.first_moment[i]});
        out.push_back({prefix + ".v." + std::to_string(i), {n}, opt.second_moment[i]});
    }
}

void restore_moments(const std::string& prefix, const checkpoint::File& file, const json& header,
                     const std::vector<FTensor>& params, OptimState<float>& opt) {
    opt.step_count = header.at("step_count").get<std::int64_t>();
    const auto count = header.at("moments").get<std::size_t>();
    if (count == 0) return;
    if (count != params.size()) {
        throw checkpoint::FormatError(prefix + ": optimizer holds " + std::to_string(count) + " moments for " +
                                          std::to_string(params.size()) + " parameters",
                                      checkpoint::kPreambleBytes);
    }
    opt.first_moment.resize(count);
    opt.second_moment.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto* m = file.find(prefix + ".m." + std::to_string(i));
        const auto* v = file.find(prefix + ".v." + std::to_string(i));
        if (!m || !v || m->values.size() != params[i].numel() || v->values.size() != params[i].numel()) {
            throw checkpoint::FormatError(prefix + ": missing or mis-sized moment " + std::to_string(i),
                                          checkpoint::kPreambleBytes);
        }
        opt.first_moment[i] = m->values;
        opt.second_moment[i] = v->values;
    }
}

json optim_header(const OptimState<float>& opt) {
    return {{"step_count", opt.step_count}, {"moments", opt.first_moment.size()}};
}

std::vector<checkpoint::TensorRecord> prefixed(const std::string& prefix, const std::vector<NamedTensor>& state) {
    auto recs = nn::to_records(state);
    for (auto& r : recs) r.name = prefix + r.name;
    return recs;
}

const char* kind_for(DatasetMode mode) { return mode == DatasetMode::paired ? "paired-train" : "unpaired-train"; }

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (iterations < 0) throw InvalidArgument("iterations must be >= 0");
    if (image_size <= 0 || image_size % GeneratorNet::kDownsampleFactor != 0) {
        throw InvalidArgument("image_size must be a positive multiple of 32, got " + std::to_string(image_size));
    }
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate must be > 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw InvalidArgument("betas must lie in [0,1)");
    if (checkpoint_every < 0) throw InvalidArgument("checkpoint_every must be >= 0");
    if (log_every < 0) throw InvalidArgument("log_every must be >= 0");
    if (warmup_epochs < 0) throw InvalidArgument("warmup_epochs must be >= 0");
    if (d_skip_below && !std::isfinite(*d_skip_below)) throw InvalidArgument("d_skip_below must be finite");
    loss_weights.validate();
}

AdamConfig TrainConfig::adam() const {
    AdamConfig a;
    a.learning_rate = learning_rate;
    a.beta1 = beta1;
    a.beta2 = beta2;
    return a;
}

json TrainConfig::to_json() const {
    return {{"mode", to_string(mode)},
            {"batch_size", batch_size},
            {"iterations", iterations},
            {"image_size", image_size},
            {"learning_rate", learning_rate},
            {"beta1", beta1},
            {"beta2", beta2},
            {"lambda_1", float_json(loss_weights.lambda_1)},
            {"lambda_c", float_json(loss_weights.lambda_c)},
            {"lambda_cyc", float_json(loss_weights.lambda_cyc)},
            {"enable_l1", loss_weights.enable_l1},
            {"enable_con", loss_weights.enable_con},
            {"noise_mode", noise_name(noise_mode)},
            {"seed", seed},
            {"checkpoint_every", checkpoint_every},
            {"log_every", log_every},
            {"d_skip_below", d_skip_below ? json(*d_skip_below) : json(nullptr)},
            {"warmup_epochs", warmup_epochs},
            {"augment", augment},
            {"generator_plan", std::vector<int>(generator_plan.begin(), generator_plan.end())},
            {"discriminator_plan", discriminator_plan},
            {"content_seed", content_seed},
            {"content_weights", content_weights}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    if (!j.is_object()) throw InvalidArgument("training config must be a JSON object");
    TrainConfig c;
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "mode") c.mode = parse_dataset_mode(v.get<std::string>());
            else if (key == "batch_size") c.batch_size = v.get<int>();
            else if (key == "iterations") c.iterations = v.get<std::int64_t>();
            else if (key == "image_size") c.image_size = v.get<int>();
            else if (key == "learning_rate") c.learning_rate = v.get<double>();
            else if (key == "beta1") c.beta1 = v.get<double>();
            else if (key == "beta2") c.beta2 = v.get<double>();
            else if (key == "lambda_1") c.loss_weights.lambda_1 = v.get<float>();
            else if (key == "lambda_c") c.loss_weights.lambda_c = v.get<float>();
            else if (key == "lambda_cyc") c.loss_weights.lambda_cyc = v.get<float>();
            else if (key == "enable_l1") c.loss_weights.enable_l1 = v.get<bool>();
            else if (key == "enable_con") c.loss_weights.enable_con = v.get<bool>();
            else if (key == "noise_mode") c.noise_mode = parse_noise_mode(v.get<std::string>());
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "checkpoint_every") c.checkpoint_every = v.get<std::int64_t>();
            else if (key == "log_every") c.log_every = v.get<std::int64_t>();
            else if (key == "d_skip_below") c.d_skip_below = v.is_null() ? std::nullopt : std::optional(v.get<double>());
            else if (key == "warmup_epochs") c.warmup_epochs = v.get<int>();
            else if (key == "augment") c.augment = v.get<bool>();
            else if (key == "generator_plan") {
                const auto plan = v.get<std::vector<int>>();
                if (plan.size() != c.generator_plan.size()) throw InvalidArgument("generator_plan needs 5 widths");
                std::copy(plan.begin(), plan.end(), c.generator_plan.begin());
            } else if (key == "discriminator_plan") c.discriminator_plan = v.get<std::vector<int>>();
            else if (key == "content_seed") c.content_seed = v.get<std::uint64_t>();
            else if (key == "content_weights") c.content_weights = v.get<std::string>();
            else throw InvalidArgument("unknown training config key '" + key + "'");
        } catch (const json::exception& e) {
            throw InvalidArgument("training config key '" + key + "': " + e.what());
        }
    }
    c.validate();
    return c;
}

std::vector<FTensor> TrainState::generator_parameters() const {
    auto params = g.parameters();
    if (config.mode == DatasetMode::unpaired) {
        auto r = g_r.parameters();
        params.insert(params.end(), r.begin(), r.end());
    }
    return params;
}

TrainState init_training(const TrainConfig& config) {
    config.validate();
    TrainState s;
    s.config = config;
    s.g = GeneratorNet::build(config.generator_plan, derive_seed(config.seed, "generator"));
    s.d = DiscriminatorNet::build(config.discriminator_plan, derive_seed(config.seed, "discriminator"));
    if (config.mode == DatasetMode::unpaired) {
        s.g_r = GeneratorNet::build(config.generator_plan, derive_seed(config.seed, "generator-r"));
        s.d_x = DiscriminatorNet::build(config.discriminator_plan, derive_seed(config.seed, "discriminator-x"));
    }
    s.opt_g.config = s.opt_d.config = s.opt_d_x.config = config.adam();
    return s;
}

void train_until(TrainState& state, const DatasetSplit& train, std::int64_t target, const TrainHooks& hooks) {
    auto& c = state.config;
    c.validate();
    if (target == 0) target = c.iterations;
    if (target < state.iteration) {
        throw InvalidArgument("target iteration " + std::to_string(target) + " is behind the checkpoint at " +
                              std::to_string(state.iteration));
    }
    if (target == state.iteration) return;
    check_dataset(c, train);
    std::optional<ContentExtractor> phi;
    if (c.mode == DatasetMode::paired) phi = make_content_extractor(c);

    while (state.iteration < target) {
        if (hooks.before_iteration) hooks.before_iteration(state);
        const LossRecord rec = c.mode == DatasetMode::paired ? paired_iteration(state, train, *phi, hooks)
                                                             : unpaired_iteration(state, train, hooks);
        state.iteration = rec.iteration;
        state.history.push_back(rec);
        if (hooks.on_log && c.log_every > 0 && (rec.iteration % c.log_every == 0 || rec.iteration == target)) {
            hooks.on_log(rec);
        }
        if (!hooks.out_dir.empty() && c.checkpoint_every > 0 && rec.iteration % c.checkpoint_every == 0) {
            save_training(state, hooks.out_dir / ("iter_" + std::to_string(rec.iteration)));
        }
    }
}

double identity_warmup(TrainState& state, const DatasetSplit& train, int epochs) {
    const auto& c = state.config;
    if (epochs <= 0) return 0.0;
    // Each generator learns to reproduce both pools; a separate optimizer keeps
    // the main Adam moments untouched.
    std::vector<const ImageU8*> pool;
    for (const auto& p : train.poor) pool.push_back(&p.image);
    for (const auto& p : train.good) pool.push_back(&p.image);
    for (const auto& p : train.pairs) pool.push_back(&p.distorted);
    if (pool.empty()) throw InvalidArgument("identity warmup needs images");
    check_sizes(pool, c.image_size, "warmup");

    std::vector<GeneratorNet*> nets{&state.g};
    if (c.mode == DatasetMode::unpaired) nets.push_back(&state.g_r);
    double last = 0.0;
    for (std::size_t k = 0; k < nets.size(); ++k) {
        OptimState<float> opt;
        opt.config = c.adam();
        opt.config.learning_rate = c.learning_rate * 5;
        for (int e = 0; e < epochs; ++e) {
            auto rng = make_rng(c.seed, "warmup", k * 1000003u + static_cast<std::uint64_t>(e));
            const auto order = draw_indices(pool.size(), pool.size(), rng);
            for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(c.batch_size)) {
                std::vector<const ImageU8*> batch;
                for (std::size_t i = start; i < std::min(order.size(), start + c.batch_size); ++i)
                    batch.push_back(pool[order[i]]);
                const FTensor x = normalize_batch(batch);
                const FTensor loss = loss_global_similarity(x, nets[k]->forward(x, {ops::Mode::train}));
                last = loss.item();
                loss.backward();
                adam_update(nets[k]->parameters(), opt);
            }
        }
    }
    return last;
}

TrainState train_paired(const TrainConfig& config, const DatasetSplit& train, const TrainHooks& hooks) {
    if (config.mode != DatasetMode::paired) throw InvalidArgument("train_paired needs mode 'paired'");
    TrainState s = init_training(config);
    if (config.warmup_epochs > 0) identity_warmup(s, train, config.warmup_epochs);
    train_until(s, train, config.iterations, hooks);
    return s;
}

TrainState train_unpaired(const TrainConfig& config, const DatasetSplit& train, const TrainHooks& hooks) {
    if (config.mode != DatasetMode::unpaired) throw InvalidArgument("train_unpaired needs mode 'unpaired'");
    TrainState s = init_training(config);
    if (config.warmup_epochs > 0) identity_warmup(s, train, config.warmup_epochs);
    train_until(s, train, config.iterations, hooks);
    return s;
}

void save_training(const TrainState& s, const std::filesystem::path& path) {
    const bool unpaired = s.config.mode == DatasetMode::unpaired;
    json history = json::array();
    for (const auto& r : s.history)
        history.push_back({r.iteration, r.d_loss, r.g_adv, r.g_l1, r.g_con, r.g_cyc, r.total, r.d_skipped});

    json meta{{"model_kind", kind_for(s.config.mode)},
              {"iteration", s.iteration},
              {"config", s.config.to_json()},
              {"history", std::move(history)}};
    std::vector<checkpoint::TensorRecord> recs;
    auto add = [&](const std::string& prefix, const std::vector<NamedTensor>& state) {
        auto r = prefixed(prefix, state);
        recs.insert(recs.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    };
    if (unpaired) {
        meta["networks"] = {{"G_F", generator_meta(s.g)},
                            {"G_R", generator_meta(s.g_r)},
                            {"D_Y", discriminator_meta(s.d)},
                            {"D_X", discriminator_meta(s.d_x)}};
        add("G_F.", s.g.state());
        add("G_R.", s.g_r.state());
        add("D_Y.", s.d.state());
        add("D_X.", s.d_x.state());
        meta["optimizers"] = {{"G", optim_header(s.opt_g)}, {"D_Y", optim_header(s.opt_d)}, {"D_X", optim_header(s.opt_d_x)}};
        append_moments("opt.G", s.opt_g, recs);
        append_moments("opt.D_Y", s.opt_d, recs);
        append_moments("opt.D_X", s.opt_d_x, recs);
    } else {
        meta["networks"] = {{"G", generator_meta(s.g)}, {"D", discriminator_meta(s.d)}};
        add("G.", s.g.state());
        add("D.", s.d.state());
        meta["optimizers"] = {{"G", optim_header(s.opt_g)}, {"D", optim_header(s.opt_d)}};
        append_moments("opt.G", s.opt_g, recs);
        append_moments("opt.D", s.opt_d, recs);
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    checkpoint::write_file(path, meta, recs);
}

TrainState load_training(const std::filesystem::path& path) {
    const auto file = checkpoint::read_file(path);
    const auto& h = file.header;
    const std::string kind = h.value("model_kind", "");
    if (kind != "paired-train" && kind != "unpaired-train") {
        throw checkpoint::FormatError("expected a training checkpoint, got model_kind '" + kind + "'",
                                      checkpoint::kPreambleBytes);
    }
    try {
        TrainState s;
        s.config = TrainConfig::from_json(h.at("config"));
        if (kind != kind_for(s.config.mode)) {
            throw checkpoint::FormatError("model_kind '" + kind + "' does not match config mode",
                                          checkpoint::kPreambleBytes);
        }
        s.iteration = h.at("iteration").get<std::int64_t>();
        const auto& nets = h.at("networks");
        const auto& opts = h.at("optimizers");
        s.opt_g.config = s.opt_d.config = s.opt_d_x.config = s.config.adam();
        if (s.config.mode == DatasetMode::unpaired) {
            s.g = generator_from_file(file, nets.at("G_F"), "G_F.");
            s.g_r = generator_from_file(file, nets.at("G_R"), "G_R.");
            s.d = discriminator_from_file(file, nets.at("D_Y"), "D_Y.");
            s.d_x = discriminator_from_file(file, nets.at("D_X"), "D_X.");
            restore_moments("opt.G", file, opts.at("G"), s.generator_parameters(), s.opt_g);
            restore_moments("opt.D_Y", file, opts.at("D_Y"), s.d.parameters(), s.opt_d);
            restore_moments("opt.D_X", file, opts.at("D_X"), s.d_x.parameters(), s.opt_d_x);
        } else {
            s.g = generator_from_file(file, nets.at("G"), "G.");
            s.d = discriminator_from_file(file, nets.at("D"), "D.");
            restore_moments("opt.G", file, opts.at("G"), s.g.parameters(), s.opt_g);
            restore_moments("opt.D", file, opts.at("D"), s.d.parameters(), s.opt_d);
        }
        for (const auto& row : h.at("history")) {
            LossRecord r;
            r.iteration = row.at(0).get<std::int64_t>();
            r.d_loss = row.at(1).get<double>();
            r.g_adv = row.at(2).get<double>();
            r.g_l1 = row.at(3).get<double>();
            r.g_con = row.at(4).get<double>();
            r.g_cyc = row.at(5).get<double>();
            r.total = row.at(6).get<double>();
            r.d_skipped = row.at(7).get<bool>();
            s.history.push_back(r);
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw checkpoint::FormatError(std::string("training checkpoint header: ") + e.what(),
                                      checkpoint::kPreambleBytes);
    }
}

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
    std::string text = "iteration,d_loss,g_adv,g_l1,g_con,g_cyc,total\n";
    char line[256];
    for (const auto& r : history) {
        std::snprintf(line, sizeof line, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(r.iteration),
                      r.d_loss, r.g_adv, r.g_l1, r.g_con, r.g_cyc, r.total);
        text += line;
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out << text;
        if (!out.flush()) throw IoError("cannot write " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

GeneratorNet load_inference_generator(const std::filesystem::path& path) {
    const auto file = checkpoint::read_file(path);
    const std::string kind = file.header.value("model_kind", "");
    try {
        if (kind == "generator") return generator_from_file(file, file.header);
        if (kind == "paired-train") return generator_from_file(file, file.header.at("networks").at("G"), "G.");
        if (kind == "unpaired-train") return generator_from_file(file, file.header.at("networks").at("G_F"), "G_F.");
    } catch (const nlohmann::json::exception& e) {
        throw checkpoint::FormatError(std::string("checkpoint header: ") + e.what(), checkpoint::kPreambleBytes);
    }
    throw checkpoint::FormatError("no generator in model_kind '" + kind + "'", checkpoint::kPreambleBytes);
}

}  // namespace funie
