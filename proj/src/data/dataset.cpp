#include "funie/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "funie/parallel.hpp"
#include "funie/rng.hpp"
#include "funie/synth.hpp"

namespace fs = std::filesystem;

namespace funie {

namespace {

constexpr int kGeneratorVersion = 1;

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, std::string_view label) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = make_rng(seed, label);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    return idx;
}

ImageU8 load_resized(const fs::path& path, int resize) {
    auto img = load_image(path);
    return resize > 0 ? resize_bilinear(img, resize, resize) : img;
}

std::vector<NamedImage> load_pool(const fs::path& dir, const std::vector<std::string>& names, int resize) {
    std::vector<NamedImage> out(names.size());
    parallel_for(names.size(), [&](std::size_t i) { out[i] = {names[i], load_resized(dir / names[i], resize)}; });
    return out;
}

void split_pool(std::vector<NamedImage> all, std::size_t holdout, std::uint64_t seed, std::string_view label,
                std::vector<NamedImage>& train, std::vector<NamedImage>& held) {
    const auto order = shuffled_indices(all.size(), seed, label);
    for (std::size_t k = 0; k < order.size(); ++k) (k < holdout ? held : train).push_back(std::move(all[order[k]]));
}

}  // namespace

const char* to_string(DatasetMode mode) { return mode == DatasetMode::paired ? "paired" : "unpaired"; }

DatasetMode parse_dataset_mode(const std::string& text) {
    if (text == "paired") return DatasetMode::paired;
    if (text == "unpaired") return DatasetMode::unpaired;
    throw InvalidArgument("dataset mode must be 'paired' or 'unpaired', got '" + text + "'");
}

fs::path DatasetLayout::source_dir() const {
    return root / (mode == DatasetMode::paired ? kDistortedDir : kPoorDir);
}

fs::path DatasetLayout::target_dir() const {
    return root / (mode == DatasetMode::paired ? kGroundTruthDir : kGoodDir);
}

void DatasetLayout::validate() const {
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw InvalidArgument("holdout fraction must lie in (0,1)");
}

std::vector<std::string> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("missing dataset directory " + dir.string());
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_image_file(entry.path())) names.push_back(entry.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    return names;
}

std::size_t holdout_count(std::size_t n, double fraction) {
    auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    if (n >= 2) k = std::clamp<std::size_t>(k, 1, n - 1);
    return std::min(k, n);
}

DatasetLayout build_synthetic_dataset(const fs::path& out_dir, const SynthOptions& opts) {
    if (opts.count < 2) throw InvalidArgument("synthetic dataset needs count >= 2");
    if (opts.size <= 0 || opts.size % 32 != 0) throw InvalidArgument("synthetic image size must be a multiple of 32");
    const auto [lo, hi] = opts.severity_range;
    if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi)) throw InvalidArgument("severity range must satisfy 0 <= lo <= hi <= 1");
    if (opts.extension != ".png" && opts.extension != ".ppm") throw InvalidArgument("extension must be .png or .ppm");

    DatasetLayout layout;
    layout.mode = opts.mode;
    layout.root = out_dir;
    ensure_dir(layout.source_dir());
    ensure_dir(layout.target_dir());

    const bool paired = opts.mode == DatasetMode::paired;
    std::vector<nlohmann::json> records(static_cast<std::size_t>(opts.count));
    parallel_for(records.size(), [&](std::size_t i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%05zu", i);
        const std::string name = buf + opts.extension;
        // Unpaired pools use unrelated scenes for the two domains.
        const auto clean_seed = derive_seed(opts.seed, (paired ? "scene:" : "good:") + name);
        const auto poor_seed = paired ? clean_seed : derive_seed(opts.seed, "poor:" + name);
        auto rng = make_rng(opts.seed, "degrade:" + name);
        const double severity = lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const HueCast cast = rng() % 2 == 0 ? HueCast::green : HueCast::blue;
        const auto params = DegradeParams::at_severity(severity, cast, rng());

        const auto clean = synth_scene(opts.size, opts.size, clean_seed);
        save_image(clean, layout.target_dir() / name);
        save_image(degrade(paired ? clean : synth_scene(opts.size, opts.size, poor_seed), params),
                   layout.source_dir() / name);
        records[i] = {{"name", name}, {"clean_scene_seed", clean_seed}, {"degrade", to_json(params)}};
        if (!paired) records[i]["poor_scene_seed"] = poor_seed;
    });

    nlohmann::json manifest = {{"generator_version", kGeneratorVersion},
                               {"mode", to_string(opts.mode)},
                               {"seed", opts.seed},
                               {"count", opts.count},
                               {"size", opts.size},
                               {"severity_range", {lo, hi}},
                               {"files", records}};
    std::ofstream out(out_dir / DatasetLayout::kManifest);
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("cannot write " + (out_dir / DatasetLayout::kManifest).string());
    return layout;
}

Dataset load_dataset(const DatasetLayout& layout, std::uint64_t seed, int resize) {
    layout.validate();
    Dataset ds;
    ds.layout = layout;
    const auto src_names = list_images(layout.source_dir());
    const auto dst_names = list_images(layout.target_dir());

    if (layout.mode == DatasetMode::unpaired) {
        if (src_names.empty() || dst_names.empty()) throw ValidationError("unpaired dataset has an empty pool");
        split_pool(load_pool(layout.source_dir(), src_names, resize), holdout_count(src_names.size(), layout.holdout_fraction),
                   seed, "split-poor", ds.train.poor, ds.holdout.poor);
        split_pool(load_pool(layout.target_dir(), dst_names, resize), holdout_count(dst_names.size(), layout.holdout_fraction),
                   seed, "split-good", ds.train.good, ds.holdout.good);
        return ds;
    }

    const std::set<std::string> src(src_names.begin(), src_names.end()), dst(dst_names.begin(), dst_names.end());
    std::vector<std::string> orphans;
    for (const auto& n : src_names)
        if (!dst.count(n)) orphans.push_back(std::string(DatasetLayout::kDistortedDir) + "/" + n);
    for (const auto& n : dst_names)
        if (!src.count(n)) orphans.push_back(std::string(DatasetLayout::kGroundTruthDir) + "/" + n);
    if (!orphans.empty()) {
        std::string msg = "unmatched files in paired dataset " + layout.root.string() + ":";
        for (const auto& o : orphans) msg += " " + o;
        throw ValidationError(msg);
    }
    if (src_names.empty()) throw ValidationError("paired dataset " + layout.root.string() + " has no images");

    std::vector<ImagePair> pairs(src_names.size());
    parallel_for(pairs.size(), [&](std::size_t i) {
        pairs[i] = {src_names[i], load_resized(layout.source_dir() / src_names[i], resize),
                    load_resized(layout.target_dir() / src_names[i], resize)};
        if (pairs[i].distorted.width != pairs[i].groundtruth.width ||
            pairs[i].distorted.height != pairs[i].groundtruth.height) {
            throw ValidationError("pair " + src_names[i] + " has mismatched image sizes");
        }
    });
    const auto order = shuffled_indices(pairs.size(), seed, "split");
    const auto held = holdout_count(pairs.size(), layout.holdout_fraction);
    for (std::size_t k = 0; k < order.size(); ++k)
        (k < held ? ds.holdout.pairs : ds.train.pairs).push_back(std::move(pairs[order[k]]));
    return ds;
}

}  // namespace funie
