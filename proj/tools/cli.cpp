#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "funie/parallel.hpp"
#include "funie/synth.hpp"
#include "funie/trainer.hpp"

namespace funie::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Bad flag values or inputs the user must fix before anything runs.
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

void print_resolved(std::ostream& out, const std::string& command, const json& config) {
    out << json{{"command", command}, {"config", config}}.dump() << "\n";
}

std::vector<int> parse_int_list(const std::string& text, const char* flag) {
    std::vector<int> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            values.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError(std::string(flag) + ": expected comma-separated integers, got '" + text + "'");
        }
    }
    return values;
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
}

// Every directory a layout needs, checked before any loading.
void require_layout(const DatasetLayout& layout) {
    if (!fs::is_directory(layout.root)) throw UsageError("--data: missing directory " + layout.root.string());
    for (const auto& dir : {layout.source_dir(), layout.target_dir()}) {
        if (!fs::is_directory(dir)) {
            throw UsageError("--data: missing directory " + dir.string() + " required by the " +
                             to_string(layout.mode) + " layout");
        }
    }
}

std::string row_line(const std::string& label, const metrics::MetricReport& report) {
    std::ostringstream os;
    os << std::left << std::setw(10) << label;
    for (const auto& name : metrics::kMetricNames) {
        auto it = report.aggregate.find(name);
        if (it == report.aggregate.end()) continue;
        os << "  " << name << " " << it->second.formatted(4);
    }
    return os.str();
}

void write_report_files(const metrics::MetricReport& report, const std::string& json_path, const std::string& csv_path) {
    for (const auto& p : {json_path, csv_path}) {
        if (p.empty()) continue;
        const auto parent = fs::path(p).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
    }
    metrics::write_report(report, json_path, csv_path);
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::string out;
    std::string mode = "paired";
    int count = 20;
    int size = 64;
    std::uint64_t seed = 0;
    double severity_min = 0.3;
    double severity_max = 0.9;
    std::string extension = ".png";
};

void add_synth(CLI::App& app, SynthArgs& a) {
    auto* sub = app.add_subcommand("synth", "Write a seeded synthetic degradation dataset");
    sub->add_option("--out", a.out, "Output directory")->required();
    sub->add_option("--mode", a.mode, "paired or unpaired")->check(CLI::IsMember({"paired", "unpaired"}))->capture_default_str();
    sub->add_option("--count", a.count, "Number of pairs (or images per pool)")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--size", a.size, "Square image size, multiple of 32")->capture_default_str();
    sub->add_option("--seed", a.seed, "Root seed")->capture_default_str();
    sub->add_option("--severity-min", a.severity_min)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    sub->add_option("--severity-max", a.severity_max)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    sub->add_option("--format", a.extension, "Image format")->check(CLI::IsMember({".png", ".ppm"}))->capture_default_str();
}

int run_synth(const SynthArgs& a, std::ostream& out) {
    if (a.size <= 0 || a.size % 32 != 0) throw UsageError("--size must be a positive multiple of 32");
    if (a.severity_min > a.severity_max) throw UsageError("--severity-min exceeds --severity-max");
    SynthOptions o;
    o.mode = parse_dataset_mode(a.mode);
    o.count = a.count;
    o.size = a.size;
    o.seed = a.seed;
    o.severity_range = {a.severity_min, a.severity_max};
    o.extension = a.extension;
    print_resolved(out, "synth",
                   {{"out", a.out}, {"mode", a.mode}, {"count", a.count}, {"size", a.size}, {"seed", a.seed},
                    {"severity_min", a.severity_min}, {"severity_max", a.severity_max}, {"format", a.extension}});
    const auto layout = build_synthetic_dataset(a.out, o);
    out << "wrote " << a.count << (o.mode == DatasetMode::paired ? " pairs" : " images per pool") << " to "
        << layout.root.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string data;
    std::string out;
    std::string config_file;
    std::string resume;
    double holdout = 0.2;
    // Flag values; only applied when the flag was given.
    std::string mode, noise, g_plan, d_plan, content_weights;
    int batch = 0, image_size = 0, warmup_epochs = 0;
    std::int64_t iters = 0, checkpoint_every = 0, log_every = 0;
    double lr = 0, beta1 = 0, beta2 = 0, d_skip_below = 0;
    float lambda_1 = 0, lambda_c = 0, lambda_cyc = 0;
    std::uint64_t seed = 0, content_seed = 0;
    bool no_l1 = false, no_con = false, no_augment = false;
    CLI::App* sub = nullptr;
};

void add_train(CLI::App& app, TrainArgs& a) {
    auto* sub = a.sub = app.add_subcommand("train", "Train paired or unpaired networks");
    const TrainConfig d;
    sub->add_option("--data", a.data, "Dataset root")->required();
    sub->add_option("--out", a.out, "Output directory for checkpoints and loss.csv")->required();
    sub->add_option("--config", a.config_file, "JSON file with any subset of the training config")->check(CLI::ExistingFile);
    sub->add_option("--resume", a.resume, "Continue from a training checkpoint");
    sub->add_option("--holdout", a.holdout, "Holdout fraction")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    sub->add_option("--mode", a.mode)->check(CLI::IsMember({"paired", "unpaired"}))->default_str(to_string(d.mode));
    sub->add_option("--iters", a.iters)->check(CLI::NonNegativeNumber)->default_str(std::to_string(d.iterations));
    sub->add_option("--batch", a.batch)->check(CLI::PositiveNumber)->default_str(std::to_string(d.batch_size));
    sub->add_option("--image-size", a.image_size)->default_str(std::to_string(d.image_size));
    sub->add_option("--lr", a.lr)->check(CLI::PositiveNumber)->default_str("2e-4");
    sub->add_option("--beta1", a.beta1)->default_str("0.5");
    sub->add_option("--beta2", a.beta2)->default_str("0.999");
    sub->add_option("--lambda-1", a.lambda_1)->default_str("0.7");
    sub->add_option("--lambda-c", a.lambda_c)->default_str("0.3");
    sub->add_option("--lambda-cyc", a.lambda_cyc)->default_str("0.1");
    sub->add_flag("--no-l1", a.no_l1, "Disable the global similarity term");
    sub->add_flag("--no-con", a.no_con, "Disable the content term");
    sub->add_option("--noise", a.noise)->check(CLI::IsMember({"off", "dropout"}))->default_str("off");
    sub->add_option("--seed", a.seed)->default_str("0");
    sub->add_option("--checkpoint-every", a.checkpoint_every)->check(CLI::NonNegativeNumber)->default_str("0");
    sub->add_option("--log-every", a.log_every)->check(CLI::NonNegativeNumber)->default_str("50");
    sub->add_option("--d-skip-below", a.d_skip_below, "Skip D updates while its loss is below this value");
    sub->add_option("--warmup-epochs", a.warmup_epochs)->check(CLI::NonNegativeNumber)->default_str("0");
    sub->add_flag("--no-augment", a.no_augment, "Disable flip/transpose augmentation");
    sub->add_option("--g-plan", a.g_plan, "Generator encoder widths, e.g. 32,64,128,256,256");
    sub->add_option("--d-plan", a.d_plan, "Discriminator widths, e.g. 32,64,128,256");
    sub->add_option("--content-seed", a.content_seed)->default_str("0");
    sub->add_option("--content-weights", a.content_weights, "Content-extractor checkpoint")->check(CLI::ExistingFile);
}

bool given(const CLI::App* sub, const char* flag) { return sub->count(flag) > 0; }

TrainConfig resolve_train_config(const TrainArgs& a) {
    json j = a.config_file.empty() ? json::object() : read_json_file(a.config_file);
    const auto* s = a.sub;
    if (given(s, "--mode")) j["mode"] = a.mode;
    if (given(s, "--iters")) j["iterations"] = a.iters;
    if (given(s, "--batch")) j["batch_size"] = a.batch;
    if (given(s, "--image-size")) j["image_size"] = a.image_size;
    if (given(s, "--lr")) j["learning_rate"] = a.lr;
    if (given(s, "--beta1")) j["beta1"] = a.beta1;
    if (given(s, "--beta2")) j["beta2"] = a.beta2;
    if (given(s, "--lambda-1")) j["lambda_1"] = a.lambda_1;
    if (given(s, "--lambda-c")) j["lambda_c"] = a.lambda_c;
    if (given(s, "--lambda-cyc")) j["lambda_cyc"] = a.lambda_cyc;
    if (a.no_l1) j["enable_l1"] = false;
    if (a.no_con) j["enable_con"] = false;
    if (given(s, "--noise")) j["noise_mode"] = a.noise;
    if (given(s, "--seed")) j["seed"] = a.seed;
    if (given(s, "--checkpoint-every")) j["checkpoint_every"] = a.checkpoint_every;
    if (given(s, "--log-every")) j["log_every"] = a.log_every;
    if (given(s, "--d-skip-below")) j["d_skip_below"] = a.d_skip_below;
    if (given(s, "--warmup-epochs")) j["warmup_epochs"] = a.warmup_epochs;
    if (a.no_augment) j["augment"] = false;
    if (given(s, "--g-plan")) j["generator_plan"] = parse_int_list(a.g_plan, "--g-plan");
    if (given(s, "--d-plan")) j["discriminator_plan"] = parse_int_list(a.d_plan, "--d-plan");
    if (given(s, "--content-seed")) j["content_seed"] = a.content_seed;
    if (given(s, "--content-weights")) j["content_weights"] = a.content_weights;
    try {
        return TrainConfig::from_json(j);
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
}

void print_record(std::ostream& out, const LossRecord& r) {
    char line[256];
    std::snprintf(line, sizeof line, "iter %lld  d %.4f  adv %.4f  l1 %.4f  con %.4f  cyc %.4f  total %.4f%s\n",
                  static_cast<long long>(r.iteration), r.d_loss, r.g_adv, r.g_l1, r.g_con, r.g_cyc, r.total,
                  r.d_skipped ? "  (D skipped)" : "");
    out << line << std::flush;
}

int run_train(const TrainArgs& a, std::ostream& out) {
    TrainState state;
    if (!a.resume.empty()) {
        state = load_training(a.resume);
        // Cadence and length may change on resume; the model recipe may not.
        if (given(a.sub, "--iters")) state.config.iterations = a.iters;
        if (given(a.sub, "--log-every")) state.config.log_every = a.log_every;
        if (given(a.sub, "--checkpoint-every")) state.config.checkpoint_every = a.checkpoint_every;
        state.config.validate();
    } else {
        state = init_training(resolve_train_config(a));
    }
    const TrainConfig& c = state.config;
    DatasetLayout layout{c.mode, a.data, a.holdout};
    json resolved = c.to_json();
    resolved["data"] = a.data;
    resolved["out"] = a.out;
    resolved["holdout"] = a.holdout;
    resolved["resume"] = a.resume.empty() ? json(nullptr) : json(a.resume);
    print_resolved(out, "train", resolved);

    require_layout(layout);
    const Dataset ds = load_dataset(layout, c.seed, c.image_size);
    fs::create_directories(a.out);
    TrainHooks hooks;
    hooks.out_dir = a.out;
    hooks.on_log = [&](const LossRecord& r) { print_record(out, r); };
    try {
        if (a.resume.empty() && c.warmup_epochs > 0) identity_warmup(state, ds.train, c.warmup_epochs);
        train_until(state, ds.train, c.iterations, hooks);
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const fs::path out_dir = a.out;
    save_training(state, out_dir / "final");
    write_loss_csv(state.history, out_dir / "loss.csv");

    const auto input = evaluate_inputs(ds.holdout);
    const auto enhanced = evaluate_holdout(state.g, ds.holdout);
    write_report_files(enhanced, (out_dir / "holdout.json").string(), (out_dir / "holdout.csv").string());
    out << row_line("Input", input) << "\n" << row_line("Enhanced", enhanced) << "\n";
    out << "checkpoint " << (out_dir / "final").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- enhance

struct EnhanceArgs {
    std::string model;
    std::string input;
    std::string out;
    bool resize = false;
};

void add_enhance(CLI::App& app, EnhanceArgs& a) {
    auto* sub = app.add_subcommand("enhance", "Enhance an image or a directory of images");
    sub->add_option("--model", a.model, "Generator weights or training checkpoint")->required();
    sub->add_option("--input", a.input, "Image file or directory")->required();
    sub->add_option("--out", a.out, "Output directory")->required();
    sub->add_flag("--resize", a.resize, "Resize (lossy, bilinear) to the nearest multiple of 32 and back");
}

int run_enhance(const EnhanceArgs& a, std::ostream& out, std::ostream& err) {
    print_resolved(out, "enhance", {{"model", a.model}, {"input", a.input}, {"out", a.out}, {"resize", a.resize},
                                    {"threads", worker_count()}});
    std::vector<fs::path> inputs;
    if (fs::is_directory(a.input)) {
        for (const auto& name : list_images(a.input)) inputs.push_back(fs::path(a.input) / name);
    } else if (fs::is_regular_file(a.input)) {
        inputs.push_back(a.input);
    } else {
        throw IoError("input not found: " + a.input);
    }
    const GeneratorNet g = load_inference_generator(a.model);
    fs::create_directories(a.out);

    std::vector<std::string> failures(inputs.size());
    parallel_for(inputs.size(), [&](std::size_t i) {
        try {
            const ImageU8 img = load_image(inputs[i]);
            ImageU8 result;
            if (img.width % 32 == 0 && img.height % 32 == 0) {
                result = enhance_image(g, img);
            } else if (a.resize) {
                const ImageU8 scaled =
                    resize_bilinear(img, nearest_multiple_of_32(img.width), nearest_multiple_of_32(img.height));
                result = resize_bilinear(enhance_image(g, scaled), img.width, img.height);
            } else {
                throw InvalidArgument(std::to_string(img.width) + "x" + std::to_string(img.height) +
                                      " is not divisible by 32 (pass --resize)");
            }
            fs::path dest = fs::path(a.out) / inputs[i].filename();
            const auto ext = dest.extension().string();
            if (ext != ".png" && ext != ".ppm") dest.replace_extension(".png");
            save_image(result, dest);
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });
    std::size_t failed = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (failures[i].empty()) continue;
        ++failed;
        err << "error: " << inputs[i].string() << ": " << failures[i] << "\n";
    }
    out << "enhanced " << inputs.size() - failed << " of " << inputs.size() << " images into " << a.out << "\n";
    return failed == 0 ? kExitOk : kExitRuntime;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string data;
    std::string model;
    std::string report;
    std::string csv;
    std::string mode = "paired";
    std::string split = "holdout";
    double holdout = 0.2;
    std::uint64_t seed = 0;
    int resize = 0;
};

void add_eval(CLI::App& app, EvalArgs& a) {
    auto* sub = app.add_subcommand("eval", "Metrics of inputs or enhanced outputs on a dataset");
    sub->add_option("--data", a.data, "Dataset root")->required();
    sub->add_option("--model", a.model, "Generator; without it the unenhanced inputs are scored");
    sub->add_option("--report", a.report, "Per-image and aggregate JSON report");
    sub->add_option("--csv", a.csv, "Per-image CSV report");
    sub->add_option("--mode", a.mode)->check(CLI::IsMember({"paired", "unpaired"}))->capture_default_str();
    sub->add_option("--split", a.split, "holdout or all")->check(CLI::IsMember({"holdout", "all"}))->capture_default_str();
    sub->add_option("--holdout", a.holdout)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    sub->add_option("--seed", a.seed, "Split seed (match training)")->capture_default_str();
    sub->add_option("--resize", a.resize, "Rescale images to this square size on load")->check(CLI::NonNegativeNumber)->capture_default_str();
}

int run_eval(const EvalArgs& a, std::ostream& out) {
    print_resolved(out, "eval", {{"data", a.data}, {"model", a.model.empty() ? json(nullptr) : json(a.model)},
                                 {"report", a.report}, {"csv", a.csv}, {"mode", a.mode}, {"split", a.split},
                                 {"holdout", a.holdout}, {"seed", a.seed}, {"resize", a.resize},
                                 {"threads", worker_count()}});
    if (a.resize % 32 != 0) throw UsageError("--resize must be a multiple of 32");
    DatasetLayout layout{parse_dataset_mode(a.mode), a.data, a.holdout};
    require_layout(layout);
    Dataset ds = load_dataset(layout, a.seed, a.resize);
    DatasetSplit split = ds.holdout;
    if (a.split == "all") {
        for (auto& p : ds.train.pairs) split.pairs.push_back(std::move(p));
        for (auto& p : ds.train.poor) split.poor.push_back(std::move(p));
    }
    const auto input = evaluate_inputs(split);
    out << row_line("Input", input) << "\n";
    const metrics::MetricReport* chosen = &input;
    std::optional<metrics::MetricReport> enhanced;
    if (!a.model.empty()) {
        enhanced = evaluate_holdout(load_inference_generator(a.model), split);
        out << row_line("Enhanced", *enhanced) << "\n";
        chosen = &*enhanced;
    }
    if (!a.report.empty() || !a.csv.empty()) write_report_files(*chosen, a.report, a.csv);
    return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
    std::string model;
    std::string report;
    int size = 256;
    int runs = 10;
    int warmup = 3;
    std::uint64_t seed = 0;
};

void add_bench(CLI::App& app, BenchArgs& a) {
    auto* sub = app.add_subcommand("bench", "Single-image inference throughput");
    sub->add_option("--model", a.model, "Generator; default is a freshly initialized default generator");
    sub->add_option("--report", a.report, "JSON output path");
    sub->add_option("--size", a.size)->capture_default_str();
    sub->add_option("--runs", a.runs)->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--warmup", a.warmup)->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--seed", a.seed, "Initialization seed when no model is given")->capture_default_str();
}

int run_bench(const BenchArgs& a, std::ostream& out) {
    print_resolved(out, "bench", {{"model", a.model.empty() ? json(nullptr) : json(a.model)}, {"report", a.report},
                                  {"size", a.size}, {"runs", a.runs}, {"warmup", a.warmup}, {"seed", a.seed}});
    if (a.size <= 0 || a.size % 32 != 0) throw UsageError("--size must be a positive multiple of 32");
    const GeneratorNet g = a.model.empty() ? GeneratorNet::build(GeneratorNet::kDefaultPlan, a.seed)
                                           : load_inference_generator(a.model);
    const auto result = benchmark_inference(g, a.size, a.runs, a.warmup);
    json j = result.to_json();
    j["size"] = a.size;
    out << j.dump() << "\n";
    if (!a.report.empty()) {
        std::ofstream f(a.report);
        if (!f) throw IoError("cannot write " + a.report);
        f << j.dump(2) << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
    std::string model;
};

void add_inspect(CLI::App& app, InspectArgs& a) {
    auto* sub = app.add_subcommand("inspect", "Describe a checkpoint, or the default networks");
    sub->add_option("--model", a.model, "Checkpoint to describe");
}

json describe_default() {
    const auto g = GeneratorNet::build();
    const auto d = DiscriminatorNet::build();
    const auto gc = count_params(g), dc = count_params(d);
    return {{"generator",
             {{"channel_plan", generator_meta(g)["channel_plan"]},
              {"parameter_count", gc.parameter_count},
              {"trainable_count", gc.trainable_count},
              {"serialized_bytes", gc.serialized_bytes}}},
            {"discriminator",
             {{"channel_plan", d.channel_plan()},
              {"parameter_count", dc.parameter_count},
              {"trainable_count", dc.trainable_count},
              {"serialized_bytes", dc.serialized_bytes}}}};
}

int run_inspect(const InspectArgs& a, std::ostream& out) {
    print_resolved(out, "inspect", {{"model", a.model.empty() ? json(nullptr) : json(a.model)}});
    if (a.model.empty()) {
        out << describe_default().dump(2) << "\n";
        return kExitOk;
    }
    const auto file = checkpoint::read_file(a.model);
    json info{{"model_kind", file.header.value("model_kind", "")},
              {"file_bytes", fs::file_size(a.model)},
              {"tensors", file.tensors.size()}};
    std::int64_t scalars = 0;
    for (const auto& t : file.tensors) scalars += static_cast<std::int64_t>(t.values.size());
    info["stored_scalars"] = scalars;
    for (const char* key : {"channel_plan", "seed", "iteration", "config"})
        if (file.header.contains(key)) info[key] = file.header[key];
    const std::string kind = info["model_kind"];
    if (kind == "generator" || kind == "paired-train" || kind == "unpaired-train") {
        const auto count = count_params(load_inference_generator(a.model));
        info["generator_parameter_count"] = count.parameter_count;
        info["generator_serialized_bytes"] = count.serialized_bytes;
    }
    out << info.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int nearest_multiple_of_32(int n) { return std::max(32, static_cast<int>(std::lround(n / 32.0)) * 32); }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Underwater image enhancement: synthesis, training, enhancement, evaluation, benchmarking",
                 "funie"};
    app.require_subcommand(1, 1);
    SynthArgs synth;
    TrainArgs train;
    EnhanceArgs enhance;
    EvalArgs eval;
    BenchArgs bench;
    InspectArgs inspect;
    add_synth(app, synth);
    add_train(app, train);
    add_enhance(app, enhance);
    add_eval(app, eval);
    add_bench(app, bench);
    add_inspect(app, inspect);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (command == "synth") return run_synth(synth, out);
        if (command == "train") return run_train(train, out);
        if (command == "enhance") return run_enhance(enhance, out, err);
        if (command == "eval") return run_eval(eval, out);
        if (command == "bench") return run_bench(bench, out);
        return run_inspect(inspect, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace funie::cli
