#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <jpeglib.h>
#include <png.h>

#include "funie/dataset.hpp"
#include "funie/metrics.hpp"
#include "funie/parallel.hpp"
#include "funie/synth.hpp"

using namespace funie;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "funie_test_data" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ImageU8 random_image(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ImageU8 img(w, h);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xFF);
    return img;
}

// Independent oracle: 10 log10(255^2 / MSE) with no cap handling needed here.
double oracle_psnr(const ImageU8& a, const ImageU8& b) {
    double sse = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) sse += std::pow(double(a.pixels[i]) - b.pixels[i], 2);
    return 10 * std::log10(255.0 * 255.0 / (sse / a.pixels.size()));
}

std::array<double, 3> channel_means(const ImageU8& img) {
    std::array<double, 3> m{0, 0, 0};
    for (std::size_t i = 0; i < img.pixels.size(); ++i) m[i % 3] += img.pixels[i];
    for (auto& v : m) v /= img.pixels.size() / 3;
    return m;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_png(const fs::path& path, int w, int h, png_uint_32 format, const std::vector<std::uint8_t>& data) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = w;
    image.height = h;
    image.format = format;
    REQUIRE(png_image_write_to_file(&image, path.c_str(), 0, data.data(), 0, nullptr));
}

void write_jpeg(const fs::path& path, const ImageU8& img) {
    jpeg_compress_struct cinfo;
    jpeg_error_mgr jerr;
    cinfo.err = jpeg_std_error(&jerr);
    jpeg_create_compress(&cinfo);
    std::FILE* f = std::fopen(path.c_str(), "wb");
    REQUIRE(f);
    jpeg_stdio_dest(&cinfo, f);
    cinfo.image_width = img.width;
    cinfo.image_height = img.height;
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, 95, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<std::uint8_t*>(img.pixels.data()) + cinfo.next_scanline * img.width * 3;
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    std::fclose(f);
    jpeg_destroy_compress(&cinfo);
}

}  // namespace

TEST_CASE("image buffer invariant") {
    CHECK_THROWS_AS(ImageU8(4, 4, std::vector<std::uint8_t>(47)), InvalidArgument);
    CHECK_THROWS_AS(ImageU8(0, 4), InvalidArgument);
    CHECK(ImageU8(4, 3).pixels.size() == 36);
}

TEST_CASE("image file round trips") {
    auto dir = scratch("io");
    const auto img = random_image(37, 21, 1);
    for (const char* ext : {".png", ".ppm", ".PNG"}) {
        const auto path = dir / (std::string("img") + ext);
        save_image(img, path);
        CHECK(load_image(path) == img);
    }
    CHECK_THROWS_AS(load_image(dir / "missing.png"), IoError);
    CHECK_THROWS_AS(save_image(img, dir / "img.bmp"), IoError);
    CHECK_THROWS_AS(save_image(img, dir / "no_such_dir" / "img.png"), IoError);

    std::ofstream(dir / "junk.png") << "definitely not an image";
    CHECK_THROWS_AS(load_image(dir / "junk.png"), IoError);
    auto truncated = file_bytes(dir / "img.png");
    truncated.resize(truncated.size() / 2);
    std::ofstream(dir / "cut.png", std::ios::binary).write(reinterpret_cast<const char*>(truncated.data()), truncated.size());
    try {
        load_image(dir / "cut.png");
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("cut.png") != std::string::npos);
    }
}

TEST_CASE("format conversions on load") {
    auto dir = scratch("convert");
    write_png(dir / "gray.png", 3, 2, PNG_FORMAT_GRAY, {0, 50, 100, 150, 200, 255});
    auto gray = load_image(dir / "gray.png");
    REQUIRE(gray.width == 3);
    for (int i = 0; i < 6; ++i) {
        CHECK(gray.pixels[3 * i] == gray.pixels[3 * i + 1]);
        CHECK(gray.pixels[3 * i] == gray.pixels[3 * i + 2]);
    }
    CHECK(gray.pixels[3 * 5] == 255);

    write_png(dir / "rgba.png", 2, 1, PNG_FORMAT_RGBA, {10, 20, 30, 0, 40, 50, 60, 255});
    CHECK(load_image(dir / "rgba.png").pixels == std::vector<std::uint8_t>{10, 20, 30, 40, 50, 60});

    {
        std::ofstream out(dir / "deep.ppm", std::ios::binary);
        out << "P6\n# comment\n1 1\n65535\n";
        const unsigned char px[6] = {0xFF, 0xFF, 0x00, 0x00, 0x80, 0x80};
        out.write(reinterpret_cast<const char*>(px), 6);
    }
    CHECK(load_image(dir / "deep.ppm").pixels == std::vector<std::uint8_t>{255, 0, 128});
    {
        std::ofstream out(dir / "gray.pgm", std::ios::binary);
        out << "P5 2 1 255\n";
        out.write("\x07\x09", 2);
    }
    CHECK(load_image(dir / "gray.pgm").pixels == std::vector<std::uint8_t>{7, 7, 7, 9, 9, 9});

    ImageU8 flat(16, 16);
    for (std::size_t i = 0; i < flat.pixels.size(); i += 3) {
        flat.pixels[i] = 200;
        flat.pixels[i + 1] = 100;
        flat.pixels[i + 2] = 50;
    }
    write_jpeg(dir / "flat.jpg", flat);
    auto decoded = load_image(dir / "flat.jpg");
    REQUIRE(decoded.width == 16);
    for (std::size_t i = 0; i < decoded.pixels.size(); ++i) CHECK(std::abs(decoded.pixels[i] - flat.pixels[i]) <= 3);
}

TEST_CASE("normalization") {
    ImageU8 ramp(256, 1);
    for (int v = 0; v < 256; ++v) ramp.at(v, 0, 0) = ramp.at(v, 0, 1) = ramp.at(v, 0, 2) = static_cast<std::uint8_t>(v);
    auto t = normalize(ramp);
    CHECK(t.shape() == Shape{1, 3, 1, 256});
    CHECK(t.values()[0] == -1.0f);
    CHECK(t.values()[255] == 1.0f);
    CHECK(t.values()[128] == doctest::Approx(0.00392157).epsilon(1e-5));
    CHECK(denormalize(t) == ramp);  // exhaustive over all 256 intensities

    Tensor<float> wild({1, 3, 1, 3}, {-7, 0.5f, std::nanf(""), 1e9f, -1, 1, 0, 0, 0});
    auto img = denormalize(wild);
    CHECK(img.at(0, 0, 0) == 0);
    CHECK(img.at(1, 0, 0) == 191);  // 1.5 * 127.5 = 191.25
    CHECK(img.at(2, 0, 0) == 128);  // NaN maps to mid-gray
    CHECK(img.at(0, 0, 1) == 255);
    CHECK_THROWS_AS(denormalize(wild, 1), InvalidArgument);

    const ImageU8 a = random_image(32, 32, 2), b = random_image(32, 32, 3), c = random_image(16, 32, 4);
    const ImageU8* ab[] = {&a, &b};
    auto batch = normalize_batch(ab);
    CHECK(batch.shape() == Shape{2, 3, 32, 32});
    CHECK(denormalize(batch, 1) == b);
    const ImageU8* ac[] = {&a, &c};
    CHECK_THROWS_AS(normalize_batch(ac), InvalidArgument);
}

TEST_CASE("bilinear resize") {
    const auto img = random_image(64, 48, 5);
    CHECK(resize_bilinear(img, 64, 48) == img);
    ImageU8 flat(40, 40);
    for (auto& p : flat.pixels) p = 77;
    auto small = resize_bilinear(flat, 8, 16);
    CHECK(small.width == 8);
    CHECK(small.height == 16);
    for (auto p : small.pixels) CHECK(p == 77);
    // Exact 2x downscale averages each 2x2 block.
    ImageU8 quad(2, 2, {0, 0, 0, 100, 100, 100, 100, 100, 100, 200, 200, 200});
    CHECK(resize_bilinear(quad, 1, 1).pixels == std::vector<std::uint8_t>{100, 100, 100});
}

TEST_CASE("synthetic scenes") {
    CHECK(synth_scene(64, 64, 9) == synth_scene(64, 64, 9));
    CHECK_THROWS_AS(synth_scene(100, 64, 1), InvalidArgument);
    for (auto [s1, s2] : {std::pair{1, 2}, std::pair{3, 4}}) {
        const auto a = synth_scene(64, 64, s1), b = synth_scene(64, 64, s2);
        int differing = 0;
        for (int i = 0; i < 64 * 64; ++i)
            differing += a.pixels[3 * i] != b.pixels[3 * i] || a.pixels[3 * i + 1] != b.pixels[3 * i + 1] ||
                         a.pixels[3 * i + 2] != b.pixels[3 * i + 2];
        CHECK(differing >= 64 * 64 / 100);
    }
    for (std::uint64_t seed = 0; seed < 10; ++seed) CHECK(metrics::uicm(synth_scene(64, 64, seed)) != 0.0);
    // full range exercised across a few scenes
    int lo = 255, hi = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed)
        for (auto p : synth_scene(64, 64, seed).pixels) {
            lo = std::min<int>(lo, p);
            hi = std::max<int>(hi, p);
        }
    CHECK(lo <= 10);
    CHECK(hi >= 245);
}

TEST_CASE("degradation") {
    const auto scene = synth_scene(64, 64, 11);
    CHECK(degrade(scene, DegradeParams::at_severity(0.0, HueCast::green, 1)) == scene);
    CHECK(degrade(scene, DegradeParams::at_severity(0.6, HueCast::blue, 5)) ==
          degrade(scene, DegradeParams::at_severity(0.6, HueCast::blue, 5)));

    const auto in = channel_means(scene);
    const auto out = channel_means(degrade(scene, DegradeParams::at_severity(0.8, HueCast::green, 2)));
    CHECK(out[1] - out[0] > in[1] - in[0]);

    double prev = 1e9;
    for (double s : {0.2, 0.5, 0.8}) {
        const double p = oracle_psnr(degrade(scene, DegradeParams::at_severity(s, HueCast::green, 3)), scene);
        CHECK(p < prev);
        prev = p;
    }

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        for (double s : {0.5, 0.75, 1.0}) {
            const auto m = channel_means(degrade(synth_scene(64, 64, 100 + seed), DegradeParams::at_severity(s, HueCast::green, seed)));
            CHECK(m[0] < m[1]);
        }
    }

    DegradeParams prev_p = DegradeParams::at_severity(0.0, HueCast::green, 0);
    for (int i = 1; i <= 20; ++i) {
        const auto p = DegradeParams::at_severity(i / 20.0, HueCast::green, 0);
        CHECK(p.hue_shift >= prev_p.hue_shift);
        CHECK(p.contrast_scale <= prev_p.contrast_scale);  // stronger compression
        CHECK(p.blur_radius >= prev_p.blur_radius);
        CHECK(p.noise_std >= prev_p.noise_std);
        prev_p = p;
    }
    CHECK_THROWS_AS(DegradeParams::at_severity(1.5, HueCast::green, 0), InvalidArgument);
    DegradeParams bad;
    bad.contrast_scale = 0.0;
    CHECK_THROWS_AS(degrade(scene, bad), InvalidArgument);
}

TEST_CASE("synthetic paired dataset") {
    auto dir = scratch("paired");
    SynthOptions opts;
    opts.count = 20;
    opts.size = 64;
    opts.seed = 42;
    auto layout = build_synthetic_dataset(dir / "a", opts);
    const auto names_a = list_images(layout.source_dir());
    const auto names_b = list_images(layout.target_dir());
    CHECK(names_a.size() == 20);
    CHECK(names_a == names_b);
    CHECK(fs::exists(dir / "a" / "manifest.json"));
    std::ifstream mf(dir / "a" / "manifest.json");
    auto manifest = nlohmann::json::parse(mf);
    CHECK(manifest["files"].size() == 20);
    CHECK(manifest["seed"] == 42);

    build_synthetic_dataset(dir / "b", opts);
    for (const auto& n : names_a) {
        CHECK(file_bytes(dir / "a/trainA" / n) == file_bytes(dir / "b/trainA" / n));
        CHECK(file_bytes(dir / "a/trainB" / n) == file_bytes(dir / "b/trainB" / n));
        CHECK(oracle_psnr(load_image(dir / "a/trainA" / n), load_image(dir / "a/trainB" / n)) < 40.0);
    }

    auto ds = load_dataset(layout, 7);
    CHECK(ds.train.pairs.size() == 16);
    CHECK(ds.holdout.pairs.size() == 4);
    auto again = load_dataset(layout, 7);
    std::set<std::string> held, held_again;
    for (const auto& p : ds.holdout.pairs) held.insert(p.name);
    for (const auto& p : again.holdout.pairs) held_again.insert(p.name);
    CHECK(held == held_again);
    for (const auto& p : ds.train.pairs) {
        CHECK(p.distorted == load_image(layout.source_dir() / p.name));
        CHECK(p.groundtruth == load_image(layout.target_dir() / p.name));
    }
    auto resized = load_dataset(layout, 7, 32);
    CHECK(resized.train.pairs[0].distorted.width == 32);

    std::ofstream(layout.source_dir() / "zz_orphan.png") << "x";
    try {
        load_dataset(layout, 7);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("zz_orphan.png") != std::string::npos);
    }

    opts.count = 1;
    CHECK_THROWS_AS(build_synthetic_dataset(dir / "c", opts), InvalidArgument);
    opts.count = 2;
    std::ofstream(dir / "blocker") << "file in the way";
    CHECK_THROWS_AS(build_synthetic_dataset(dir / "blocker" / "sub", opts), IoError);
}

TEST_CASE("synthetic unpaired dataset") {
    auto dir = scratch("unpaired");
    SynthOptions opts;
    opts.mode = DatasetMode::unpaired;
    opts.count = 10;
    opts.size = 32;
    auto layout = build_synthetic_dataset(dir, opts);
    CHECK(layout.source_dir().filename() == "poor");
    CHECK(layout.target_dir().filename() == "good");
    const auto names = list_images(layout.source_dir());
    CHECK(names.size() == 10);
    // The pools come from unrelated scenes.
    CHECK(oracle_psnr(load_image(layout.source_dir() / names[0]), load_image(layout.target_dir() / names[0])) < 20.0);
    layout.holdout_fraction = 0.3;
    auto ds = load_dataset(layout, 1);
    CHECK(ds.train.poor.size() == 7);
    CHECK(ds.holdout.good.size() == 3);
    CHECK(ds.train.pairs.empty());
}

TEST_CASE("holdout arithmetic and layout validation") {
    CHECK(holdout_count(20, 0.2) == 4);
    CHECK(holdout_count(2, 0.01) == 1);
    CHECK(holdout_count(3, 0.99) == 2);
    DatasetLayout layout;
    layout.holdout_fraction = 1.0;
    CHECK_THROWS_AS(layout.validate(), InvalidArgument);
    CHECK(parse_dataset_mode("unpaired") == DatasetMode::unpaired);
    CHECK_THROWS_AS(parse_dataset_mode("both"), InvalidArgument);
    CHECK_THROWS_AS(list_images("/definitely/not/here"), IoError);
}

TEST_CASE("parallel_for propagates the first failure") {
    std::vector<int> hit(50, 0);
    parallel_for(hit.size(), [&](std::size_t i) { hit[i] = 1; });
    CHECK(std::count(hit.begin(), hit.end(), 1) == 50);
    CHECK_THROWS_WITH(parallel_for(10, [](std::size_t i) {
                          if (i >= 3) throw std::runtime_error("item " + std::to_string(i));
                      }),
                      "item 3");
}
