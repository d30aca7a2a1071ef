#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "funie/image.hpp"

namespace funie {

enum class DatasetMode { paired, unpaired };

const char* to_string(DatasetMode mode);
DatasetMode parse_dataset_mode(const std::string& text);

/// Paired: root/trainA (distorted) and root/trainB (ground truth), matched by
/// file name. Unpaired: root/poor and root/good, independent pools.
struct DatasetLayout {
    static constexpr const char* kDistortedDir = "trainA";
    static constexpr const char* kGroundTruthDir = "trainB";
    static constexpr const char* kPoorDir = "poor";
    static constexpr const char* kGoodDir = "good";
    static constexpr const char* kManifest = "manifest.json";

    DatasetMode mode = DatasetMode::paired;
    std::filesystem::path root;
    double holdout_fraction = 0.2;

    /// Directory holding domain X (distorted / poor) images.
    std::filesystem::path source_dir() const;
    /// Directory holding domain Y (ground truth / good) images.
    std::filesystem::path target_dir() const;
    void validate() const;
};

struct NamedImage {
    std::string name;
    ImageU8 image;
};

struct ImagePair {
    std::string name;
    ImageU8 distorted;
    ImageU8 groundtruth;
};

struct DatasetSplit {
    std::vector<ImagePair> pairs;  // paired mode
    std::vector<NamedImage> poor;  // unpaired mode
    std::vector<NamedImage> good;  // unpaired mode
};

struct Dataset {
    DatasetLayout layout;
    DatasetSplit train;
    DatasetSplit holdout;
};

struct SynthOptions {
    DatasetMode mode = DatasetMode::paired;
    int count = 20;
    int size = 64;
    std::uint64_t seed = 0;
    std::pair<double, double> severity_range{0.3, 0.9};
    std::string extension = ".png";
};

/// Writes clean scenes and their degraded counterparts (or independent poor
/// and good pools) plus manifest.json. Per-file seeds are derived from the
/// global seed and the file name.
DatasetLayout build_synthetic_dataset(const std::filesystem::path& out_dir, const SynthOptions& opts);

/// Sorted image file names in `dir`.
std::vector<std::string> list_images(const std::filesystem::path& dir);

/// Number of holdout items for `n` files: round(fraction * n), kept within
/// [1, n-1] when n >= 2.
std::size_t holdout_count(std::size_t n, double fraction);

/// Deterministic shuffled split. `resize` > 0 rescales every image to
/// resize x resize on load.
Dataset load_dataset(const DatasetLayout& layout, std::uint64_t seed, int resize = 0);

}  // namespace funie
