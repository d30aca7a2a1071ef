#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "funie/tensor.hpp"

/// Binary container shared by model weights, content-extractor weights and
/// training checkpoints:
///
///   "FUNG" | u16 version (LE) | u32 header length (LE) | UTF-8 JSON header |
///   f32 payload (LE) in manifest order
///
/// The JSON header always carries `model_kind` and a `tensors` manifest of
/// `{name, shape}` entries; other keys are owned by the writer.
namespace funie::checkpoint {

inline constexpr char kMagic[4] = {'F', 'U', 'N', 'G'};
inline constexpr std::uint16_t kVersion = 1;
/// Magic + version + header length prefix.
inline constexpr std::size_t kPreambleBytes = 4 + 2 + 4;

/// Malformed or inconsistent checkpoint; `offset` is the byte position where
/// decoding failed.
class FormatError : public std::runtime_error {
  public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const { return offset_; }

  private:
    std::uint64_t offset_;
};

using IoError = funie::IoError;

struct TensorRecord {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

struct File {
    nlohmann::json header;
    std::vector<TensorRecord> tensors;

    const TensorRecord* find(const std::string& name) const;
};

/// Header text exactly as written (manifest appended to `meta`).
std::string encode_header(const nlohmann::json& meta, const std::vector<TensorRecord>& tensors);

std::vector<std::uint8_t> encode(const nlohmann::json& meta, const std::vector<TensorRecord>& tensors);
File decode(const std::vector<std::uint8_t>& bytes);

/// Writes to a temporary sibling, then renames over `path`.
void write_file(const std::filesystem::path& path, const nlohmann::json& meta,
                const std::vector<TensorRecord>& tensors);
File read_file(const std::filesystem::path& path);

/// Total bytes `write_file` would produce.
std::uint64_t serialized_size(const nlohmann::json& meta, const std::vector<TensorRecord>& tensors);

}  // namespace funie::checkpoint
