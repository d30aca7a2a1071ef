#include "funie/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace funie::checkpoint {

static_assert(std::endian::native == std::endian::little, "payload is written in native little-endian order");

const TensorRecord* File::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

std::string encode_header(const nlohmann::json& meta, const std::vector<TensorRecord>& tensors) {
    nlohmann::json header = meta;
    auto manifest = nlohmann::json::array();
    for (const auto& t : tensors) manifest.push_back({{"name", t.name}, {"shape", t.shape}});
    header["tensors"] = std::move(manifest);
    return header.dump();
}

std::uint64_t serialized_size(const nlohmann::json& meta, const std::vector<TensorRecord>& tensors) {
    std::uint64_t payload = 0;
    for (const auto& t : tensors) payload += 4 * t.values.size();
    return kPreambleBytes + encode_header(meta, tensors).size() + payload;
}

std::vector<std::uint8_t> encode(const nlohmann::json& meta, const std::vector<TensorRecord>& tensors) {
    for (const auto& t : tensors) {
        if (static_cast<std::size_t>(shape_numel(t.shape)) != t.values.size())
            throw InvalidArgument("checkpoint tensor '" + t.name + "' shape does not match its values");
    }
    const std::string header = encode_header(meta, tensors);
    std::vector<std::uint8_t> out;
    out.reserve(serialized_size(meta, tensors));
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    out.push_back(static_cast<std::uint8_t>(kVersion & 0xFF));
    out.push_back(static_cast<std::uint8_t>(kVersion >> 8));
    const auto len = static_cast<std::uint32_t>(header.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((len >> (8 * i)) & 0xFF));
    out.insert(out.end(), header.begin(), header.end());
    for (const auto& t : tensors) {
        const auto* raw = reinterpret_cast<const std::uint8_t*>(t.values.data());
        out.insert(out.end(), raw, raw + 4 * t.values.size());
    }
    return out;
}

File decode(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kPreambleBytes) throw FormatError("truncated preamble", bytes.size());
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, expected FUNG", 0);
    const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
    if (version != kVersion)
        throw FormatError("unsupported format version " + std::to_string(version), 4);
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[6 + i]) << (8 * i);
    if (bytes.size() < kPreambleBytes + len) throw FormatError("truncated header", bytes.size());

    File file;
    try {
        file.header = nlohmann::json::parse(bytes.begin() + kPreambleBytes, bytes.begin() + kPreambleBytes + len);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("corrupt header JSON: ") + e.what(), kPreambleBytes);
    }
    if (!file.header.is_object() || !file.header.contains("model_kind") || !file.header.contains("tensors") ||
        !file.header["tensors"].is_array()) {
        throw FormatError("header lacks model_kind or tensors manifest", kPreambleBytes);
    }

    std::uint64_t offset = kPreambleBytes + len;
    for (const auto& entry : file.header["tensors"]) {
        TensorRecord rec;
        try {
            rec.name = entry.at("name").get<std::string>();
            rec.shape = entry.at("shape").get<Shape>();
            shape_numel(rec.shape);
        } catch (const std::exception& e) {
            throw FormatError(std::string("bad manifest entry: ") + e.what(), kPreambleBytes);
        }
        const auto count = static_cast<std::uint64_t>(shape_numel(rec.shape));
        if (offset + 4 * count > bytes.size())
            throw FormatError("truncated payload for tensor '" + rec.name + "'", bytes.size());
        rec.values.resize(count);
        std::memcpy(rec.values.data(), bytes.data() + offset, 4 * count);
        offset += 4 * count;
        file.tensors.push_back(std::move(rec));
    }
    if (offset != bytes.size()) throw FormatError("trailing bytes after payload", offset);
    return file;
}

void write_file(const std::filesystem::path& path, const nlohmann::json& meta,
                const std::vector<TensorRecord>& tensors) {
    const auto bytes = encode(meta, tensors);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

File read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

}  // namespace funie::checkpoint
