#include "funie/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include <jpeglib.h>
#include <png.h>

namespace fs = std::filesystem;

namespace funie {

ImageU8::ImageU8(int w, int h) : ImageU8(w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, 0)) {}

ImageU8::ImageU8(int w, int h, std::vector<std::uint8_t> px) : width(w), height(h), pixels(std::move(px)) {
    if (w <= 0 || h <= 0) throw InvalidArgument("image dimensions must be positive");
    if (pixels.size() != static_cast<std::size_t>(w) * h * 3) {
        throw InvalidArgument("pixel buffer holds " + std::to_string(pixels.size()) + " bytes, expected " +
                              std::to_string(static_cast<std::size_t>(w) * h * 3));
    }
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct PngMessage {
    char text[256] = "unknown error";
};

void png_error_quiet(png_structp png, png_const_charp msg) {
    auto* m = static_cast<PngMessage*>(png_get_error_ptr(png));
    std::snprintf(m->text, sizeof m->text, "%s", msg);
    png_longjmp(png, 1);
}

void png_warning_quiet(png_structp, png_const_charp) {}

ImageU8 load_png(const fs::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path.string());
    auto message = std::make_unique<PngMessage>();
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, message.get(), png_error_quiet, png_warning_quiet);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("PNG decoder unavailable for " + path.string());
    }
    // Heap state so nothing owned by this frame is modified between setjmp and longjmp.
    auto img = std::make_unique<ImageU8>();
    auto rows = std::make_unique<std::vector<png_bytep>>();
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("PNG decode failure: " + path.string() + ": " + message->text);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16) png_set_scale_16(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    const auto w = png_get_image_width(png, info);
    const auto h = png_get_image_height(png, info);
    if (png_get_rowbytes(png, info) != static_cast<std::size_t>(w) * 3) png_error(png, "unexpected row layout");
    img->width = static_cast<int>(w);
    img->height = static_cast<int>(h);
    img->pixels.assign(static_cast<std::size_t>(w) * h * 3, 0);
    rows->resize(h);
    for (png_uint_32 y = 0; y < h; ++y) (*rows)[y] = img->pixels.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, rows->data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return std::move(*img);
}

void save_png(const ImageU8& img, const fs::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
        throw IoError("cannot write " + path.string() + ": " + image.message);
    }
}

struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegError*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

ImageU8 load_jpeg(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    auto img = std::make_unique<ImageU8>();
    auto cinfo = std::make_unique<jpeg_decompress_struct>();
    auto err = std::make_unique<JpegError>();
    cinfo->err = jpeg_std_error(&err->mgr);
    err->mgr.error_exit = jpeg_error_exit;
    if (setjmp(err->jump)) {
        jpeg_destroy_decompress(cinfo.get());
        throw IoError("JPEG decode failure: " + path.string() + ": " + err->message);
    }
    jpeg_create_decompress(cinfo.get());
    jpeg_mem_src(cinfo.get(), bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(cinfo.get(), TRUE);
    cinfo->out_color_space = JCS_RGB;
    jpeg_start_decompress(cinfo.get());
    if (cinfo->output_components != 3) {
        std::snprintf(err->message, sizeof err->message, "unsupported component count");
        std::longjmp(err->jump, 1);
    }
    img->width = static_cast<int>(cinfo->output_width);
    img->height = static_cast<int>(cinfo->output_height);
    img->pixels.assign(static_cast<std::size_t>(img->width) * img->height * 3, 0);
    while (cinfo->output_scanline < cinfo->output_height) {
        JSAMPROW row = img->pixels.data() + static_cast<std::size_t>(cinfo->output_scanline) * img->width * 3;
        jpeg_read_scanlines(cinfo.get(), &row, 1);
    }
    jpeg_finish_decompress(cinfo.get());
    jpeg_destroy_decompress(cinfo.get());
    return std::move(*img);
}

ImageU8 load_pnm(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 2;
    auto fail = [&](const std::string& why) { return IoError("PPM decode failure: " + path.string() + ": " + why); };
    auto next_int = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        long value = 0;
        const std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(bytes[pos]) && value < (1L << 24)) value = value * 10 + (bytes[pos++] - '0');
        if (pos == start) throw fail("malformed header");
        return value;
    };
    const bool gray = bytes[1] == '5';
    const long w = next_int(), h = next_int(), maxval = next_int();
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw fail("invalid header values");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw fail("malformed header");
    ++pos;
    const std::size_t channels = gray ? 1 : 3;
    const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
    const std::size_t samples = static_cast<std::size_t>(w) * h * channels;
    if (bytes.size() - pos < samples * sample_bytes) throw fail("truncated pixel data");

    ImageU8 img(static_cast<int>(w), static_cast<int>(h));
    for (std::size_t i = 0; i < samples; ++i) {
        long v = sample_bytes == 2 ? (bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1] : bytes[pos + i];
        v = std::min(v, maxval);
        const auto u = static_cast<std::uint8_t>(maxval == 255 ? v : (v * 255 + maxval / 2) / maxval);
        if (gray) {
            img.pixels[3 * i] = img.pixels[3 * i + 1] = img.pixels[3 * i + 2] = u;
        } else {
            img.pixels[i] = u;
        }
    }
    return img;
}

void save_ppm(const ImageU8& img, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw IoError("cannot write " + path.string());
}

std::string lower_extension(const fs::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

}  // namespace

ImageU8 load_image(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw IoError("no such image file: " + path.string());
    const auto bytes = read_bytes(path);
    static const std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0) return load_png(path);
    if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) return load_jpeg(path, bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '6' || bytes[1] == '5')) return load_pnm(path, bytes);
    throw IoError("unsupported image format: " + path.string());
}

void save_image(const ImageU8& img, const fs::path& path) {
    if (img.empty()) throw InvalidArgument("cannot save an empty image");
    const auto parent = path.parent_path();
    if (!parent.empty() && !fs::is_directory(parent)) throw IoError("directory does not exist: " + parent.string());
    const auto ext = lower_extension(path);
    if (ext == ".png") {
        save_png(img, path);
    } else if (ext == ".ppm") {
        save_ppm(img, path);
    } else {
        throw IoError("unsupported output format (use .png or .ppm): " + path.string());
    }
}

bool is_image_file(const fs::path& path) {
    const auto ext = lower_extension(path);
    return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".jpg" || ext == ".jpeg";
}

Tensor<float> normalize(const ImageU8& img) {
    const ImageU8* one[] = {&img};
    return normalize_batch(one);
}

Tensor<float> normalize_batch(std::span<const ImageU8* const> images) {
    if (images.empty()) throw InvalidArgument("normalize_batch needs at least one image");
    const int w = images[0]->width, h = images[0]->height;
    const std::size_t plane = static_cast<std::size_t>(w) * h;
    std::vector<float> v(images.size() * 3 * plane);
    for (std::size_t n = 0; n < images.size(); ++n) {
        const auto& img = *images[n];
        if (img.width != w || img.height != h) {
            throw InvalidArgument("batch images differ in size: " + std::to_string(w) + "x" + std::to_string(h) +
                                  " vs " + std::to_string(img.width) + "x" + std::to_string(img.height));
        }
        float* dst = v.data() + n * 3 * plane;
        for (std::size_t i = 0; i < plane; ++i)
            for (int c = 0; c < 3; ++c) dst[c * plane + i] = static_cast<float>(img.pixels[3 * i + c]) / 127.5f - 1.0f;
    }
    return Tensor<float>({static_cast<std::int64_t>(images.size()), 3, h, w}, std::move(v));
}

ImageU8 denormalize(const Tensor<float>& t, std::int64_t index) {
    if (t.rank() != 4 || t.dim(1) != 3) throw InvalidArgument("denormalize expects [N,3,H,W], got " + shape_str(t.shape()));
    if (index < 0 || index >= t.dim(0)) throw InvalidArgument("denormalize index out of range");
    const int h = static_cast<int>(t.dim(2)), w = static_cast<int>(t.dim(3));
    const std::size_t plane = static_cast<std::size_t>(w) * h;
    const float* src = t.values().data() + static_cast<std::size_t>(index) * 3 * plane;
    ImageU8 img(w, h);
    for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) {
            double v = src[c * plane + i];
            if (std::isnan(v)) v = 0.0;
            v = std::clamp(v, -1.0, 1.0);
            img.pixels[3 * i + c] = static_cast<std::uint8_t>(std::round((v + 1.0) * 127.5));
        }
    }
    return img;
}

ImageU8 resize_bilinear(const ImageU8& img, int width, int height) {
    if (width <= 0 || height <= 0) throw InvalidArgument("resize target must be positive");
    if (width == img.width && height == img.height) return img;
    ImageU8 out(width, height);
    const double sx = static_cast<double>(img.width) / width, sy = static_cast<double>(img.height) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
        const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
            const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = img.at(x0, y0, c) * (1 - wx) + img.at(x1, y0, c) * wx;
                const double bottom = img.at(x0, y1, c) * (1 - wx) + img.at(x1, y1, c) * wx;
                out.at(x, y, c) = static_cast<std::uint8_t>(std::round(top * (1 - wy) + bottom * wy));
            }
        }
    }
    return out;
}

}  // namespace funie
