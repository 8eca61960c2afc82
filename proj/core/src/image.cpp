#include "diffmac/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "diffmac/errors.hpp"

namespace diffmac {

namespace {

std::size_t checked_size(int height, int width) {
    if (height < 0 || width < 0) throw ShapeError("negative image dimensions");
    return static_cast<std::size_t>(height) * width * Image::kChannels;
}

}  // namespace

Image::Image(int height, int width, float fill)
    : height_(height), width_(width), pixels_(checked_size(height, width), fill) {}

Image::Image(int height, int width, std::vector<float> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
    if (height < 0 || width < 0 ||
        pixels_.size() != static_cast<std::size_t>(height) * width * kChannels) {
        throw ShapeError("pixel buffer does not match " + std::to_string(height) + "x" +
                         std::to_string(width) + "x3");
    }
}

void clip_unit(Image& img) noexcept {
    for (float& v : img.pixels()) v = std::clamp(v, -1.0f, 1.0f);
}

Image flip_horizontal(const Image& img) {
    Image out(img.height(), img.width());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < Image::kChannels; ++c)
                out.at(y, img.width() - 1 - x, c) = img.at(y, x, c);
    return out;
}

std::vector<unsigned char> to_u8(const Image& img) {
    std::vector<unsigned char> out(img.size());
    auto src = img.pixels();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const float v = std::clamp(src[i], -1.0f, 1.0f);
        out[i] = static_cast<unsigned char>(std::lround((v + 1.0f) * 127.5f));
    }
    return out;
}

Image from_u8(int height, int width, std::span<const unsigned char> rgb) {
    std::vector<float> px(rgb.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = rgb[i] / 127.5f - 1.0f;
    return Image(height, width, std::move(px));
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        throw IoError("cannot read PNG " + path.string() + ": " + png.message);
    png.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&png);
        throw IoError("cannot decode PNG " + path.string() + ": " + png.message);
    }
    return from_u8(static_cast<int>(png.height), static_cast<int>(png.width), buf);
}

void write_png(const Image& img, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto bytes = to_u8(img);
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width());
    png.height = static_cast<png_uint_32>(img.height());
    png.format = PNG_FORMAT_RGB;
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot open " + path.string() + " for writing");
    if (!png_image_write_to_stdio(&png, file.get(), 0, bytes.data(), 0, nullptr))
        throw IoError("cannot encode PNG " + path.string() + ": " + png.message);
}

std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace diffmac
