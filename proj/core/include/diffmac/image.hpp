#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace diffmac {

/// RGB image, row-major HWC, float samples in [-1, 1].
class Image {
public:
    static constexpr int kChannels = 3;

    Image() = default;
    Image(int height, int width, float fill = 0.0f);
    Image(int height, int width, std::vector<float> pixels);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return pixels_.size(); }
    bool empty() const noexcept { return pixels_.empty(); }

    float& at(int y, int x, int c) noexcept {
        return pixels_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
    }
    float at(int y, int x, int c) const noexcept {
        return pixels_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
    }

    std::span<float> pixels() noexcept { return pixels_; }
    std::span<const float> pixels() const noexcept { return pixels_; }

    bool same_shape(const Image& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> pixels_;
};

/// Clamp every sample to [-1, 1].
void clip_unit(Image& img) noexcept;

Image flip_horizontal(const Image& img);

/// Map [-1, 1] to 8-bit with rounding; the inverse of from_u8.
std::vector<unsigned char> to_u8(const Image& img);
Image from_u8(int height, int width, std::span<const unsigned char> rgb);

/// 8-bit RGB PNG I/O. Grayscale and RGBA inputs are converted to RGB.
Image read_png(const std::filesystem::path& path);
void write_png(const Image& img, const std::filesystem::path& path);

/// Sorted list of *.png files directly inside `dir`.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

}  // namespace diffmac
