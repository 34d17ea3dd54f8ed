#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sweepkit {

/// Height x width x channels of an image.
struct Dims {
    int height = 0;
    int width = 0;
    int channels = 0;

    [[nodiscard]] std::size_t size() const
    {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
               static_cast<std::size_t>(channels);
    }
    friend bool operator==(const Dims&, const Dims&) = default;
};

/// 8-bit image, row-major with interleaved channels (1 or 3).
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels, std::uint8_t fill = 0);
    Image(int height, int width, int channels, std::vector<std::uint8_t> data);
    explicit Image(Dims dims, std::uint8_t fill = 0) : Image(dims.height, dims.width, dims.channels, fill) {}

    [[nodiscard]] int height() const { return height_; }
    [[nodiscard]] int width() const { return width_; }
    [[nodiscard]] int channels() const { return channels_; }
    [[nodiscard]] Dims dims() const { return {height_, width_, channels_}; }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] std::uint8_t at(int y, int x, int c) const { return data_[index(y, x, c)]; }
    std::uint8_t& at(int y, int x, int c) { return data_[index(y, x, c)]; }
    /// Pointer to the first channel of pixel (y, x).
    [[nodiscard]] const std::uint8_t* pixel(int y, int x) const { return data_.data() + index(y, x, 0); }
    std::uint8_t* pixel(int y, int x) { return data_.data() + index(y, x, 0); }

    [[nodiscard]] std::span<const std::uint8_t> data() const { return data_; }
    std::span<std::uint8_t> data() { return data_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    [[nodiscard]] std::size_t index(int y, int x, int c) const
    {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels_) +
               static_cast<std::size_t>(c);
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Round half up, then clamp to [0, 255]. The single rounding rule used by every
/// real-valued pixel computation in the library.
std::uint8_t to_pixel(double v);

} // namespace sweepkit
