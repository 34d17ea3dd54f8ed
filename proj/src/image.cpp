#include "sweepkit/image.hpp"

#include <cmath>
#include <string>

#include "sweepkit/error.hpp"

namespace sweepkit {

namespace {

void check_shape(int height, int width, int channels)
{
    if (height < 1 || width < 1)
        throw InvalidArgument("image dimensions must be positive, got " + std::to_string(height) + "x" +
                              std::to_string(width));
    if (channels != 1 && channels != 3)
        throw InvalidArgument("image must have 1 or 3 channels, got " + std::to_string(channels));
}

} // namespace

Image::Image(int height, int width, int channels, std::uint8_t fill)
    : height_(height), width_(width), channels_(channels)
{
    check_shape(height, width, channels);
    data_.assign(dims().size(), fill);
}

Image::Image(int height, int width, int channels, std::vector<std::uint8_t> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data))
{
    check_shape(height, width, channels);
    if (data_.size() != dims().size())
        throw InvalidArgument("image data length " + std::to_string(data_.size()) + " does not match " +
                              std::to_string(dims().size()));
}

std::uint8_t to_pixel(double v)
{
    if (!(v > 0.0)) // also catches NaN
        return 0;
    const double r = std::floor(v + 0.5);
    return r >= 255.0 ? std::uint8_t{255} : static_cast<std::uint8_t>(r);
}

} // namespace sweepkit
