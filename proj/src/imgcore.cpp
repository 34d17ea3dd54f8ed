#include "sweepkit/imgcore.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "sweepkit/error.hpp"

namespace sweepkit {

namespace {

struct Tap {
    int i0;
    int i1;
    double frac;
};

std::vector<Tap> bilinear_taps(int old_size, int new_size)
{
    std::vector<Tap> taps(static_cast<std::size_t>(new_size));
    for (int d = 0; d < new_size; ++d) {
        double src = (d + 0.5) * old_size / new_size - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(old_size - 1));
        const int i0 = static_cast<int>(std::floor(src));
        const int i1 = std::min(i0 + 1, old_size - 1);
        taps[static_cast<std::size_t>(d)] = {i0, i1, src - i0};
    }
    return taps;
}

std::vector<int> nearest_taps(int old_size, int new_size)
{
    std::vector<int> taps(static_cast<std::size_t>(new_size));
    for (int d = 0; d < new_size; ++d)
        taps[static_cast<std::size_t>(d)] =
            std::clamp(static_cast<int>(std::floor((d + 0.5) * old_size / new_size)), 0, old_size - 1);
    return taps;
}

} // namespace

Image resize(const Image& img, int new_height, int new_width, ResizeMode mode)
{
    if (new_height < 1 || new_width < 1)
        throw InvalidArgument("resize target must be at least 1x1, got " + std::to_string(new_height) + "x" +
                              std::to_string(new_width));
    if (new_height == img.height() && new_width == img.width())
        return img;

    const int channels = img.channels();
    Image out(new_height, new_width, channels);

    if (mode == ResizeMode::Nearest) {
        const auto ys = nearest_taps(img.height(), new_height);
        const auto xs = nearest_taps(img.width(), new_width);
        for (int y = 0; y < new_height; ++y)
            for (int x = 0; x < new_width; ++x)
                for (int c = 0; c < channels; ++c)
                    out.at(y, x, c) = img.at(ys[static_cast<std::size_t>(y)], xs[static_cast<std::size_t>(x)], c);
        return out;
    }

    const auto ys = bilinear_taps(img.height(), new_height);
    const auto xs = bilinear_taps(img.width(), new_width);
    for (int y = 0; y < new_height; ++y) {
        const Tap& ty = ys[static_cast<std::size_t>(y)];
        for (int x = 0; x < new_width; ++x) {
            const Tap& tx = xs[static_cast<std::size_t>(x)];
            for (int c = 0; c < channels; ++c) {
                const double top = img.at(ty.i0, tx.i0, c) * (1.0 - tx.frac) + img.at(ty.i0, tx.i1, c) * tx.frac;
                const double bot = img.at(ty.i1, tx.i0, c) * (1.0 - tx.frac) + img.at(ty.i1, tx.i1, c) * tx.frac;
                out.at(y, x, c) = to_pixel(top * (1.0 - ty.frac) + bot * ty.frac);
            }
        }
    }
    return out;
}

Image pad_zero(const Image& img, int left, int right, int top, int bottom)
{
    if (left < 0 || right < 0 || top < 0 || bottom < 0)
        throw InvalidArgument("padding margins must be non-negative");
    Image out(img.height() + top + bottom, img.width() + left + right, img.channels());
    const auto row_bytes = static_cast<std::size_t>(img.width() * img.channels());
    for (int y = 0; y < img.height(); ++y) {
        const auto src = img.data().subspan(static_cast<std::size_t>(y) * row_bytes, row_bytes);
        std::copy(src.begin(), src.end(), out.pixel(y + top, left));
    }
    return out;
}

Image crop(const Image& img, int top, int left, int height, int width)
{
    if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > img.height() || left + width > img.width())
        throw InvalidArgument("crop rectangle outside image");
    Image out(height, width, img.channels());
    const auto row_bytes = static_cast<std::size_t>(width * img.channels());
    for (int y = 0; y < height; ++y) {
        const std::uint8_t* src = img.pixel(top + y, left);
        std::copy(src, src + row_bytes, out.pixel(y, 0));
    }
    return out;
}

Image remap(const Image& img, const RemapField& field)
{
    const auto n = static_cast<std::size_t>(img.height()) * static_cast<std::size_t>(img.width());
    if (field.height != img.height() || field.width != img.width() || field.map_x.size() != n ||
        field.map_y.size() != n)
        throw InvalidArgument("remap field dimensions do not match the image");

    Image out(img.height(), img.width(), img.channels());
    for (int v = 0; v < img.height(); ++v) {
        for (int u = 0; u < img.width(); ++u) {
            const auto k = static_cast<std::size_t>(v) * static_cast<std::size_t>(img.width()) +
                           static_cast<std::size_t>(u);
            const double sx = std::floor(field.map_x[k]);
            const double sy = std::floor(field.map_y[k]);
            if (!(sx >= 0.0 && sx < img.width() && sy >= 0.0 && sy < img.height()))
                continue;
            for (int c = 0; c < img.channels(); ++c)
                out.at(v, u, c) = img.at(static_cast<int>(sy), static_cast<int>(sx), c);
        }
    }
    return out;
}

Image apply_lut(const Image& img, const Lut& lut)
{
    Image out = img;
    for (auto& p : out.data())
        p = lut[p];
    return out;
}

int reflect101(int i, int n)
{
    if (n == 1)
        return 0;
    while (i < 0 || i >= n) {
        if (i < 0)
            i = -i;
        if (i >= n)
            i = 2 * n - 2 - i;
    }
    return i;
}

Image median_filter(const Image& img, int kernel)
{
    if (kernel < 1 || kernel % 2 == 0)
        throw InvalidArgument("median kernel must be odd and positive, got " + std::to_string(kernel));
    if (kernel == 1)
        return img;

    const int r = kernel / 2;
    const int h = img.height();
    const int w = img.width();
    std::vector<int> row_idx(static_cast<std::size_t>(h + 2 * r));
    std::vector<int> col_idx(static_cast<std::size_t>(w + 2 * r));
    for (int i = -r; i < h + r; ++i)
        row_idx[static_cast<std::size_t>(i + r)] = reflect101(i, h);
    for (int i = -r; i < w + r; ++i)
        col_idx[static_cast<std::size_t>(i + r)] = reflect101(i, w);

    // Sliding 256-bin histogram per row; med is the smallest value whose
    // cumulative count exceeds the target rank, lt counts values below med.
    const int C = img.channels();
    const auto src = img.data();
    const int target = kernel * kernel / 2;
    Image out(h, w, C);
    auto dst = out.data();
    std::array<int, 256> hist{};
    const auto value = [&](int y, int x, int c) {
        return src[(static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)) *
                       static_cast<std::size_t>(C) +
                   static_cast<std::size_t>(c)];
    };
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < h; ++y) {
            hist.fill(0);
            for (int dy = 0; dy < kernel; ++dy)
                for (int dx = 0; dx < kernel; ++dx)
                    ++hist[value(row_idx[static_cast<std::size_t>(y + dy)], col_idx[static_cast<std::size_t>(dx)], c)];
            int med = 0;
            int lt = 0;
            while (lt + hist[static_cast<std::size_t>(med)] <= target)
                lt += hist[static_cast<std::size_t>(med++)];
            for (int x = 0;; ++x) {
                dst[(static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)) *
                        static_cast<std::size_t>(C) +
                    static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(med);
                if (x + 1 == w)
                    break;
                const int out_col = col_idx[static_cast<std::size_t>(x)];
                const int in_col = col_idx[static_cast<std::size_t>(x + kernel)];
                for (int dy = 0; dy < kernel; ++dy) {
                    const int sy = row_idx[static_cast<std::size_t>(y + dy)];
                    const int v_out = value(sy, out_col, c);
                    const int v_in = value(sy, in_col, c);
                    --hist[static_cast<std::size_t>(v_out)];
                    ++hist[static_cast<std::size_t>(v_in)];
                    lt += (v_in < med) - (v_out < med);
                }
                while (lt > target)
                    lt -= hist[static_cast<std::size_t>(--med)];
                while (lt + hist[static_cast<std::size_t>(med)] <= target)
                    lt += hist[static_cast<std::size_t>(med++)];
            }
        }
    }
    return out;
}

} // namespace sweepkit
