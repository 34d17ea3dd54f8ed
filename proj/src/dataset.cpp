#include "sweepkit/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "sweepkit/error.hpp"
#include "sweepkit/rng.hpp"

namespace sweepkit {

void LabeledDataset::validate() const
{
    if (images.size() != labels.size())
        throw InvalidArgument("dataset has " + std::to_string(images.size()) + " images but " +
                              std::to_string(labels.size()) + " labels");
    if (num_classes < 1)
        throw InvalidArgument("dataset must declare at least one class");
    for (int label : labels)
        if (label < 0 || label >= num_classes)
            throw InvalidArgument("label " + std::to_string(label) + " outside [0, " + std::to_string(num_classes) +
                                  ")");
    if (!images.empty()) {
        const Dims d = images.front().dims();
        for (const auto& img : images)
            if (img.dims() != d)
                throw InvalidArgument("dataset images have non-uniform dimensions");
    }
}

LabeledDataset select(const LabeledDataset& ds, std::span<const std::size_t> indices)
{
    LabeledDataset out;
    out.num_classes = ds.num_classes;
    out.images.reserve(indices.size());
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= ds.size())
            throw InvalidArgument("sample index out of range");
        out.images.push_back(ds.images[i]);
        out.labels.push_back(ds.labels[i]);
    }
    return out;
}

LabeledDataset sample_subset(const LabeledDataset& ds, std::size_t count, std::uint64_t seed)
{
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    const std::size_t take = std::min(count, order.size());
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
        std::swap(order[i], order[j]);
    }
    order.resize(take);
    return select(ds, order);
}

namespace {

using Color = std::array<std::uint8_t, 3>;

constexpr std::array<Color, 5> kPalette{{
    {255, 0, 0},
    {0, 255, 0},
    {0, 0, 255},
    {255, 255, 0},
    {255, 0, 255},
}};

enum class Shape { FilledSquare, Bar, Plus, HollowSquare };
constexpr int kShapeCount = 4;

void put(Image& img, int y, int x, const Color& color)
{
    if (y < 0 || x < 0 || y >= img.height() || x >= img.width())
        return;
    if (img.channels() == 1) {
        img.at(y, x, 0) = static_cast<std::uint8_t>((color[0] + color[1] + color[2]) / 3);
        return;
    }
    for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = color[static_cast<std::size_t>(c)];
}

void draw_shape(Image& img, Shape shape, const Color& color, Rng& rng)
{
    const int h = img.height();
    const int w = img.width();
    const int s = std::min(h, w);
    const int thick = std::max(2, s / 6);
    const int cy = static_cast<int>(std::floor(rng.uniform(0.4, 0.6) * h));
    const int cx = static_cast<int>(std::floor(rng.uniform(0.4, 0.6) * w));
    const auto fill = [&](int y0, int x0, int rows, int cols) {
        for (int y = y0; y < y0 + rows; ++y)
            for (int x = x0; x < x0 + cols; ++x)
                put(img, y, x, color);
    };

    switch (shape) {
    case Shape::FilledSquare: {
        const int side = std::max(2, static_cast<int>(std::floor(rng.uniform(0.5, 0.6) * s)));
        fill(cy - side / 2, cx - side / 2, side, side);
        break;
    }
    case Shape::Plus: {
        const int arm = std::max(2, static_cast<int>(std::floor(rng.uniform(0.3, 0.38) * s)));
        fill(cy - arm, cx - thick / 2, 2 * arm + 1, thick);
        fill(cy - thick / 2, cx - arm, thick, 2 * arm + 1);
        break;
    }
    case Shape::HollowSquare: {
        const int side = std::max(3 * thick, static_cast<int>(std::floor(rng.uniform(0.6, 0.72) * s)));
        const int y0 = cy - side / 2;
        const int x0 = cx - side / 2;
        fill(y0, x0, thick, side);
        fill(y0 + side - thick, x0, thick, side);
        fill(y0, x0, side, thick);
        fill(y0, x0 + side - thick, side, thick);
        break;
    }
    case Shape::Bar: {
        const int len = std::max(3, static_cast<int>(std::floor(rng.uniform(0.4, 0.5) * w)));
        fill(cy - thick / 2, cx - len / 2, thick, len);
        break;
    }
    }
}

} // namespace

LabeledDataset gen_shapes_dataset(std::size_t n, int num_classes, Dims dims, std::uint64_t seed)
{
    const int palette = std::min(num_classes, static_cast<int>(kPalette.size()));
    if (num_classes < 2 || num_classes > palette * kShapeCount)
        throw InvalidArgument("shapes dataset supports 2.." + std::to_string(kPalette.size() * kShapeCount) +
                              " classes, got " + std::to_string(num_classes));
    if (n < static_cast<std::size_t>(num_classes))
        throw InvalidArgument("shapes dataset needs at least one sample per class");
    if (dims.height < 8 || dims.width < 8 || (dims.channels != 1 && dims.channels != 3))
        throw InvalidArgument("shapes dataset needs images of at least 8x8 with 1 or 3 channels");

    Rng rng(seed);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i)
        labels[i] = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    for (std::size_t i = n; i > 1; --i)
        std::swap(labels[i - 1], labels[static_cast<std::size_t>(rng.below(i))]);

    LabeledDataset ds;
    ds.num_classes = num_classes;
    ds.labels = labels;
    ds.images.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Image img(dims);
        Color bg{};
        for (auto& b : bg)
            b = static_cast<std::uint8_t>(rng.below(81));
        for (int y = 0; y < dims.height; ++y)
            for (int x = 0; x < dims.width; ++x)
                for (int c = 0; c < dims.channels; ++c) {
                    const double noise = rng.uniform(-12.0, 12.0);
                    img.at(y, x, c) = to_pixel(bg[static_cast<std::size_t>(c)] + noise);
                }
        const int label = labels[i];
        draw_shape(img, static_cast<Shape>(label / palette), kPalette[static_cast<std::size_t>(label % palette)], rng);
        ds.images.push_back(std::move(img));
    }
    return ds;
}

} // namespace sweepkit
