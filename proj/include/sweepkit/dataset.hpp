#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sweepkit/image.hpp"

namespace sweepkit {

/// Images of uniform dimensions with class labels in [0, num_classes).
struct LabeledDataset {
    std::vector<Image> images;
    std::vector<int> labels;
    int num_classes = 0;

    [[nodiscard]] std::size_t size() const { return images.size(); }
    [[nodiscard]] bool empty() const { return images.empty(); }
    [[nodiscard]] Dims dims() const { return images.empty() ? Dims{} : images.front().dims(); }

    /// Throws InvalidArgument when lengths differ, a label is out of range,
    /// or image dimensions are not uniform.
    void validate() const;
};

/// Copy of the samples at `indices`, in the given order.
LabeledDataset select(const LabeledDataset& ds, std::span<const std::size_t> indices);

/// The first min(count, size) samples of a seeded permutation of ds.
LabeledDataset sample_subset(const LabeledDataset& ds, std::size_t count, std::uint64_t seed);

/// Procedurally drawn colored shapes. Class k is the combination
/// (shape k / P, color k % P) with P = min(K, 5) pure colors, so gamma
/// transforms leave the class color intact. Shapes, in order: large filled
/// square, short horizontal bar, plus, hollow square; every stroke is s / 6
/// pixels wide (s = min(h, w)). The background is a dark random level with
/// uniform noise. Labels are assigned round-robin and then
/// shuffled, so every class count is within one of n / K.
/// Requires 2 <= K <= 20 and n >= K.
LabeledDataset gen_shapes_dataset(std::size_t n, int num_classes, Dims dims, std::uint64_t seed);

} // namespace sweepkit
