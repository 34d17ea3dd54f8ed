#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sweepkit/dataset.hpp"
#include "sweepkit/image.hpp"

namespace sweepkit {

/// CIFAR-10 binary layout: records of 3073 bytes, one label byte (0..9)
/// followed by 1024 red, 1024 green and 1024 blue values, each plane
/// row-major 32x32.
inline constexpr std::size_t kCifarRecordSize = 3073;

/// Throws FormatError on a length that is not a positive multiple of the
/// record size or on a label above 9.
LabeledDataset parse_cifar10(std::span<const std::uint8_t> bytes);
/// Throws InvalidArgument unless every image is 32x32x3 with a label in 0..9.
std::vector<std::uint8_t> encode_cifar10(const LabeledDataset& ds);

/// Throws IoError if the file cannot be read, FormatError as parse_cifar10().
LabeledDataset load_cifar10_binary(const std::filesystem::path& path);
void write_cifar10_binary(const LabeledDataset& ds, const std::filesystem::path& path);

/// Binary PNM: P6 for 3 channels, P5 for 1, maxval 255. Comments and any
/// whitespace between header fields are accepted.
Image parse_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pnm(const Image& img);
Image read_pnm(const std::filesystem::path& path);
void write_pnm(const Image& img, const std::filesystem::path& path);

/// Directory of PNM files plus `labels.csv` with one `filename,label` line per
/// sample (an optional `filename,label` header line is skipped). Sample order
/// follows the manifest. num_classes <= 0 infers max label + 1.
LabeledDataset load_pnm_dataset(const std::filesystem::path& dir, int num_classes = 0);
/// Writes 000000.ppm, 000001.ppm, ... and the manifest. Creates `dir`.
void save_pnm_dataset(const LabeledDataset& ds, const std::filesystem::path& dir);

/// Dispatch on the path: a regular file or a `.bin` name is CIFAR-10 binary,
/// anything else a PNM directory. The loaded set takes num_classes when
/// positive; labels outside [0, num_classes) raise FormatError.
LabeledDataset load_dataset(const std::filesystem::path& path, int num_classes = 0);
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Creates parent directories.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace sweepkit
