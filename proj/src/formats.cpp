#include "sweepkit/formats.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "sweepkit/error.hpp"

namespace sweepkit {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad())
        throw IoError("failed reading " + path.string());
    return bytes;
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes)
{
    std::error_code ec;
    if (path.has_parent_path())
        fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path)
{
    const auto bytes = read_file(path);
    return {bytes.begin(), bytes.end()};
}

void write_text(const fs::path& path, const std::string& text)
{
    write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

// ---------------------------------------------------------------------------
// CIFAR-10
// ---------------------------------------------------------------------------

namespace {
constexpr int kCifarSide = 32;
constexpr std::size_t kPlane = kCifarSide * kCifarSide;
} // namespace

LabeledDataset parse_cifar10(std::span<const std::uint8_t> bytes)
{
    if (bytes.empty() || bytes.size() % kCifarRecordSize != 0)
        throw FormatError("CIFAR-10 data length " + std::to_string(bytes.size()) +
                          " is not a positive multiple of " + std::to_string(kCifarRecordSize));
    const std::size_t n = bytes.size() / kCifarRecordSize;
    LabeledDataset ds;
    ds.num_classes = 10;
    ds.images.reserve(n);
    ds.labels.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::uint8_t* rec = bytes.data() + r * kCifarRecordSize;
        if (rec[0] > 9)
            throw FormatError("CIFAR-10 record " + std::to_string(r) + " has label " + std::to_string(rec[0]));
        Image img(kCifarSide, kCifarSide, 3);
        auto out = img.data();
        for (std::size_t i = 0; i < kPlane; ++i)
            for (std::size_t c = 0; c < 3; ++c)
                out[i * 3 + c] = rec[1 + c * kPlane + i];
        ds.images.push_back(std::move(img));
        ds.labels.push_back(rec[0]);
    }
    return ds;
}

std::vector<std::uint8_t> encode_cifar10(const LabeledDataset& ds)
{
    std::vector<std::uint8_t> bytes(ds.size() * kCifarRecordSize);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        const Image& img = ds.images[r];
        if (img.dims() != Dims{kCifarSide, kCifarSide, 3})
            throw InvalidArgument("CIFAR-10 records hold 32x32x3 images");
        if (ds.labels[r] < 0 || ds.labels[r] > 9)
            throw InvalidArgument("CIFAR-10 labels must lie in [0, 9]");
        std::uint8_t* rec = bytes.data() + r * kCifarRecordSize;
        rec[0] = static_cast<std::uint8_t>(ds.labels[r]);
        const auto in = img.data();
        for (std::size_t i = 0; i < kPlane; ++i)
            for (std::size_t c = 0; c < 3; ++c)
                rec[1 + c * kPlane + i] = in[i * 3 + c];
    }
    return bytes;
}

LabeledDataset load_cifar10_binary(const fs::path& path)
{
    try {
        return parse_cifar10(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_cifar10_binary(const LabeledDataset& ds, const fs::path& path)
{
    write_file(path, encode_cifar10(ds));
}

// ---------------------------------------------------------------------------
// PNM
// ---------------------------------------------------------------------------

namespace {

class PnmHeader {
public:
    explicit PnmHeader(std::span<const std::uint8_t> bytes) : b_(bytes) {}

    int number()
    {
        skip_space();
        std::size_t start = pos_;
        while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9')
            ++pos_;
        int v = 0;
        const auto* first = reinterpret_cast<const char*>(b_.data() + start);
        const auto* last = reinterpret_cast<const char*>(b_.data() + pos_);
        if (start == pos_ || std::from_chars(first, last, v).ec != std::errc{})
            throw FormatError("PNM header: expected a number at byte " + std::to_string(start));
        return v;
    }

    /// Exactly one whitespace byte separates the header from the raster.
    std::size_t raster_offset()
    {
        if (pos_ >= b_.size() || !is_space(b_[pos_]))
            throw FormatError("PNM header: missing whitespace before raster");
        return pos_ + 1;
    }

private:
    static bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

    void skip_space()
    {
        while (pos_ < b_.size()) {
            if (is_space(b_[pos_])) {
                ++pos_;
            } else if (b_[pos_] == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n')
                    ++pos_;
            } else {
                break;
            }
        }
    }

    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 2;
};

} // namespace

Image parse_pnm(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5'))
        throw FormatError("not a binary PNM (P5/P6) image");
    const int channels = bytes[1] == '6' ? 3 : 1;
    PnmHeader h(bytes);
    const int width = h.number();
    const int height = h.number();
    const int maxval = h.number();
    if (width < 1 || height < 1)
        throw FormatError("PNM dimensions must be positive");
    if (maxval != 255)
        throw FormatError("PNM maxval " + std::to_string(maxval) + " unsupported (only 255)");
    const std::size_t offset = h.raster_offset();
    const std::size_t need = static_cast<std::size_t>(width) * height * channels;
    if (bytes.size() - offset < need)
        throw FormatError("PNM raster truncated: need " + std::to_string(need) + " bytes, have " +
                          std::to_string(bytes.size() - offset));
    return Image(height, width, channels,
                 std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                                           bytes.begin() + static_cast<std::ptrdiff_t>(offset + need)));
}

std::vector<std::uint8_t> encode_pnm(const Image& img)
{
    if (img.channels() != 1 && img.channels() != 3)
        throw InvalidArgument("PNM holds 1 or 3 channels");
    const std::string header = std::string(img.channels() == 3 ? "P6" : "P5") + "\n" +
                               std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.data().begin(), img.data().end());
    return out;
}

Image read_pnm(const fs::path& path)
{
    try {
        return parse_pnm(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_pnm(const Image& img, const fs::path& path)
{
    write_file(path, encode_pnm(img));
}

namespace {
constexpr const char* kManifest = "labels.csv";

std::string trim(std::string s)
{
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}
} // namespace

LabeledDataset load_pnm_dataset(const fs::path& dir, int num_classes)
{
    const fs::path manifest = dir / kManifest;
    std::istringstream lines(read_text(manifest));
    LabeledDataset ds;
    std::string line;
    int line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty())
            continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos)
            throw FormatError(manifest.string() + ":" + std::to_string(line_no) + ": expected filename,label");
        const std::string name = trim(line.substr(0, comma));
        const std::string label_text = trim(line.substr(comma + 1));
        if (line_no == 1 && name == "filename" && label_text == "label")
            continue;
        int label = -1;
        const auto [ptr, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
        if (ec != std::errc{} || ptr != label_text.data() + label_text.size() || label < 0)
            throw FormatError(manifest.string() + ":" + std::to_string(line_no) + ": bad label '" + label_text + "'");
        ds.images.push_back(read_pnm(dir / name));
        ds.labels.push_back(label);
    }
    if (ds.empty())
        throw FormatError(manifest.string() + " lists no samples");
    const int max_label = *std::max_element(ds.labels.begin(), ds.labels.end());
    ds.num_classes = num_classes > 0 ? num_classes : max_label + 1;
    if (max_label >= ds.num_classes)
        throw FormatError(manifest.string() + ": label " + std::to_string(max_label) + " outside [0, " +
                          std::to_string(ds.num_classes) + ")");
    for (const auto& img : ds.images)
        if (img.dims() != ds.images.front().dims())
            throw FormatError(dir.string() + ": images of differing dimensions");
    return ds;
}

void save_pnm_dataset(const LabeledDataset& ds, const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    std::string manifest = "filename,label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%06zu.ppm", i);
        write_pnm(ds.images[i], dir / name);
        manifest += std::string(name) + "," + std::to_string(ds.labels[i]) + "\n";
    }
    write_text(dir / kManifest, manifest);
}

LabeledDataset load_dataset(const fs::path& path, int num_classes)
{
    if (path.extension() == ".bin" || fs::is_regular_file(path)) {
        LabeledDataset ds = load_cifar10_binary(path);
        if (num_classes > 0) {
            for (int label : ds.labels)
                if (label >= num_classes)
                    throw FormatError(path.string() + ": label " + std::to_string(label) + " outside [0, " +
                                      std::to_string(num_classes) + ")");
            ds.num_classes = num_classes;
        }
        return ds;
    }
    return load_pnm_dataset(path, num_classes);
}

void save_dataset(const LabeledDataset& ds, const fs::path& path)
{
    if (path.extension() == ".bin")
        write_cifar10_binary(ds, path);
    else
        save_pnm_dataset(ds, path);
}

} // namespace sweepkit
