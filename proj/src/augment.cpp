#include "sweepkit/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "json_util.hpp"
#include "sweepkit/error.hpp"

namespace sweepkit {

void validate(const OdParams& p)
{
    if (!(p.distortion_limit > 0.0 && p.distortion_limit <= 1.0))
        throw InvalidArgument("optical distortion limit must lie in (0, 1]");
}

void validate(const GammaParams& p)
{
    if (!(p.gamma > 0.0) || !std::isfinite(p.gamma))
        throw InvalidArgument("gamma must be positive");
}

void validate(const RspaParams& p)
{
    if (!(p.scale_limit >= 1.0) || !std::isfinite(p.scale_limit))
        throw InvalidArgument("RSPA scale limit must be at least 1");
}

void validate(const SatParams& p)
{
    if (!(p.translation_limit >= 0.0 && p.translation_limit < 1.0))
        throw InvalidArgument("SAT translation limit must lie in [0, 1)");
    if (!(p.scaling_limit >= 0.0 && p.scaling_limit < 1.0))
        throw InvalidArgument("SAT scaling limit must lie in [0, 1)");
    if (!(p.rotation_limit >= 0.0) || !std::isfinite(p.rotation_limit))
        throw InvalidArgument("SAT rotation limit must be non-negative");
}

// ---------------------------------------------------------------------------
// OD
// ---------------------------------------------------------------------------

RemapField optical_distortion_maps(int height, int width, double delta_k)
{
    RemapField f{height, width, {}, {}};
    const auto n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    f.map_x.resize(n);
    f.map_y.resize(n);
    const int cx = width / 2;
    const int cy = height / 2;
    for (int v = 0; v < height; ++v)
        for (int u = 0; u < width; ++u) {
            const auto k = static_cast<std::size_t>(v) * static_cast<std::size_t>(width) + static_cast<std::size_t>(u);
            f.map_x[k] = (u - cx) * (1.0 + delta_k) + cx;
            f.map_y[k] = (v - cy) * (1.0 + delta_k) + cy;
        }
    return f;
}

Image optical_distortion_fixed(const Image& img, double delta_k)
{
    return remap(img, optical_distortion_maps(img.height(), img.width(), delta_k));
}

Image optical_distortion(const Image& img, const OdParams& p, Rng& rng)
{
    validate(p);
    const double delta_k = rng.uniform(-p.distortion_limit, 0.0);
    return optical_distortion_fixed(img, delta_k);
}

// ---------------------------------------------------------------------------
// Gamma-space and scaled median filters
// ---------------------------------------------------------------------------

Lut gamma_lut(double gamma)
{
    validate(GammaParams{gamma});
    Lut lut{};
    for (int i = 0; i < 256; ++i)
        lut[static_cast<std::size_t>(i)] = to_pixel(255.0 * std::pow(i / 255.0, gamma));
    return lut;
}

Image gamma_transform(const Image& img, const GammaParams& p)
{
    return apply_lut(img, gamma_lut(p.gamma));
}

namespace {

int scaled_side(int side, double factor)
{
    return std::max(1, static_cast<int>(std::floor(side * factor)));
}

Image gcsm_with(const Image& img, double gamma, int kernel)
{
    return median_filter(gamma_transform(img, {gamma}), kernel);
}

Image gesm_with(const Image& img, double gain, double gamma, double scale, int kernel)
{
    Lut boost{};
    for (int i = 0; i < 256; ++i)
        boost[static_cast<std::size_t>(i)] = to_pixel(i * gain);
    Image x = gamma_transform(apply_lut(img, boost), {gamma});
    x = resize(x, scaled_side(img.height(), scale), scaled_side(img.width(), scale));
    x = median_filter(x, kernel);
    return resize(x, img.height(), img.width());
}

Image dssm_with(const Image& img, double scale, int kernel)
{
    Image x = resize(img, scaled_side(img.height(), scale), scaled_side(img.width(), scale));
    x = median_filter(x, kernel);
    return resize(x, img.height(), img.width());
}

} // namespace

Image gcsm(const Image& img)
{
    return gcsm_with(img, kGammaCompression, kMedianKernel);
}

Image gesm(const Image& img)
{
    return gesm_with(img, kGesmGain, kGammaExtension, kGesmScale, kMedianKernel);
}

Image dssm(const Image& img)
{
    return dssm_with(img, kDssmScale, kMedianKernel);
}

// ---------------------------------------------------------------------------
// RSPA
// ---------------------------------------------------------------------------

RspaDraw draw_rspa(int side, const RspaParams& p, Rng& rng)
{
    validate(p);
    const int len_max = static_cast<int>(std::floor(side * p.scale_limit));
    RspaDraw d;
    d.len = static_cast<int>(std::floor(rng.uniform(side, len_max)));
    const int rem = len_max - d.len;
    d.pad_left = static_cast<int>(std::floor(rng.uniform(0.0, rem)));
    d.pad_top = static_cast<int>(std::floor(rng.uniform(0.0, rem)));
    return d;
}

Image rspa_fixed(const Image& img, const RspaParams& p, const RspaDraw& draw)
{
    validate(p);
    if (img.height() != img.width())
        throw InvalidArgument("RSPA needs a square image");
    const int side = img.width();
    const int len_max = static_cast<int>(std::floor(side * p.scale_limit));
    const int rem = len_max - draw.len;
    if (draw.len < 1 || rem < 0 || draw.pad_left < 0 || draw.pad_left > rem || draw.pad_top < 0 || draw.pad_top > rem)
        throw InvalidArgument("RSPA draw inconsistent with the image size");
    Image x = resize(img, draw.len, draw.len);
    x = pad_zero(x, draw.pad_left, rem - draw.pad_left, draw.pad_top, rem - draw.pad_top);
    return resize(x, side, side);
}

Image rspa(const Image& img, const RspaParams& p, Rng& rng)
{
    if (img.height() != img.width())
        throw InvalidArgument("RSPA needs a square image");
    return rspa_fixed(img, p, draw_rspa(img.width(), p, rng));
}

// ---------------------------------------------------------------------------
// SAT
// ---------------------------------------------------------------------------

SatDraw draw_sat(const SatParams& p, Rng& rng)
{
    validate(p);
    SatDraw d;
    d.shift_x = rng.uniform(-p.translation_limit, p.translation_limit);
    d.shift_y = rng.uniform(-p.translation_limit, p.translation_limit);
    d.degrees = rng.uniform(-p.rotation_limit, p.rotation_limit);
    d.scale = rng.uniform(1.0 - p.scaling_limit, 1.0 + p.scaling_limit);
    return d;
}

Image sat_translate(const Image& img, double shift_x, double shift_y)
{
    const int h = img.height();
    const int w = img.width();
    const double dx = shift_x * w;
    const double dy = shift_y * h;
    Image out(h, w, img.channels());
    for (int y = 0; y < h; ++y) {
        const double sy = std::floor(y + dy);
        if (!(sy >= 0.0 && sy < h))
            continue;
        for (int x = 0; x < w; ++x) {
            const double sx = std::floor(x + dx);
            if (!(sx >= 0.0 && sx < w))
                continue;
            std::copy_n(img.pixel(static_cast<int>(sy), static_cast<int>(sx)), img.channels(), out.pixel(y, x));
        }
    }
    return out;
}

Image sat_rotate(const Image& img, double degrees)
{
    const int h = img.height();
    const int w = img.width();
    const int cx = w / 2;
    const int cy = h / 2;
    const double theta = degrees * std::numbers::pi / 180.0;
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    Image out(h, w, img.channels());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            const double sx = std::floor(dx * c + dy * s + cx);
            const double sy = std::floor(-dx * s + dy * c + cy);
            if (!(sx >= 0.0 && sx < w && sy >= 0.0 && sy < h))
                continue;
            std::copy_n(img.pixel(static_cast<int>(sy), static_cast<int>(sx)), img.channels(), out.pixel(y, x));
        }
    }
    return out;
}

Image sat_scale(const Image& img, double scale)
{
    if (!(scale > 0.0))
        throw InvalidArgument("SAT scale must be positive");
    const int h = img.height();
    const int w = img.width();
    const int nh = scaled_side(h, scale);
    const int nw = scaled_side(w, scale);
    if (nh == h && nw == w)
        return img;
    const Image resized = resize(img, nh, nw);
    // Per axis: crop the center when larger, zero-pad around the center when smaller.
    const int src_y0 = nh > h ? (nh - h) / 2 : 0;
    const int src_x0 = nw > w ? (nw - w) / 2 : 0;
    const int dst_y0 = nh < h ? (h - nh) / 2 : 0;
    const int dst_x0 = nw < w ? (w - nw) / 2 : 0;
    const int rows = std::min(h, nh);
    const int cols = std::min(w, nw);
    Image out(h, w, img.channels());
    for (int y = 0; y < rows; ++y) {
        const std::uint8_t* src = resized.pixel(src_y0 + y, src_x0);
        std::copy_n(src, static_cast<std::size_t>(cols * img.channels()), out.pixel(dst_y0 + y, dst_x0));
    }
    return out;
}

Image sat_fixed(const Image& img, const SatDraw& draw)
{
    Image x = sat_translate(img, draw.shift_x, draw.shift_y);
    x = sat_rotate(x, draw.degrees);
    return sat_scale(x, draw.scale);
}

Image sat(const Image& img, const SatParams& p, Rng& rng)
{
    return sat_fixed(img, draw_sat(p, rng));
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

std::string to_string(Category c)
{
    switch (c) {
    case Category::Affine: return "C1";
    case Category::Compression: return "C2";
    case Category::NoiseChannel: return "C3";
    case Category::Advanced: return "C4";
    }
    return "?";
}

void Registry::add(AugmentationFn fn)
{
    if (!fn.apply)
        throw ConfigError("augmentation '" + fn.id + "' has no implementation");
    if (find(fn.id))
        throw ConfigError("duplicate augmentation id '" + fn.id + "'");
    fns_.push_back(std::move(fn));
}

const AugmentationFn* Registry::find(const std::string& id) const
{
    for (const auto& f : fns_)
        if (f.id == id)
            return &f;
    return nullptr;
}

const AugmentationFn& Registry::at(const std::string& id) const
{
    if (const auto* f = find(id))
        return *f;
    throw ConfigError("unknown augmentation id '" + id + "'");
}

std::size_t Registry::index_of(const std::string& id) const
{
    return static_cast<std::size_t>(&at(id) - fns_.data());
}

namespace {

int int_param(const ParamMap& p, const std::string& name)
{
    const double v = p.at(name);
    if (!std::isfinite(v) || v != std::floor(v))
        throw InvalidArgument("parameter '" + name + "' must be an integer");
    return static_cast<int>(v);
}

Image map_pixels(const Image& img, const std::function<double(std::uint8_t)>& f)
{
    Lut lut{};
    for (int i = 0; i < 256; ++i)
        lut[static_cast<std::size_t>(i)] = to_pixel(f(static_cast<std::uint8_t>(i)));
    return apply_lut(img, lut);
}

Image flip_horizontal(const Image& img)
{
    Image out(img.dims());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            std::copy_n(img.pixel(y, img.width() - 1 - x), img.channels(), out.pixel(y, x));
    return out;
}

Image flip_vertical(const Image& img)
{
    Image out(img.dims());
    for (int y = 0; y < img.height(); ++y)
        std::copy_n(img.pixel(img.height() - 1 - y, 0), img.width() * img.channels(), out.pixel(y, 0));
    return out;
}

Image transpose(const Image& img)
{
    Image out(img.width(), img.height(), img.channels());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            std::copy_n(img.pixel(y, x), img.channels(), out.pixel(x, y));
    return out;
}

Image crop_fraction_resize(const Image& img, double fraction, int top_extra, int left_extra)
{
    const int ch = std::max(1, static_cast<int>(std::floor(img.height() * fraction)));
    const int cw = std::max(1, static_cast<int>(std::floor(img.width() * fraction)));
    return resize(crop(img, top_extra, left_extra, ch, cw), img.height(), img.width());
}

void check_fraction(double f)
{
    if (!(f > 0.0 && f <= 1.0))
        throw InvalidArgument("crop fraction must lie in (0, 1]");
}

Image box_blur(const Image& img, int kernel)
{
    if (kernel < 1 || kernel % 2 == 0)
        throw InvalidArgument("blur kernel must be odd and positive");
    const int r = kernel / 2;
    Image out(img.dims());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c) {
                int sum = 0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx)
                        sum += img.at(reflect101(y + dy, img.height()), reflect101(x + dx, img.width()), c);
                out.at(y, x, c) = to_pixel(static_cast<double>(sum) / (kernel * kernel));
            }
    return out;
}

AugmentationFn make(std::string id, Category cat, ParamMap defaults, bool stochastic, bool affine,
                    std::string summary, TransformFn apply, OutputShape shape = OutputShape::Same)
{
    return AugmentationFn{std::move(id), cat,    std::move(defaults), stochastic, affine,
                          shape,         std::move(summary), std::move(apply)};
}

} // namespace

Registry registry_default()
{
    Registry r;
    const auto C1 = Category::Affine;
    const auto C2 = Category::Compression;
    const auto C3 = Category::NoiseChannel;
    const auto C4 = Category::Advanced;

    r.add(make("OD", C1, {{"distortion_limit", 0.5}}, true, true,
               "center contraction by 1 + delta_k, delta_k ~ U(-limit, 0), floor-index remap",
               [](const Image& img, const ParamMap& p, Rng& rng) {
                   return optical_distortion(img, {p.at("distortion_limit")}, rng);
               }));
    r.add(make("GCSM", C2, {{"gamma", kGammaCompression}, {"kernel", kMedianKernel}}, false, false,
               "gamma LUT then median filter, result left in gamma space",
               [](const Image& img, const ParamMap& p, Rng&) {
                   return gcsm_with(img, p.at("gamma"), int_param(p, "kernel"));
               }));
    r.add(make("GESM", C2,
               {{"gain", kGesmGain}, {"gamma", kGammaExtension}, {"scale", kGesmScale}, {"kernel", kMedianKernel}},
               false, false, "saturating gain, gamma LUT, downscale, median filter, resize back",
               [](const Image& img, const ParamMap& p, Rng&) {
                   return gesm_with(img, p.at("gain"), p.at("gamma"), p.at("scale"), int_param(p, "kernel"));
               }));
    r.add(make("DSSM", C2, {{"scale", kDssmScale}, {"kernel", kMedianKernel}}, false, false,
               "downscale, median filter, resize back",
               [](const Image& img, const ParamMap& p, Rng&) {
                   return dssm_with(img, p.at("scale"), int_param(p, "kernel"));
               }));
    r.add(make("RSPA", C4, {{"scale_limit", 1.3}}, true, true,
               "shrink into a zero-padded frame at a random offset, resize back",
               [](const Image& img, const ParamMap& p, Rng& rng) {
                   return rspa(img, {p.at("scale_limit")}, rng);
               }));
    r.add(make("SAT", C4, {{"translation_limit", 0.16}, {"scaling_limit", 0.16}, {"rotation_limit", 4.0}}, true,
               true, "random translation, rotation and scaling on a zero canvas",
               [](const Image& img, const ParamMap& p, Rng& rng) {
                   return sat(img, {p.at("translation_limit"), p.at("scaling_limit"), p.at("rotation_limit")}, rng);
               }));

    r.add(make("HorizontalFlip", C1, {}, false, true, "mirror columns",
               [](const Image& img, const ParamMap&, Rng&) { return flip_horizontal(img); }));
    r.add(make("VerticalFlip", C1, {}, false, true, "mirror rows",
               [](const Image& img, const ParamMap&, Rng&) { return flip_vertical(img); }));
    r.add(make(
        "Transpose", C1, {}, false, true, "swap rows and columns",
        [](const Image& img, const ParamMap&, Rng&) { return transpose(img); }, OutputShape::Transposed));
    r.add(make(
        "Rotate90", C1, {}, false, true, "rotate 90 degrees counter-clockwise",
        [](const Image& img, const ParamMap&, Rng&) { return flip_vertical(transpose(img)); },
        OutputShape::Transposed));
    r.add(make("CenterCrop", C1, {{"fraction", 0.8}}, false, true,
               "crop the central fraction of each side, resize back",
               [](const Image& img, const ParamMap& p, Rng&) {
                   const double f = p.at("fraction");
                   check_fraction(f);
                   const int ch = std::max(1, static_cast<int>(std::floor(img.height() * f)));
                   const int cw = std::max(1, static_cast<int>(std::floor(img.width() * f)));
                   return crop_fraction_resize(img, f, (img.height() - ch) / 2, (img.width() - cw) / 2);
               }));
    r.add(make("RandomSizedCrop", C1, {{"fraction", 0.8}}, true, true,
               "crop the given fraction of each side at a uniform random offset, resize back",
               [](const Image& img, const ParamMap& p, Rng& rng) {
                   const double f = p.at("fraction");
                   check_fraction(f);
                   const int ch = std::max(1, static_cast<int>(std::floor(img.height() * f)));
                   const int cw = std::max(1, static_cast<int>(std::floor(img.width() * f)));
                   const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.height() - ch + 1)));
                   const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.width() - cw + 1)));
                   return crop_fraction_resize(img, f, top, left);
               }));
    r.add(make("GridDropout", C1, {{"cell", 8}, {"ratio", 0.5}}, false, true,
               "zero the top-left ratio x cell square of every cell x cell grid tile",
               [](const Image& img, const ParamMap& p, Rng&) {
                   const int cell = int_param(p, "cell");
                   const double ratio = p.at("ratio");
                   if (cell < 1 || !(ratio >= 0.0 && ratio <= 1.0))
                       throw InvalidArgument("GridDropout needs cell >= 1 and ratio in [0, 1]");
                   const int hole = static_cast<int>(std::floor(cell * ratio));
                   Image out = img;
                   for (int y = 0; y < img.height(); ++y)
                       for (int x = 0; x < img.width(); ++x)
                           if (y % cell < hole && x % cell < hole)
                               std::fill_n(out.pixel(y, x), img.channels(), std::uint8_t{0});
                   return out;
               }));

    r.add(make("Downscale", C2, {{"scale", 0.5}}, false, false, "nearest downscale, bilinear upscale back",
               [](const Image& img, const ParamMap& p, Rng&) {
                   const double s = p.at("scale");
                   if (!(s > 0.0 && s <= 1.0))
                       throw InvalidArgument("Downscale scale must lie in (0, 1]");
                   const Image small = resize(img, scaled_side(img.height(), s), scaled_side(img.width(), s),
                                              ResizeMode::Nearest);
                   return resize(small, img.height(), img.width());
               }));
    r.add(make("Posterize", C2, {{"bits", 4}}, false, false, "keep the top `bits` bits of every value",
               [](const Image& img, const ParamMap& p, Rng&) {
                   const int bits = int_param(p, "bits");
                   if (bits < 1 || bits > 8)
                       throw InvalidArgument("Posterize bits must lie in [1, 8]");
                   const int mask = (0xFF << (8 - bits)) & 0xFF;
                   return map_pixels(img, [mask](std::uint8_t v) { return static_cast<double>(v & mask); });
               }));
    r.add(make("MedianBlur", C2, {{"kernel", 3}}, false, false, "median filter with reflect-101 borders",
               [](const Image& img, const ParamMap& p, Rng&) { return median_filter(img, int_param(p, "kernel")); }));

    r.add(make("Blur", C3, {{"kernel", 3}}, false, false, "box mean with reflect-101 borders",
               [](const Image& img, const ParamMap& p, Rng&) { return box_blur(img, int_param(p, "kernel")); }));
    r.add(make("UniformNoise", C3, {{"amplitude", 16}}, true, false, "add U(-a, a) independently to every value",
               [](const Image& img, const ParamMap& p, Rng& rng) {
                   const double a = p.at("amplitude");
                   if (!(a >= 0.0) || !std::isfinite(a))
                       throw InvalidArgument("UniformNoise amplitude must be non-negative");
                   Image out = img;
                   for (auto& v : out.data())
                       v = to_pixel(v + rng.uniform(-a, a));
                   return out;
               }));
    r.add(make("ChannelShuffle", C3, {}, true, false, "uniform random permutation of the channels",
               [](const Image& img, const ParamMap&, Rng& rng) {
                   std::vector<int> perm(static_cast<std::size_t>(img.channels()));
                   std::iota(perm.begin(), perm.end(), 0);
                   for (std::size_t i = perm.size(); i > 1; --i)
                       std::swap(perm[i - 1], perm[rng.below(i)]);
                   Image out(img.dims());
                   for (int y = 0; y < img.height(); ++y)
                       for (int x = 0; x < img.width(); ++x)
                           for (int c = 0; c < img.channels(); ++c)
                               out.at(y, x, c) = img.at(y, x, perm[static_cast<std::size_t>(c)]);
                   return out;
               }));
    r.add(make("InvertImg", C3, {}, false, false, "255 - v",
               [](const Image& img, const ParamMap&, Rng&) {
                   return map_pixels(img, [](std::uint8_t v) { return 255.0 - v; });
               }));
    r.add(make("Brightness", C3, {{"delta", 32}}, false, false, "v + delta, clamped",
               [](const Image& img, const ParamMap& p, Rng&) {
                   const double d = p.at("delta");
                   return map_pixels(img, [d](std::uint8_t v) { return v + d; });
               }));
    r.add(make("Contrast", C3, {{"factor", 1.5}}, false, false, "(v - 128) * factor + 128, clamped",
               [](const Image& img, const ParamMap& p, Rng&) {
                   const double f = p.at("factor");
                   return map_pixels(img, [f](std::uint8_t v) { return (v - 128.0) * f + 128.0; });
               }));
    return r;
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

std::vector<std::string> Policy::ids() const
{
    std::vector<std::string> out;
    out.reserve(steps.size());
    for (const auto& s : steps)
        out.push_back(s.id);
    return out;
}

Policy Policy::of(std::initializer_list<std::string> ids)
{
    Policy p;
    for (const auto& id : ids)
        p.steps.push_back({id, {}});
    return p;
}

CompiledPolicy::CompiledPolicy(const Registry& registry, const Policy& policy) : policy_(policy)
{
    if (policy.empty())
        throw ConfigError("policy has no steps");
    for (const auto& step : policy.steps) {
        const auto& fn = registry.at(step.id);
        ParamMap params = fn.defaults;
        for (const auto& [name, value] : step.params) {
            if (!params.contains(name))
                throw ConfigError("augmentation '" + step.id + "' has no parameter '" + name + "'");
            params[name] = value;
        }
        steps_.push_back({fn.apply, std::move(params)});
    }
}

Image CompiledPolicy::apply(const Image& img, Rng& rng) const
{
    Image x = img;
    for (const auto& s : steps_)
        x = s.fn(x, s.params, rng);
    return x;
}

Image CompiledPolicy::apply(const Image& img, std::uint64_t seed) const
{
    Rng rng(seed);
    return apply(img, rng);
}

Image apply_policy(const Registry& registry, const Policy& policy, const Image& img, Rng& rng)
{
    return CompiledPolicy(registry, policy).apply(img, rng);
}

Policy canonical_order(const Registry& registry, Policy policy)
{
    std::stable_sort(policy.steps.begin(), policy.steps.end(), [&](const PolicyStep& a, const PolicyStep& b) {
        const auto& fa = registry.at(a.id);
        const auto& fb = registry.at(b.id);
        if (fa.affine != fb.affine)
            return fa.affine;
        return registry.index_of(a.id) < registry.index_of(b.id);
    });
    return policy;
}

namespace {
constexpr const char* kPolicySchema = "sweepkit.policy/v1";
}

namespace detail {

nlohmann::json policy_json(const Policy& p)
{
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : p.steps)
        steps.push_back({{"id", s.id}, {"params", s.params}});
    return {{"schema", kPolicySchema}, {"steps", steps}};
}

Policy policy_from_value(const nlohmann::json& doc)
{
    const nlohmann::json* steps = &doc;
    if (doc.is_object()) {
        if (doc.value("schema", std::string{}) != kPolicySchema)
            throw ConfigError(std::string("policy schema must be '") + kPolicySchema + "'");
        if (!doc.contains("steps"))
            throw ConfigError("policy document has no 'steps'");
        steps = &doc["steps"];
    }
    if (!steps->is_array())
        throw ConfigError("policy steps must be an array");
    Policy p;
    for (const auto& s : *steps) {
        PolicyStep step;
        if (s.is_string()) {
            step.id = s.get<std::string>();
        } else if (s.is_object() && s.contains("id") && s["id"].is_string()) {
            step.id = s["id"].get<std::string>();
            if (s.contains("params")) {
                if (!s["params"].is_object())
                    throw ConfigError("params of '" + step.id + "' must be an object");
                for (const auto& [k, v] : s["params"].items()) {
                    if (!v.is_number())
                        throw ConfigError("parameter '" + k + "' of '" + step.id + "' must be a number");
                    step.params[k] = v.get<double>();
                }
            }
        } else {
            throw ConfigError("policy step must be an id string or an object with an 'id'");
        }
        p.steps.push_back(std::move(step));
    }
    return p;
}

} // namespace detail

std::string policy_to_json(const Policy& policy)
{
    return detail::policy_json(policy).dump(2);
}

Policy policy_from_json(const std::string& text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("policy is not valid JSON: ") + e.what());
    }
    return detail::policy_from_value(doc);
}

} // namespace sweepkit
