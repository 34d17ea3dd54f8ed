#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sweepkit/image.hpp"
#include "sweepkit/imgcore.hpp"
#include "sweepkit/rng.hpp"

namespace sweepkit {

// ---------------------------------------------------------------------------
// Shortlisted transforms
// ---------------------------------------------------------------------------

struct OdParams {
    double distortion_limit = 0.5; ///< delta in (0, 1]
};

inline constexpr double kGammaCompression = 0.6;
inline constexpr double kGammaExtension = 2.6;
inline constexpr int kMedianKernel = 5;
inline constexpr double kGesmGain = 1.53;
inline constexpr double kGesmScale = 0.75;
inline constexpr double kDssmScale = 0.8;

struct GammaParams {
    double gamma = 1.0; ///< > 0; < 1 compresses (lightens), > 1 extends (darkens)
};

struct RspaParams {
    double scale_limit = 1.3; ///< sigma >= 1
};

struct SatParams {
    double translation_limit = 0.16; ///< fraction of width/height, in [0, 1)
    double scaling_limit = 0.16;     ///< in [0, 1)
    double rotation_limit = 4.0;     ///< degrees, >= 0
};

void validate(const OdParams& p);
void validate(const GammaParams& p);
void validate(const RspaParams& p);
void validate(const SatParams& p);

/// Source-coordinate maps of the center contraction:
/// map_x(u, v) = (u - cx)(1 + delta_k) + cx, map_y likewise, cx = floor(w/2), cy = floor(h/2).
RemapField optical_distortion_maps(int height, int width, double delta_k);
/// Optical distortion with a fixed delta_k (test hook).
Image optical_distortion_fixed(const Image& img, double delta_k);
/// Draws delta_k ~ U(-delta, 0) and remaps.
Image optical_distortion(const Image& img, const OdParams& p, Rng& rng);

/// lut[i] = to_pixel(255 * (i / 255)^gamma)
Lut gamma_lut(double gamma);
Image gamma_transform(const Image& img, const GammaParams& p);

/// Median filter in gamma-compressed space; the output stays compressed.
Image gcsm(const Image& img);
/// x1.53 (saturating), gamma 2.6, downscale to 75 %, 5x5 median, resize back.
Image gesm(const Image& img);
/// Downscale to 80 %, 5x5 median, resize back.
Image dssm(const Image& img);

/// Random draws of one RSPA application on an l x l image.
struct RspaDraw {
    int len = 0;      ///< resized content side
    int pad_left = 0; ///< x1
    int pad_top = 0;  ///< y1
};
RspaDraw draw_rspa(int side, const RspaParams& p, Rng& rng);
/// Resize to len, zero-pad to floor(l * sigma) at the drawn offsets, resize back to l.
Image rspa_fixed(const Image& img, const RspaParams& p, const RspaDraw& draw);
Image rspa(const Image& img, const RspaParams& p, Rng& rng);

/// Random draws of one SAT application.
struct SatDraw {
    double shift_x = 0.0; ///< delta_x, fraction of width
    double shift_y = 0.0; ///< delta_y, fraction of height
    double degrees = 0.0; ///< delta_r
    double scale = 1.0;   ///< delta_s
};
SatDraw draw_sat(const SatParams& p, Rng& rng);
/// out(x, y) = in(floor(x + dx * w), floor(y + dy * h)) when in bounds, else 0.
Image sat_translate(const Image& img, double shift_x, double shift_y);
/// Inverse-mapped rotation about (floor(w/2), floor(h/2)) with floored source indices.
Image sat_rotate(const Image& img, double degrees);
/// Resize by `scale`, then center-crop (scale > 1) or zero-pad (scale < 1) to the input size.
Image sat_scale(const Image& img, double scale);
Image sat_fixed(const Image& img, const SatDraw& draw);
Image sat(const Image& img, const SatParams& p, Rng& rng);

// ---------------------------------------------------------------------------
// Registry and policies
// ---------------------------------------------------------------------------

enum class Category { Affine, Compression, NoiseChannel, Advanced };
std::string to_string(Category c);

enum class OutputShape { Same, Transposed };

using ParamMap = std::map<std::string, double>;
using TransformFn = std::function<Image(const Image&, const ParamMap&, Rng&)>;

struct AugmentationFn {
    std::string id;
    Category category = Category::Affine;
    ParamMap defaults;
    bool stochastic = false;
    /// Moves pixel positions (sorted ahead of value filters in canonical policy order).
    bool affine = false;
    OutputShape shape = OutputShape::Same;
    std::string summary;
    TransformFn apply;
};

class Registry {
public:
    Registry() = default;

    /// Throws ConfigError on a duplicate id.
    void add(AugmentationFn fn);
    [[nodiscard]] const AugmentationFn* find(const std::string& id) const;
    /// Throws ConfigError for unknown ids.
    [[nodiscard]] const AugmentationFn& at(const std::string& id) const;
    /// Position in registration order; throws ConfigError for unknown ids.
    [[nodiscard]] std::size_t index_of(const std::string& id) const;

    [[nodiscard]] const std::vector<AugmentationFn>& functions() const { return fns_; }
    [[nodiscard]] std::size_t size() const { return fns_.size(); }

private:
    std::vector<AugmentationFn> fns_;
};

/// The six shortlisted transforms (OD, GCSM, GESM, DSSM, RSPA, SAT) followed by
/// sixteen simple functions spanning the affine, compression and
/// noise/channel categories. The full 71-function library is not reproduced;
/// callers can add() more.
Registry registry_default();

struct PolicyStep {
    std::string id;
    ParamMap params; ///< overrides of the function defaults

    friend bool operator==(const PolicyStep&, const PolicyStep&) = default;
};

struct Policy {
    std::vector<PolicyStep> steps;

    [[nodiscard]] bool empty() const { return steps.empty(); }
    [[nodiscard]] std::vector<std::string> ids() const;
    static Policy of(std::initializer_list<std::string> ids);
    friend bool operator==(const Policy&, const Policy&) = default;
};

/// A policy resolved against a registry. Holds copies of the functions, so it
/// outlives the registry it was compiled from.
class CompiledPolicy {
public:
    /// Throws ConfigError for empty policies, unknown ids or unknown parameter names.
    CompiledPolicy(const Registry& registry, const Policy& policy);

    /// Applies every step in order, threading rng.
    [[nodiscard]] Image apply(const Image& img, Rng& rng) const;
    /// Same as apply() with Rng(seed).
    [[nodiscard]] Image apply(const Image& img, std::uint64_t seed) const;

    [[nodiscard]] const Policy& policy() const { return policy_; }

private:
    struct Bound {
        TransformFn fn;
        ParamMap params;
    };
    Policy policy_;
    std::vector<Bound> steps_;
};

Image apply_policy(const Registry& registry, const Policy& policy, const Image& img, Rng& rng);

/// Sorts steps: affine functions first, then by registry position.
Policy canonical_order(const Registry& registry, Policy policy);

/// JSON document {"schema": "sweepkit.policy/v1", "steps": [{"id": ..., "params": {...}}]}.
std::string policy_to_json(const Policy& policy);
/// Accepts the document above or a bare step array. Throws ConfigError on schema problems.
Policy policy_from_json(const std::string& text);

} // namespace sweepkit
