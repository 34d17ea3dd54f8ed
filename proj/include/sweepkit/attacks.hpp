#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sweepkit/dataset.hpp"
#include "sweepkit/image.hpp"
#include "sweepkit/model.hpp"
#include "sweepkit/rng.hpp"

namespace sweepkit {

/// size x size block anchored at the bottom-right corner.
struct SolidSquare {
    int size = 5;
    std::array<std::uint8_t, 3> color{255, 255, 255};
};

/// round((1 - alpha) * img + alpha * mask) per value.
struct Watermark {
    Image mask;
    double alpha = 0.2;
};

enum class Norm { L0, L2 };

/// to_pixel(img + pattern) per value. L0 counts nonzero pixel positions
/// (any channel nonzero); L2 is the Euclidean norm over all values.
struct Perturbation {
    Dims dims;
    std::vector<double> pattern;
    Norm norm = Norm::L2;
    double budget = 0.0;
};

using TriggerSpec = std::variant<SolidSquare, Watermark, Perturbation>;

std::string to_string(Norm n);
/// "square", "watermark" or "perturbation".
std::string trigger_kind(const TriggerSpec& t);

/// Throws InvalidArgument when the trigger cannot be applied to images of `dims`
/// or violates its own invariants.
void validate(const TriggerSpec& t, Dims dims);

Image apply_trigger(const Image& img, const TriggerSpec& t);

/// Number of pixel positions with any nonzero channel.
std::size_t l0_norm(const Perturbation& p);
double l2_norm(const Perturbation& p);

/// Text-like tile: rows of seeded 3x5 glyphs in white on black, one pixel of
/// spacing between glyphs, repeated across the image.
Image watermark_mask(Dims dims, std::uint64_t seed);

/// Seeded random pattern projected onto the norm ball.
///   L2: U(-1, 1) per value, scaled to norm == budget.
///   L0: U(-255, 255) per value inside a bottom-right square of side
///       min(h, w, max(4, ceil(2 * sqrt(budget)))); the floor(budget) positions
///       with the largest summed magnitude are kept, everything else is zero.
Perturbation make_perturbation_trigger(Norm norm, double budget, Dims dims, Rng& rng);

struct GradientTriggerConfig {
    int iterations = 40;
    /// L2: step length in pixel units per iteration. L0: per-value step.
    double step = 60.0;
};

/// Universal targeted perturbation: starts from make_perturbation_trigger(),
/// then for a fixed number of iterations descends the model's cross-entropy
/// toward `target` over the clean batch, projecting onto the norm ball after
/// every step.
Perturbation make_gradient_perturbation_trigger(Norm norm, double budget, const TinyClassifier& model,
                                                std::span<const Image> batch, int target, Rng& rng,
                                                const GradientTriggerConfig& cfg = {});

struct LabelMap {
    enum class Mode { SingleTarget, AllToAll };
    Mode mode = Mode::SingleTarget;
    int target = 0;

    static LabelMap single(int target) { return {Mode::SingleTarget, target}; }
    static LabelMap all_to_all() { return {Mode::AllToAll, 0}; }

    /// Label the attacker wants for a sample of class `label`.
    [[nodiscard]] int desired(int label, int num_classes) const;
    friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

enum class Role { Search, Validation };
std::string to_string(Role r);

struct AttackInstance {
    std::string name;
    TriggerSpec trigger;
    LabelMap labels;
    double poison_ratio = 0.1;
    Role role = Role::Search;

    void validate(Dims dims, int num_classes) const;
};

struct PoisonResult {
    LabeledDataset dataset;
    /// Sorted ascending.
    std::vector<std::size_t> indices;
    /// Poisoned samples whose desired label equals the original label.
    std::size_t unchanged_labels = 0;
};

/// Patches floor(ratio * N) samples chosen uniformly without replacement and
/// relabels them through the label map.
PoisonResult poison_dataset(const LabeledDataset& ds, const AttackInstance& inst, Rng& rng);

/// Triggered evaluation samples with the labels the attacker wants. For a
/// single-target map, samples already of the target class are dropped.
struct TriggeredSet {
    std::vector<Image> images;
    std::vector<int> true_labels;
    std::vector<int> desired_labels;
    std::vector<std::size_t> source_indices;

    [[nodiscard]] std::size_t size() const { return images.size(); }
    [[nodiscard]] bool empty() const { return images.empty(); }
};
TriggeredSet make_triggered_set(const LabeledDataset& clean, const AttackInstance& inst);

/// Eight desk-scale instances mirroring the attack table: Trojan watermark
/// (two variants), Trojan colored square (two variants), BadNets all-to-all
/// and single-target white 5x5 squares, L2 and L0 invisible perturbations.
/// Targets are the table's labels taken modulo K. Search: the second
/// watermark (target 0), L2 and L0; the other five are validation instances.
std::vector<AttackInstance> attack_db_default(Dims dims, int num_classes);

} // namespace sweepkit
