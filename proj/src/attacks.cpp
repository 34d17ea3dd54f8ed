#include "sweepkit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sweepkit/error.hpp"

namespace sweepkit {

std::string to_string(Norm n)
{
    return n == Norm::L0 ? "L0" : "L2";
}

std::string to_string(Role r)
{
    return r == Role::Search ? "search" : "validation";
}

std::string trigger_kind(const TriggerSpec& t)
{
    switch (t.index()) {
    case 0: return "square";
    case 1: return "watermark";
    default: return "perturbation";
    }
}

std::size_t l0_norm(const Perturbation& p)
{
    const auto c = static_cast<std::size_t>(std::max(1, p.dims.channels));
    std::size_t count = 0;
    for (std::size_t i = 0; i + c <= p.pattern.size(); i += c)
        count += std::any_of(p.pattern.begin() + static_cast<std::ptrdiff_t>(i),
                             p.pattern.begin() + static_cast<std::ptrdiff_t>(i + c), [](double v) { return v != 0.0; });
    return count;
}

double l2_norm(const Perturbation& p)
{
    double s = 0.0;
    for (double v : p.pattern)
        s += v * v;
    return std::sqrt(s);
}

void validate(const TriggerSpec& t, Dims dims)
{
    if (dims.height < 1 || dims.width < 1 || (dims.channels != 1 && dims.channels != 3))
        throw InvalidArgument("trigger target dimensions are invalid");
    if (const auto* sq = std::get_if<SolidSquare>(&t)) {
        if (sq->size < 1 || sq->size > std::min(dims.height, dims.width))
            throw InvalidArgument("square trigger of size " + std::to_string(sq->size) + " does not fit a " +
                                  std::to_string(dims.height) + "x" + std::to_string(dims.width) + " image");
    } else if (const auto* wm = std::get_if<Watermark>(&t)) {
        if (!(wm->alpha > 0.0 && wm->alpha <= 1.0))
            throw InvalidArgument("watermark alpha must lie in (0, 1]");
        if (wm->mask.dims() != dims)
            throw InvalidArgument("watermark mask dimensions do not match the image");
    } else {
        const auto& p = std::get<Perturbation>(t);
        if (p.dims != dims || p.pattern.size() != dims.size())
            throw InvalidArgument("perturbation pattern dimensions do not match the image");
        if (!(p.budget > 0.0))
            throw InvalidArgument("perturbation budget must be positive");
        const bool within = p.norm == Norm::L0 ? static_cast<double>(l0_norm(p)) <= p.budget
                                               : l2_norm(p) <= p.budget * (1.0 + 1e-9);
        if (!within)
            throw InvalidArgument("perturbation pattern exceeds its " + to_string(p.norm) + " budget");
    }
}

Image apply_trigger(const Image& img, const TriggerSpec& t)
{
    validate(t, img.dims());
    Image out = img;
    if (const auto* sq = std::get_if<SolidSquare>(&t)) {
        for (int y = img.height() - sq->size; y < img.height(); ++y)
            for (int x = img.width() - sq->size; x < img.width(); ++x) {
                if (img.channels() == 1) {
                    out.at(y, x, 0) = static_cast<std::uint8_t>((sq->color[0] + sq->color[1] + sq->color[2]) / 3);
                } else {
                    for (int c = 0; c < 3; ++c)
                        out.at(y, x, c) = sq->color[static_cast<std::size_t>(c)];
                }
            }
    } else if (const auto* wm = std::get_if<Watermark>(&t)) {
        const auto src = img.data();
        const auto mask = wm->mask.data();
        auto dst = out.data();
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] = to_pixel((1.0 - wm->alpha) * src[i] + wm->alpha * mask[i]);
    } else {
        const auto& p = std::get<Perturbation>(t);
        auto dst = out.data();
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] = to_pixel(dst[i] + p.pattern[i]);
    }
    return out;
}

Image watermark_mask(Dims dims, std::uint64_t seed)
{
    constexpr int kGlyphW = 3;
    constexpr int kGlyphH = 5;
    constexpr int kGlyphs = 16;
    Rng rng(seed);
    // 3x5 bitmaps: one full vertical stem plus random strokes.
    std::array<std::array<bool, kGlyphW * kGlyphH>, kGlyphs> glyphs{};
    for (auto& g : glyphs) {
        const int stem = static_cast<int>(rng.below(kGlyphW));
        for (int y = 0; y < kGlyphH; ++y)
            for (int x = 0; x < kGlyphW; ++x)
                g[static_cast<std::size_t>(y * kGlyphW + x)] = x == stem || rng.uniform01() < 0.35;
    }
    Image mask(dims);
    const int row_shift = static_cast<int>(rng.below(kGlyphW + 1));
    for (int y = 0; y < dims.height; ++y) {
        const int line = y / (kGlyphH + 2);
        const int gy = y % (kGlyphH + 2);
        if (gy >= kGlyphH)
            continue;
        for (int x = 0; x < dims.width; ++x) {
            const int xs = x + line * row_shift;
            const int cell = xs / (kGlyphW + 1);
            const int gx = xs % (kGlyphW + 1);
            if (gx >= kGlyphW)
                continue;
            const auto& g = glyphs[static_cast<std::size_t>((cell * 7 + line * 5) % kGlyphs)];
            if (g[static_cast<std::size_t>(gy * kGlyphW + gx)])
                std::fill_n(mask.pixel(y, x), dims.channels, std::uint8_t{255});
        }
    }
    return mask;
}

namespace {

int l0_region_side(double budget, Dims dims)
{
    const int want = std::max(4, static_cast<int>(std::ceil(2.0 * std::sqrt(budget))));
    return std::min({dims.height, dims.width, want});
}

/// Keeps the floor(budget) positions with the largest summed magnitude inside
/// the bottom-right region; zeroes the rest.
void project_l0(Perturbation& p)
{
    const int side = l0_region_side(p.budget, p.dims);
    const auto c = static_cast<std::size_t>(p.dims.channels);
    std::vector<std::pair<double, std::size_t>> mags;
    for (int y = p.dims.height - side; y < p.dims.height; ++y)
        for (int x = p.dims.width - side; x < p.dims.width; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * static_cast<std::size_t>(p.dims.width) +
                                      static_cast<std::size_t>(x)) * c;
            double m = 0.0;
            for (std::size_t k = 0; k < c; ++k)
                m += std::abs(p.pattern[base + k]);
            mags.emplace_back(m, base);
        }
    const auto keep = std::min(mags.size(), static_cast<std::size_t>(std::floor(p.budget)));
    std::stable_sort(mags.begin(), mags.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<double> out(p.pattern.size(), 0.0);
    for (std::size_t i = 0; i < keep; ++i)
        for (std::size_t k = 0; k < c; ++k)
            out[mags[i].second + k] = std::clamp(p.pattern[mags[i].second + k], -255.0, 255.0);
    p.pattern = std::move(out);
}

void project_l2(Perturbation& p, bool to_sphere)
{
    const double n = l2_norm(p);
    if (n == 0.0 || (!to_sphere && n <= p.budget))
        return;
    const double s = p.budget / n;
    for (double& v : p.pattern)
        v *= s;
    while (l2_norm(p) > p.budget)
        for (double& v : p.pattern)
            v *= 1.0 - 1e-12;
}

} // namespace

Perturbation make_perturbation_trigger(Norm norm, double budget, Dims dims, Rng& rng)
{
    if (!(budget > 0.0) || !std::isfinite(budget))
        throw InvalidArgument("perturbation budget must be positive");
    if (dims.height < 1 || dims.width < 1 || (dims.channels != 1 && dims.channels != 3))
        throw InvalidArgument("perturbation dimensions are invalid");
    Perturbation p{dims, std::vector<double>(dims.size()), norm, budget};
    if (norm == Norm::L2) {
        for (double& v : p.pattern)
            v = rng.uniform(-1.0, 1.0);
        project_l2(p, true);
    } else {
        for (double& v : p.pattern)
            v = rng.uniform(-255.0, 255.0);
        project_l0(p);
    }
    return p;
}

Perturbation make_gradient_perturbation_trigger(Norm norm, double budget, const TinyClassifier& model,
                                                std::span<const Image> batch, int target, Rng& rng,
                                                const GradientTriggerConfig& cfg)
{
    if (batch.empty())
        throw InvalidArgument("gradient trigger needs a non-empty clean batch");
    if (target < 0 || target >= model.num_classes())
        throw InvalidArgument("gradient trigger target outside the model's classes");
    if (cfg.iterations < 1 || !(cfg.step > 0.0))
        throw InvalidArgument("gradient trigger needs iterations >= 1 and a positive step");
    const Dims dims = model.input_dims();
    Perturbation p = make_perturbation_trigger(norm, budget, dims, rng);

    const std::vector<int> labels(batch.size(), target);
    std::vector<std::vector<double>> inputs(batch.size(), std::vector<double>(dims.size()));
    std::vector<std::vector<double>> grads;
    std::vector<double> g(dims.size());
    for (int it = 0; it < cfg.iterations; ++it) {
        for (std::size_t j = 0; j < batch.size(); ++j) {
            const auto px = batch[j].data();
            for (std::size_t i = 0; i < px.size(); ++i)
                inputs[j][i] = std::clamp(px[i] + p.pattern[i], 0.0, 255.0);
        }
        model.loss_and_input_gradient(inputs, labels, grads);
        std::fill(g.begin(), g.end(), 0.0);
        for (const auto& gj : grads)
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] += gj[i];

        if (norm == Norm::L2) {
            double gn = 0.0;
            for (double v : g)
                gn += v * v;
            gn = std::sqrt(gn);
            if (gn == 0.0)
                break;
            for (std::size_t i = 0; i < g.size(); ++i)
                p.pattern[i] -= cfg.step * g[i] / gn;
            project_l2(p, false);
        } else {
            for (std::size_t i = 0; i < g.size(); ++i)
                p.pattern[i] -= cfg.step * (g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0));
            project_l0(p);
        }
    }
    return p;
}

int LabelMap::desired(int label, int num_classes) const
{
    if (num_classes < 1 || label < 0 || label >= num_classes)
        throw InvalidArgument("label outside [0, K)");
    if (mode == Mode::AllToAll)
        return (label + 1) % num_classes;
    return target;
}

void AttackInstance::validate(Dims dims, int num_classes) const
{
    if (name.empty())
        throw InvalidArgument("attack instance needs a name");
    if (!(poison_ratio > 0.0 && poison_ratio < 1.0))
        throw InvalidArgument("poison ratio of '" + name + "' must lie in (0, 1)");
    if (labels.mode == LabelMap::Mode::SingleTarget && (labels.target < 0 || labels.target >= num_classes))
        throw InvalidArgument("target of '" + name + "' outside [0, K)");
    sweepkit::validate(trigger, dims);
}

PoisonResult poison_dataset(const LabeledDataset& ds, const AttackInstance& inst, Rng& rng)
{
    ds.validate();
    if (ds.empty())
        throw InvalidArgument("cannot poison an empty dataset");
    inst.validate(ds.dims(), ds.num_classes);
    const auto count = static_cast<std::size_t>(std::floor(inst.poison_ratio * static_cast<double>(ds.size()) + 1e-9));
    if (count < 1)
        throw InvalidArgument("poison ratio " + std::to_string(inst.poison_ratio) + " selects no samples of " +
                              std::to_string(ds.size()));

    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i)
        std::swap(order[i], order[i + static_cast<std::size_t>(rng.below(order.size() - i))]);
    order.resize(count);
    std::sort(order.begin(), order.end());

    PoisonResult r{ds, order, 0};
    for (std::size_t i : order) {
        r.dataset.images[i] = apply_trigger(ds.images[i], inst.trigger);
        const int want = inst.labels.desired(ds.labels[i], ds.num_classes);
        r.unchanged_labels += want == ds.labels[i];
        r.dataset.labels[i] = want;
    }
    return r;
}

TriggeredSet make_triggered_set(const LabeledDataset& clean, const AttackInstance& inst)
{
    TriggeredSet t;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const int label = clean.labels[i];
        if (inst.labels.mode == LabelMap::Mode::SingleTarget && label == inst.labels.target)
            continue;
        t.images.push_back(apply_trigger(clean.images[i], inst.trigger));
        t.true_labels.push_back(label);
        t.desired_labels.push_back(inst.labels.desired(label, clean.num_classes));
        t.source_indices.push_back(i);
    }
    return t;
}

std::vector<AttackInstance> attack_db_default(Dims dims, int num_classes)
{
    if (num_classes < 2)
        throw InvalidArgument("attack database needs at least two classes");
    const int side = std::min(dims.height, dims.width);
    const auto square = [side](int size, std::array<std::uint8_t, 3> color) {
        return SolidSquare{std::min(size, side), color};
    };
    const auto target = [num_classes](int t) { return t % num_classes; };
    constexpr std::uint64_t kDbSeed = 0x7A11ED5EEDULL;
    const double l2_budget = 11.0 * std::sqrt(static_cast<double>(dims.size()));

    Rng l2_rng(derive_seed(kDbSeed, "l2-trigger"));
    Rng l0_rng(derive_seed(kDbSeed, "l0-trigger"));

    std::vector<AttackInstance> db;
    db.push_back({"trojan-wm-a", Watermark{watermark_mask(dims, derive_seed(kDbSeed, "watermark", 0)), 0.2},
                  LabelMap::single(target(7)), 0.10, Role::Validation});
    db.push_back({"trojan-wm-b", Watermark{watermark_mask(dims, derive_seed(kDbSeed, "watermark", 1)), 0.2},
                  LabelMap::single(target(0)), 0.10, Role::Search});
    db.push_back({"trojan-sq-a", square(4, {0, 255, 255}), LabelMap::single(target(7)), 0.10, Role::Validation});
    db.push_back({"trojan-sq-b", square(6, {255, 128, 0}), LabelMap::single(target(0)), 0.10, Role::Validation});
    db.push_back({"badnets-all-to-all", square(5, {255, 255, 255}), LabelMap::all_to_all(), 0.10, Role::Validation});
    db.push_back({"badnets-single", square(5, {255, 255, 255}), LabelMap::single(target(33)), 0.10, Role::Validation});
    db.push_back({"invisible-l2", make_perturbation_trigger(Norm::L2, l2_budget, dims, l2_rng),
                  LabelMap::single(target(3)), 0.05, Role::Search});
    db.push_back({"invisible-l0", make_perturbation_trigger(Norm::L0, 24.0, dims, l0_rng),
                  LabelMap::single(target(4)), 0.05, Role::Search});
    for (const auto& a : db)
        a.validate(dims, num_classes);
    return db;
}

} // namespace sweepkit
