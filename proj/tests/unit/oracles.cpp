#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "sweepkit/error.hpp"

namespace oracle {

using namespace sweepkit;

Image random_image(int height, int width, int channels, std::uint64_t seed)
{
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<int> value(0, 255);
    Image img(height, width, channels);
    for (auto& p : img.data())
        p = static_cast<std::uint8_t>(value(gen));
    return img;
}

std::uint8_t round_pixel(double v)
{
    const double r = std::floor(v + 0.5);
    return static_cast<std::uint8_t>(r < 0.0 ? 0.0 : (r > 255.0 ? 255.0 : r));
}

std::uint8_t gamma_value(int i, double gamma)
{
    return round_pixel(255.0 * std::pow(i / 255.0, gamma));
}

namespace {
int mirror(int i, int n)
{
    if (n == 1)
        return 0;
    // Reflect-101 is periodic with period 2n - 2 and symmetric about 0.
    const int period = 2 * n - 2;
    int m = (i < 0 ? -i : i) % period;
    return m < n ? m : period - m;
}
} // namespace

Image median(const Image& img, int kernel)
{
    const int r = kernel / 2;
    Image out(img.dims());
    std::vector<int> window;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c) {
                window.clear();
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx)
                        window.push_back(img.at(mirror(y + dy, img.height()), mirror(x + dx, img.width()), c));
                std::sort(window.begin(), window.end());
                out.at(y, x, c) = static_cast<std::uint8_t>(window[window.size() / 2]);
            }
    return out;
}

Image bilinear(const Image& img, int new_height, int new_width)
{
    if (new_height == img.height() && new_width == img.width())
        return img;
    Image out(new_height, new_width, img.channels());
    const auto source = [](int d, int old_size, int new_size) {
        const double s = (d + 0.5) * old_size / new_size - 0.5;
        return std::min(std::max(s, 0.0), static_cast<double>(old_size - 1));
    };
    for (int y = 0; y < new_height; ++y) {
        const double sy = source(y, img.height(), new_height);
        const int y0 = static_cast<int>(std::floor(sy));
        const int y1 = std::min(y0 + 1, img.height() - 1);
        const double fy = sy - y0;
        for (int x = 0; x < new_width; ++x) {
            const double sx = source(x, img.width(), new_width);
            const int x0 = static_cast<int>(std::floor(sx));
            const int x1 = std::min(x0 + 1, img.width() - 1);
            const double fx = sx - x0;
            for (int c = 0; c < img.channels(); ++c) {
                const double top = (1.0 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
                const double bottom = (1.0 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
                out.at(y, x, c) = round_pixel((1.0 - fy) * top + fy * bottom);
            }
        }
    }
    return out;
}

Image optical_distortion(const Image& img, double delta_k)
{
    const int cx = img.width() / 2;
    const int cy = img.height() / 2;
    Image out(img.dims());
    for (int v = 0; v < img.height(); ++v)
        for (int u = 0; u < img.width(); ++u) {
            const double mx = (u - cx) * (1.0 + delta_k) + cx;
            const double my = (v - cy) * (1.0 + delta_k) + cy;
            const int sx = static_cast<int>(std::floor(mx));
            const int sy = static_cast<int>(std::floor(my));
            if (sx < 0 || sy < 0 || sx >= img.width() || sy >= img.height())
                continue;
            for (int c = 0; c < img.channels(); ++c)
                out.at(v, u, c) = img.at(sy, sx, c);
        }
    return out;
}

Image translate(const Image& img, double shift_x, double shift_y)
{
    Image out(img.dims());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const int sx = static_cast<int>(std::floor(x + shift_x * img.width()));
            const int sy = static_cast<int>(std::floor(y + shift_y * img.height()));
            if (sx < 0 || sy < 0 || sx >= img.width() || sy >= img.height())
                continue;
            for (int c = 0; c < img.channels(); ++c)
                out.at(y, x, c) = img.at(sy, sx, c);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Algorithm 1
// ---------------------------------------------------------------------------

namespace {

std::uint64_t hash_key(std::uint64_t seed, const std::string& kind, int attack, bool finetuned,
                       std::vector<std::string> ids)
{
    std::sort(ids.begin(), ids.end());
    std::string key = kind + "|" + std::to_string(attack) + "|" + (finetuned ? "ft" : "orig");
    for (const auto& id : ids)
        key += "|" + id;
    std::uint64_t h = 1469598103934665603ULL ^ seed;
    for (unsigned char ch : key) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    h ^= h >> 29;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 32;
    return h;
}

} // namespace

double MockWorld::acc(int attack, bool finetuned, const std::vector<std::string>& ids) const
{
    // 4/8 .. 8/8; the threshold 0.75 lands exactly on one level.
    return 0.5 + static_cast<double>(hash_key(seed, "acc", attack, finetuned, ids) % 5) / 8.0;
}

double MockWorld::asr(int attack, bool finetuned, const std::vector<std::string>& ids) const
{
    if (finetuned && flat_finetuned_asr)
        return 0.5;
    return static_cast<double>(hash_key(seed, "asr", attack, finetuned, ids) % 9) / 8.0;
}

Registry mock_registry(int count)
{
    Registry r;
    for (int i = 0; i < count; ++i) {
        AugmentationFn fn;
        fn.id = "f" + std::to_string(i);
        fn.affine = i % 3 == 0;
        fn.category = fn.affine ? Category::Affine : Category::NoiseChannel;
        fn.summary = "copy";
        fn.apply = [](const Image& img, const ParamMap&, Rng&) { return img; };
        r.add(std::move(fn));
    }
    return r;
}

namespace {

class MockEvaluator final : public AttackEvaluator {
public:
    MockEvaluator(std::shared_ptr<const MockWorld> world, std::string name, int attack, bool finetuned)
        : world_(std::move(world)), name_(std::move(name)), attack_(attack), finetuned_(finetuned)
    {
    }

    [[nodiscard]] std::string name() const override { return name_; }
    [[nodiscard]] double acc(const Policy* p) const override
    {
        return world_->acc(attack_, finetuned_, p ? p->ids() : std::vector<std::string>{});
    }
    [[nodiscard]] double asr(const Policy* p) const override
    {
        return world_->asr(attack_, finetuned_, p ? p->ids() : std::vector<std::string>{});
    }
    [[nodiscard]] std::unique_ptr<AttackEvaluator> fine_tuned(const LabeledDataset& set,
                                                              const SweepConfig&) const override
    {
        if (set.empty())
            throw InvalidArgument("mock fine-tune on an empty set");
        return std::make_unique<MockEvaluator>(world_, name_, attack_, true);
    }

private:
    std::shared_ptr<const MockWorld> world_;
    std::string name_;
    int attack_;
    bool finetuned_;
};

} // namespace

EvaluatorList mock_evaluators(std::shared_ptr<const MockWorld> world, int attacks, const std::string& prefix)
{
    EvaluatorList out;
    for (int j = 0; j < attacks; ++j)
        out.push_back(std::make_unique<MockEvaluator>(world, prefix + std::to_string(j), j, false));
    return out;
}

Algorithm1 brute_force(const MockWorld& world, const Registry& registry, int attacks, double eps_acc,
                       double eps_asr, int n)
{
    Algorithm1 r;
    const auto& fns = registry.functions();

    struct Kept {
        std::size_t index;
        double avg;
    };
    std::vector<Kept> kept;
    for (std::size_t i = 0; i < fns.size(); ++i) {
        bool all_above = true;
        double sum = 0.0;
        for (int j = 0; j < attacks; ++j) {
            all_above = all_above && world.acc(j, false, {fns[i].id}) > eps_acc;
            sum += world.asr(j, false, {fns[i].id});
        }
        if (all_above)
            kept.push_back({i, sum / attacks});
    }
    // Insertion sort keyed on (average ASR, registry position).
    for (std::size_t a = 1; a < kept.size(); ++a)
        for (std::size_t b = a; b > 0; --b) {
            const Kept& lhs = kept[b - 1];
            const Kept& rhs = kept[b];
            if (lhs.avg > rhs.avg || (lhs.avg == rhs.avg && lhs.index > rhs.index))
                std::swap(kept[b - 1], kept[b]);
            else
                break;
        }
    for (const auto& k : kept) {
        r.shortlist.push_back(fns[k.index].id);
        r.shortlist_avg.push_back(k.avg);
    }

    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(n), kept.size());
    r.deficient = take < static_cast<std::size_t>(n);
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < take; ++i)
        chosen.push_back(kept[i].index);
    std::sort(chosen.begin(), chosen.end());
    for (bool affine_pass : {true, false})
        for (std::size_t idx : chosen)
            if (fns[idx].affine == affine_pass)
                r.pf.push_back(fns[idx].id);
    if (r.pf.empty())
        return r;

    double base_sum = 0.0;
    for (int j = 0; j < attacks; ++j)
        base_sum += world.asr(j, true, r.pf);
    r.avg_base = base_sum / attacks;

    const std::size_t subsets = (std::size_t{1} << r.pf.size()) - 1;
    r.subset_mean.assign(subsets, 0.0);
    r.subset_qualified.assign(subsets, false);
    std::vector<std::string> current;
    std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t pos, std::size_t mask) {
        if (pos == r.pf.size()) {
            if (mask == 0)
                return;
            double sum = 0.0;
            for (int j = 0; j < attacks; ++j)
                sum += world.asr(j, true, current);
            const double mean = sum / attacks;
            r.subset_mean[mask - 1] = mean;
            r.subset_qualified[mask - 1] = r.avg_base - mean > eps_asr;
            return;
        }
        walk(pos + 1, mask);
        current.push_back(r.pf[pos]);
        walk(pos + 1, mask | (std::size_t{1} << pos));
        current.pop_back();
    };
    walk(0, 0);

    std::size_t best = 0;
    for (std::size_t m = 1; m <= subsets; ++m)
        if (r.subset_qualified[m - 1] && (best == 0 || r.subset_mean[m - 1] < r.subset_mean[best - 1]))
            best = m;
    if (best == 0) {
        r.fallback = true;
        r.pi = r.pf;
    } else {
        for (std::size_t i = 0; i < r.pf.size(); ++i)
            if (best & (std::size_t{1} << i))
                r.pi.push_back(r.pf[i]);
    }
    return r;
}

TempDir::TempDir(const std::string& tag)
{
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("sweepkit-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir()
{
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

} // namespace oracle
