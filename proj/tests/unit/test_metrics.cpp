#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "oracles.hpp"
#include "sweepkit/error.hpp"
#include "sweepkit/metrics.hpp"
#include "sweepkit/parallel.hpp"
#include "sweepkit/rng.hpp"

using namespace sweepkit;

namespace {

/// Reads the label out of the first pixel value.
class PixelOracle final : public Classifier {
public:
    explicit PixelOracle(int k) : k_(k) {}
    [[nodiscard]] int predict(const Image& img) const override { return img.data()[0] % k_; }
    [[nodiscard]] int num_classes() const override { return k_; }

private:
    int k_;
};

class Constant final : public Classifier {
public:
    Constant(int label, int k) : label_(label), k_(k) {}
    [[nodiscard]] int predict(const Image&) const override { return label_; }
    [[nodiscard]] int num_classes() const override { return k_; }

private:
    int label_;
    int k_;
};

LabeledDataset tagged(std::size_t n, int k, std::uint64_t seed)
{
    LabeledDataset ds;
    ds.num_classes = k;
    for (std::size_t i = 0; i < n; ++i) {
        Image img = oracle::random_image(8, 8, 3, seed + i);
        const int label = static_cast<int>(i % static_cast<std::size_t>(k));
        img.data()[0] = static_cast<std::uint8_t>(label);
        ds.images.push_back(img);
        ds.labels.push_back(label);
    }
    return ds;
}

Registry with_identity()
{
    Registry r = registry_default();
    AugmentationFn fn;
    fn.id = "Identity";
    fn.apply = [](const Image& img, const ParamMap&, Rng&) { return img; };
    r.add(std::move(fn));
    return r;
}

class ThreadsEnv {
public:
    explicit ThreadsEnv(const char* value)
    {
        if (const char* old = std::getenv("SWEEPKIT_THREADS"))
            saved_ = old;
        setenv("SWEEPKIT_THREADS", value, 1);
    }
    ~ThreadsEnv()
    {
        if (saved_.empty())
            unsetenv("SWEEPKIT_THREADS");
        else
            setenv("SWEEPKIT_THREADS", saved_.c_str(), 1);
    }

private:
    std::string saved_;
};

const Dims kShapeDims{32, 32, 3};

const TinyClassifier& clean_shapes_model()
{
    static const TinyClassifier m = [] {
        TrainConfig cfg;
        cfg.epochs = 8;
        cfg.seed = 3;
        return train(gen_shapes_dataset(1000, 10, kShapeDims, 1), cfg);
    }();
    return m;
}

} // namespace

TEST_CASE("a perfect classifier scores accuracy 1, a constant one scores 1/K")
{
    const LabeledDataset ds = tagged(200, 10, 1);
    CHECK(accuracy(PixelOracle(10), ds) == 1.0);
    for (int c = 0; c < 10; ++c)
        CHECK(accuracy(Constant(c, 10), ds) == 0.1);
}

TEST_CASE("accuracy is the exact fraction of correct predictions")
{
    LabeledDataset ds = tagged(10, 4, 2);
    for (std::size_t i : {1u, 4u, 8u})
        ds.labels[i] = (ds.labels[i] + 1) % 4;
    CHECK(accuracy(PixelOracle(4), ds) == 7.0 / 10.0);
}

TEST_CASE("single-target ASR drops target-class samples")
{
    const LabeledDataset ds = tagged(100, 10, 3);
    const AttackInstance inst{"sq", SolidSquare{}, LabelMap::single(3), 0.1, Role::Validation};
    const TriggeredSet t = make_triggered_set(ds, inst);
    CHECK(t.size() == 90);
    for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(t.true_labels[i] != 3);
        CHECK(t.desired_labels[i] == 3);
        CHECK(t.images[i] == apply_trigger(ds.images[t.source_indices[i]], inst.trigger));
    }
    CHECK(attack_success_rate(Constant(3, 10), ds, inst) == 1.0);
    CHECK(attack_success_rate(Constant(4, 10), ds, inst) == 0.0);
    // The trigger overwrites the bottom-right corner only, so the tag survives.
    CHECK(attack_success_rate(PixelOracle(10), ds, inst) == 0.0);
}

TEST_CASE("all-to-all ASR keeps every sample and targets the next class")
{
    const LabeledDataset ds = tagged(50, 5, 4);
    const AttackInstance inst{"a2a", SolidSquare{}, LabelMap::all_to_all(), 0.1, Role::Validation};
    const TriggeredSet t = make_triggered_set(ds, inst);
    REQUIRE(t.size() == 50);
    for (std::size_t i = 0; i < t.size(); ++i)
        CHECK(t.desired_labels[i] == (t.true_labels[i] + 1) % 5);
    // A constant classifier hits exactly the samples whose successor is its label.
    CHECK(attack_success_rate(Constant(0, 5), ds, inst) == 0.2);
}

TEST_CASE("evaluate reports exact counts and the confusion matrix")
{
    LabeledDataset ds = tagged(30, 3, 5);
    ds.labels[0] = 2;
    const AttackInstance inst{"sq", SolidSquare{}, LabelMap::single(1), 0.1, Role::Validation};
    const TriggeredSet t = make_triggered_set(ds, inst);
    const EvalReport r = evaluate(PixelOracle(3), ds, t);
    CHECK(r.clean_total == 30);
    CHECK(r.clean_correct == 29);
    CHECK(r.triggered_total == t.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
        hits += t.images[i].data()[0] % 3 == 1;
    CHECK(r.triggered_hits == hits);
    REQUIRE(r.confusion.size() == 3);
    CHECK(r.confusion[2][0] == 1);
    CHECK(r.confusion[0][0] == 9);
    std::size_t total = 0;
    for (const auto& row : r.confusion)
        for (std::size_t v : row)
            total += v;
    CHECK(total == 30);
    CHECK(r.acc() == 29.0 / 30.0);
}

TEST_CASE("empty inputs are rejected")
{
    const PixelOracle m(3);
    LabeledDataset empty;
    empty.num_classes = 3;
    const AttackInstance inst{"sq", SolidSquare{}, LabelMap::single(1), 0.1, Role::Validation};
    CHECK_THROWS_AS(static_cast<void>(accuracy(m, empty)), InvalidArgument);
    CHECK_THROWS_AS(static_cast<void>(attack_success_rate(m, empty, inst)), InvalidArgument);
    CHECK_THROWS_AS(static_cast<void>(attack_success_rate(m, TriggeredSet{})), InvalidArgument);

    LabeledDataset only_target = tagged(6, 3, 6);
    only_target.labels.assign(6, 1);
    CHECK_THROWS_AS(static_cast<void>(attack_success_rate(m, only_target, inst)), InvalidArgument);
}

TEST_CASE("an identity policy changes nothing")
{
    const Registry r = with_identity();
    const CompiledPolicy identity(r, Policy::of({"Identity"}));
    const LabeledDataset ds = gen_shapes_dataset(300, 10, kShapeDims, 7);
    const TinyClassifier& m = clean_shapes_model();
    CHECK(predict_all(m, ds.images, &identity, 11) == predict_all(m, ds.images));
    CHECK(accuracy(m, ds, &identity, 11) == accuracy(m, ds));
}

TEST_CASE("sample i is preprocessed with its own derived seed")
{
    const Registry r = registry_default();
    const CompiledPolicy policy(r, Policy::of({"OD", "SAT"}));
    const LabeledDataset ds = gen_shapes_dataset(150, 10, kShapeDims, 8);
    const TinyClassifier& m = clean_shapes_model();
    const auto got = predict_all(m, ds.images, &policy, 99);
    for (std::size_t i = 0; i < ds.size(); ++i)
        CHECK(got[i] == m.predict(policy.apply(ds.images[i], derive_seed(99, "preprocess", i))));
    CHECK(sample_seed(99, 4) == derive_seed(99, "preprocess", 4));
}

TEST_CASE("predictions do not depend on the worker count")
{
    const Registry r = registry_default();
    const CompiledPolicy policy(r, Policy::of({"GCSM", "DSSM", "SAT"}));
    const LabeledDataset ds = gen_shapes_dataset(333, 10, kShapeDims, 9);
    const TinyClassifier& m = clean_shapes_model();
    std::vector<int> one;
    std::vector<int> plain_one;
    {
        const ThreadsEnv env("1");
        CHECK(worker_count() == 1);
        one = predict_all(m, ds.images, &policy, 5);
        plain_one = predict_all(m, ds.images);
    }
    for (const char* n : {"2", "3", "7"}) {
        const ThreadsEnv env(n);
        CHECK(predict_all(m, ds.images, &policy, 5) == one);
        CHECK(predict_all(m, ds.images) == plain_one);
    }
}

TEST_CASE("a clean model ignores a random small-budget trigger")
{
    const LabeledDataset test = gen_shapes_dataset(500, 10, kShapeDims, 10);
    Rng rng(12);
    const AttackInstance inst{"noise", make_perturbation_trigger(Norm::L2, 5.0 * std::sqrt(3072.0), kShapeDims, rng),
                              LabelMap::single(3), 0.05, Role::Search};
    const double asr = attack_success_rate(clean_shapes_model(), test, inst);
    CAPTURE(asr);
    CHECK(asr <= 0.2);
}
