#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "sweepkit/attacks.hpp"
#include "sweepkit/error.hpp"
#include "sweepkit/metrics.hpp"

using namespace sweepkit;

namespace {

const Dims kDims{32, 32, 3};

LabeledDataset random_dataset(std::size_t n, int k, Dims d, std::uint64_t seed)
{
    LabeledDataset ds;
    ds.num_classes = k;
    for (std::size_t i = 0; i < n; ++i) {
        ds.images.push_back(oracle::random_image(d.height, d.width, d.channels, seed * 7919 + i));
        ds.labels.push_back(static_cast<int>(i % static_cast<std::size_t>(k)));
    }
    return ds;
}

AttackInstance white_square(LabelMap labels, double ratio = 0.1)
{
    return {"square", SolidSquare{5, {255, 255, 255}}, labels, ratio, Role::Validation};
}

} // namespace

// ---------------------------------------------------------------------------
// Triggers
// ---------------------------------------------------------------------------

TEST_CASE("white 5x5 square overwrites exactly the bottom-right block")
{
    const Image img = oracle::random_image(32, 32, 3, 1);
    const Image out = apply_trigger(img, SolidSquare{});
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            for (int c = 0; c < 3; ++c) {
                const bool in_block = y >= 27 && x >= 27;
                CHECK(out.at(y, x, c) == (in_block ? 255 : img.at(y, x, c)));
            }
}

TEST_CASE("square trigger: colors, single channel, oversize")
{
    const Image img = oracle::random_image(8, 10, 3, 2);
    const Image out = apply_trigger(img, SolidSquare{3, {10, 20, 30}});
    CHECK(out.at(7, 9, 0) == 10);
    CHECK(out.at(5, 7, 2) == 30);
    CHECK(out.at(4, 9, 1) == img.at(4, 9, 1));

    const Image gray = apply_trigger(Image(6, 6, 1), SolidSquare{2, {30, 60, 90}});
    CHECK(gray.at(5, 5, 0) == 60);

    CHECK_THROWS_AS(static_cast<void>(apply_trigger(img, SolidSquare{9, {}})), InvalidArgument);
    CHECK_THROWS_AS(static_cast<void>(apply_trigger(img, SolidSquare{0, {}})), InvalidArgument);
}

TEST_CASE("square trigger is idempotent")
{
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        const int h = 4 + static_cast<int>(rng.below(30));
        const int w = 4 + static_cast<int>(rng.below(30));
        const SolidSquare sq{1 + static_cast<int>(rng.below(4)),
                             {static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
                              static_cast<std::uint8_t>(rng.below(256))}};
        const Image img = oracle::random_image(h, w, 3, seed);
        const Image once = apply_trigger(img, sq);
        CHECK(apply_trigger(once, sq) == once);
    }
}

TEST_CASE("watermark blends with round((1 - alpha) * img + alpha * mask)")
{
    const Image img = oracle::random_image(16, 16, 3, 3);
    const Image mask = oracle::random_image(16, 16, 3, 4);
    const Image out = apply_trigger(img, Watermark{mask, 0.2});
    for (std::size_t i = 0; i < img.data().size(); ++i)
        CHECK(out.data()[i] == oracle::round_pixel(0.8 * img.data()[i] + 0.2 * mask.data()[i]));

    CHECK(apply_trigger(img, Watermark{mask, 1e-6}) == img);
    CHECK(apply_trigger(img, Watermark{mask, 1.0}) == mask);
    CHECK_THROWS_AS(static_cast<void>(apply_trigger(img, Watermark{mask, 0.0})), InvalidArgument);
    CHECK_THROWS_AS(static_cast<void>(apply_trigger(img, Watermark{mask, 1.5})), InvalidArgument);
    CHECK_THROWS_AS(static_cast<void>(apply_trigger(img, Watermark{Image(8, 8, 3), 0.2})), InvalidArgument);
}

TEST_CASE("watermark mask is a seeded binary text-like tile")
{
    const Image a = watermark_mask(kDims, 1);
    CHECK(a == watermark_mask(kDims, 1));
    CHECK_FALSE(a == watermark_mask(kDims, 2));
    std::size_t lit = 0;
    for (auto v : a.data()) {
        CHECK((v == 0 || v == 255));
        lit += v == 255;
    }
    CHECK(lit > a.data().size() / 10);
    CHECK(lit < a.data().size() * 9 / 10);
}

TEST_CASE("perturbation: zero pattern is the identity, values add and clamp")
{
    const Image img = oracle::random_image(8, 8, 3, 5);
    Perturbation zero{img.dims(), std::vector<double>(img.dims().size(), 0.0), Norm::L2, 1.0};
    CHECK(apply_trigger(img, zero) == img);

    Perturbation p{img.dims(), std::vector<double>(img.dims().size()), Norm::L2, 1e6};
    Rng rng(6);
    for (double& v : p.pattern)
        v = rng.uniform(-300.0, 300.0);
    const Image out = apply_trigger(img, p);
    for (std::size_t i = 0; i < img.data().size(); ++i)
        CHECK(out.data()[i] == oracle::round_pixel(img.data()[i] + p.pattern[i]));
}

TEST_CASE("perturbation validation rejects over-budget and misshaped patterns")
{
    Perturbation p{{4, 4, 1}, std::vector<double>(16, 1.0), Norm::L2, 3.9};
    CHECK_THROWS_AS(validate(TriggerSpec{p}, {4, 4, 1}), InvalidArgument);
    p.budget = 4.0;
    CHECK_NOTHROW(validate(TriggerSpec{p}, {4, 4, 1}));
    CHECK_THROWS_AS(validate(TriggerSpec{p}, {4, 4, 3}), InvalidArgument);
    p.norm = Norm::L0;
    CHECK_THROWS_AS(validate(TriggerSpec{p}, {4, 4, 1}), InvalidArgument);
    p.budget = 16.0;
    CHECK_NOTHROW(validate(TriggerSpec{p}, {4, 4, 1}));
}

TEST_CASE("random L2 trigger lies on the budget sphere")
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const double budget = 1.0 + static_cast<double>(seed) * 37.0;
        const Perturbation p = make_perturbation_trigger(Norm::L2, budget, kDims, rng);
        CHECK(l2_norm(p) <= budget);
        CHECK(l2_norm(p) == doctest::Approx(budget).epsilon(1e-9));
        CHECK_NOTHROW(validate(TriggerSpec{p}, kDims));
    }
}

TEST_CASE("random L0 trigger keeps at most budget positions in the bottom-right region")
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const Perturbation p = make_perturbation_trigger(Norm::L0, 24.0, kDims, rng);
        CHECK(l0_norm(p) <= 24);
        CHECK(l0_norm(p) == 24);
        // Region side: max(4, ceil(2 * sqrt(24))) = 10.
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                if (y < 22 || x < 22)
                    for (int c = 0; c < 3; ++c)
                        CHECK(p.pattern[static_cast<std::size_t>((y * 32 + x) * 3 + c)] == 0.0);
    }
    Rng rng(1);
    const Perturbation tiny = make_perturbation_trigger(Norm::L0, 2.5, {3, 3, 1}, rng);
    CHECK(l0_norm(tiny) == 2);
}

TEST_CASE("perturbation generation is seeded and rejects bad budgets")
{
    Rng a(9);
    Rng b(9);
    CHECK(make_perturbation_trigger(Norm::L2, 50.0, kDims, a).pattern ==
          make_perturbation_trigger(Norm::L2, 50.0, kDims, b).pattern);
    Rng rng(1);
    CHECK_THROWS_AS(static_cast<void>(make_perturbation_trigger(Norm::L2, 0.0, kDims, rng)), InvalidArgument);
    CHECK_THROWS_AS(static_cast<void>(make_perturbation_trigger(Norm::L0, -4.0, kDims, rng)), InvalidArgument);
}

TEST_CASE("gradient trigger: budget, determinism and target-loss descent")
{
    const Dims d{12, 12, 3};
    const TinyClassifier model = TinyClassifier::initialized(d, 32, 16, 4, 7);
    std::vector<Image> batch;
    for (std::uint64_t i = 0; i < 16; ++i)
        batch.push_back(oracle::random_image(12, 12, 3, 100 + i));
    const std::vector<int> target(batch.size(), 2);
    const auto target_loss = [&](const Perturbation& p) {
        std::vector<Image> patched;
        for (const auto& img : batch)
            patched.push_back(apply_trigger(img, p));
        return model.loss(patched, target);
    };

    for (Norm norm : {Norm::L2, Norm::L0}) {
        const double budget = norm == Norm::L2 ? 300.0 : 12.0;
        Rng start_rng(4);
        const Perturbation start = make_perturbation_trigger(norm, budget, d, start_rng);
        Rng rng(4);
        const Perturbation p = make_gradient_perturbation_trigger(norm, budget, model, batch, 2, rng, {20, 30.0});
        Rng again(4);
        CHECK(p.pattern == make_gradient_perturbation_trigger(norm, budget, model, batch, 2, again, {20, 30.0}).pattern);
        CHECK_NOTHROW(validate(TriggerSpec{p}, d));
        if (norm == Norm::L2)
            CHECK(l2_norm(p) <= budget);
        else
            CHECK(l0_norm(p) <= 12);
        CHECK(target_loss(p) < target_loss(start));
    }

    Rng rng(1);
    CHECK_THROWS_AS(static_cast<void>(make_gradient_perturbation_trigger(Norm::L2, 10.0, model, {}, 0, rng)),
                    InvalidArgument);
    CHECK_THROWS_AS(static_cast<void>(make_gradient_perturbation_trigger(Norm::L2, 10.0, model, batch, 4, rng)),
                    InvalidArgument);
    CHECK_THROWS_AS(
        static_cast<void>(make_gradient_perturbation_trigger(Norm::L2, 10.0, model, batch, 0, rng, {0, 1.0})),
        InvalidArgument);
}

TEST_CASE("gradient trigger beats the random trigger after poisoning at equal budget")
{
    // Paired experiment: same budget, same starting draw, same poison indices.
    const LabeledDataset train_set = gen_shapes_dataset(1000, 10, kDims, 1);
    const LabeledDataset test_set = gen_shapes_dataset(500, 10, kDims, 2);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.seed = 3;
    const TinyClassifier clean = train(train_set, cfg);
    const std::vector<Image> batch(train_set.images.begin(), train_set.images.begin() + 200);

    struct Case {
        Norm norm;
        double budget;
        std::uint64_t seed;
    };
    const double l2_budget = 5.0 * std::sqrt(static_cast<double>(kDims.size()));
    for (const Case c : {Case{Norm::L2, l2_budget, 1}, Case{Norm::L2, l2_budget, 2}, Case{Norm::L0, 12.0, 1},
                         Case{Norm::L0, 12.0, 2}}) {
        Rng random_rng(c.seed * 11);
        Rng gradient_rng(c.seed * 11);
        const Perturbation random_trigger = make_perturbation_trigger(c.norm, c.budget, kDims, random_rng);
        const Perturbation gradient_trigger =
            make_gradient_perturbation_trigger(c.norm, c.budget, clean, batch, 3, gradient_rng);
        double asr[2] = {0.0, 0.0};
        for (int k = 0; k < 2; ++k) {
            const AttackInstance inst{"invisible", k == 0 ? TriggerSpec{random_trigger} : TriggerSpec{gradient_trigger},
                                      LabelMap::single(3), 0.05, Role::Search};
            Rng poison_rng(c.seed + 5);
            const PoisonResult p = poison_dataset(train_set, inst, poison_rng);
            asr[k] = attack_success_rate(train(p.dataset, cfg), test_set, inst);
        }
        CAPTURE(to_string(c.norm));
        CAPTURE(c.seed);
        CAPTURE(asr[0]);
        CAPTURE(asr[1]);
        CHECK(asr[1] > asr[0]);
    }
}

// ---------------------------------------------------------------------------
// Label maps and poisoning
// ---------------------------------------------------------------------------

TEST_CASE("label maps")
{
    CHECK(LabelMap::all_to_all().desired(3, 10) == 4);
    CHECK(LabelMap::all_to_all().desired(9, 10) == 0);
    CHECK(LabelMap::single(7).desired(2, 10) == 7);
    CHECK(LabelMap::single(7).desired(7, 10) == 7);
    CHECK_THROWS_AS(static_cast<void>(LabelMap::all_to_all().desired(10, 10)), InvalidArgument);
}

TEST_CASE("poisoning selects floor(ratio * N) distinct samples")
{
    const LabeledDataset ds = random_dataset(1000, 10, {8, 8, 3}, 1);
    Rng rng(5);
    const PoisonResult r = poison_dataset(ds, white_square(LabelMap::single(2)), rng);
    REQUIRE(r.indices.size() == 100);
    CHECK(std::is_sorted(r.indices.begin(), r.indices.end()));
    CHECK(std::set<std::size_t>(r.indices.begin(), r.indices.end()).size() == 100);
    CHECK(r.dataset.size() == ds.size());
    CHECK(r.dataset.num_classes == ds.num_classes);

    std::size_t poisoned_target_class = 0;
    std::size_t changed_labels = 0;
    const std::set<std::size_t> chosen(r.indices.begin(), r.indices.end());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        changed_labels += r.dataset.labels[i] != ds.labels[i];
        if (chosen.count(i)) {
            CHECK(r.dataset.images[i] == apply_trigger(ds.images[i], SolidSquare{}));
            CHECK(r.dataset.labels[i] == 2);
            poisoned_target_class += ds.labels[i] == 2;
        } else {
            CHECK(r.dataset.images[i] == ds.images[i]);
            CHECK(r.dataset.labels[i] == ds.labels[i]);
        }
    }
    CHECK(r.unchanged_labels == poisoned_target_class);
    CHECK(changed_labels == 100 - r.unchanged_labels);
}

TEST_CASE("poisoning: all-to-all relabels i to i + 1")
{
    const LabeledDataset ds = random_dataset(200, 10, {6, 6, 3}, 2);
    Rng rng(3);
    const PoisonResult r = poison_dataset(ds, white_square(LabelMap::all_to_all()), rng);
    CHECK(r.unchanged_labels == 0);
    for (std::size_t i : r.indices)
        CHECK(r.dataset.labels[i] == (ds.labels[i] + 1) % 10);
}

TEST_CASE("poisoning is deterministic per seed")
{
    const LabeledDataset ds = random_dataset(300, 5, {6, 6, 3}, 3);
    const AttackInstance inst = white_square(LabelMap::single(1));
    Rng a(11);
    Rng b(11);
    Rng c(12);
    const PoisonResult ra = poison_dataset(ds, inst, a);
    const PoisonResult rb = poison_dataset(ds, inst, b);
    CHECK(ra.indices == rb.indices);
    CHECK(ra.dataset.images == rb.dataset.images);
    CHECK(ra.dataset.labels == rb.dataset.labels);
    CHECK(ra.indices != poison_dataset(ds, inst, c).indices);
}

TEST_CASE("poisoning rejects empty selections and bad instances")
{
    const LabeledDataset ds = random_dataset(50, 5, {6, 6, 3}, 4);
    Rng rng(1);
    CHECK_THROWS_AS(static_cast<void>(poison_dataset(ds, white_square(LabelMap::single(1), 0.01), rng)),
                    InvalidArgument);
    CHECK_THROWS_AS(static_cast<void>(poison_dataset(ds, white_square(LabelMap::single(1), 1.0), rng)),
                    InvalidArgument);
    CHECK_THROWS_AS(static_cast<void>(poison_dataset(ds, white_square(LabelMap::single(5)), rng)), InvalidArgument);
    AttackInstance huge = white_square(LabelMap::single(0));
    huge.trigger = SolidSquare{7, {}};
    CHECK_THROWS_AS(static_cast<void>(poison_dataset(ds, huge, rng)), InvalidArgument);
}

TEST_CASE("triggered sets drop target-class samples for single-target maps only")
{
    const LabeledDataset ds = random_dataset(100, 10, {6, 6, 3}, 5);
    const TriggeredSet single = make_triggered_set(ds, white_square(LabelMap::single(4)));
    CHECK(single.size() == 90);
    for (std::size_t i = 0; i < single.size(); ++i) {
        CHECK(single.true_labels[i] != 4);
        CHECK(single.desired_labels[i] == 4);
        CHECK(single.images[i] == apply_trigger(ds.images[single.source_indices[i]], SolidSquare{}));
    }
    const TriggeredSet all = make_triggered_set(ds, white_square(LabelMap::all_to_all()));
    CHECK(all.size() == 100);
    for (std::size_t i = 0; i < all.size(); ++i)
        CHECK(all.desired_labels[i] == (all.true_labels[i] + 1) % 10);
}

// ---------------------------------------------------------------------------
// Attack database
// ---------------------------------------------------------------------------

TEST_CASE("attack database mirrors the eight-attack table")
{
    const auto db = attack_db_default(kDims, 10);
    REQUIRE(db.size() == 8);
    std::set<std::string> names;
    std::vector<std::string> search;
    for (const auto& a : db) {
        CHECK(names.insert(a.name).second);
        CHECK_NOTHROW(a.validate(kDims, 10));
        const bool invisible = std::holds_alternative<Perturbation>(a.trigger);
        CHECK(a.poison_ratio == (invisible ? 0.05 : 0.10));
        if (a.role == Role::Search)
            search.push_back(a.name);
    }
    CHECK(search == std::vector<std::string>{"trojan-wm-b", "invisible-l2", "invisible-l0"});
    CHECK(std::count_if(db.begin(), db.end(), [](const auto& a) { return a.role == Role::Validation; }) == 5);

    const auto& badnets = *std::find_if(db.begin(), db.end(), [](const auto& a) { return a.name == "badnets-single"; });
    CHECK(std::get<SolidSquare>(badnets.trigger).size == 5);
    CHECK(std::get<SolidSquare>(badnets.trigger).color == std::array<std::uint8_t, 3>{255, 255, 255});
    const auto& a2a =
        *std::find_if(db.begin(), db.end(), [](const auto& a) { return a.name == "badnets-all-to-all"; });
    CHECK(a2a.labels.mode == LabelMap::Mode::AllToAll);
    const auto& l0 = *std::find_if(db.begin(), db.end(), [](const auto& a) { return a.name == "invisible-l0"; });
    CHECK(l0_norm(std::get<Perturbation>(l0.trigger)) <= 24);

    const auto again = attack_db_default(kDims, 10);
    for (std::size_t i = 0; i < db.size(); ++i) {
        const Image img = oracle::random_image(32, 32, 3, i);
        CHECK(apply_trigger(img, db[i].trigger) == apply_trigger(img, again[i].trigger));
    }
}

TEST_CASE("attack database adapts to other shapes and class counts")
{
    for (const Dims d : {Dims{16, 16, 1}, Dims{24, 20, 3}, Dims{4, 4, 3}}) {
        for (int k : {2, 3, 43}) {
            const auto db = attack_db_default(d, k);
            CHECK(db.size() == 8);
            for (const auto& a : db)
                CHECK_NOTHROW(a.validate(d, k));
        }
    }
    CHECK_THROWS_AS(static_cast<void>(attack_db_default(kDims, 1)), InvalidArgument);
}
