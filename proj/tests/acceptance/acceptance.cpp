// Acceptance checks: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when everything passes).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "sweepkit/error.hpp"
#include "sweepkit/formats.hpp"
#include "sweepkit/pipeline.hpp"

using namespace sweepkit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(double v, int digits = 3)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. Transform oracles
// ---------------------------------------------------------------------------

Outcome transform_oracles()
{
    Outcome o;
    for (double g : {0.6, 1.0, 2.6}) {
        const Lut lut = gamma_lut(g);
        int wrong = 0;
        for (int i = 0; i < 256; ++i)
            wrong += lut[static_cast<std::size_t>(i)] != oracle::gamma_value(i, g);
        o.require(wrong == 0, "gamma LUT at " + fmt(g, 1) + " has " + std::to_string(wrong) + " wrong entries");
    }
    int median_mismatch = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const Image img = oracle::random_image(16, 16, 3, 7000 + s);
        for (int k : {3, 5})
            median_mismatch += !(median_filter(img, k) == oracle::median(img, k));
    }
    o.require(median_mismatch == 0, std::to_string(median_mismatch) + " median mismatches");
    for (double dk : {0.0, -0.25, -0.5}) {
        const Image img = oracle::random_image(32, 32, 3, 11);
        o.require(optical_distortion_fixed(img, dk) == oracle::optical_distortion(img, dk),
                  "OD at delta_k " + fmt(dk, 2));
    }
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Image img = oracle::random_image(32, 32, 3, 9000 + s);
        Rng a(s);
        Rng b(s);
        o.require(rspa(img, RspaParams{1.0}, a) == img, "RSPA with sigma 1 is not the identity");
        o.require(sat(img, SatParams{0.0, 0.0, 0.0}, b) == img, "SAT with zero limits is not the identity");
    }
    if (o.pass)
        o.note("gamma 3x256, median 100 images, OD 3 values, RSPA/SAT identities exact");
    return o;
}

// ---------------------------------------------------------------------------
// 2. Determinism
// ---------------------------------------------------------------------------

RunConfig reduced_config(std::uint64_t seed)
{
    RunConfig cfg;
    cfg.seed = seed;
    cfg.dataset.train_size = 500;
    cfg.dataset.test_size = 300;
    cfg.dataset.clean_pool_size = 600;
    cfg.train.epochs = 3;
    cfg.sweep.eval_samples = 100;
    cfg.sweep.finetune_epochs = 2;
    return cfg;
}

void run_all_stages(const RunConfig& cfg, const fs::path& out)
{
    stages::gen_data(cfg, out);
    stages::poison(cfg, out);
    stages::train(cfg, out);
    stages::sweep(cfg, out);
    stages::defend(cfg, out);
    stages::eval(cfg, out);
    static_cast<void>(stages::report(out));
}

Outcome determinism()
{
    Outcome o;
    oracle::TempDir a("accept-det-a");
    oracle::TempDir b("accept-det-b");
    const RunConfig cfg = reduced_config(17);
    run_all_stages(cfg, a.path());
    run_all_stages(cfg, b.path());
    for (const char* f : {"report.json", "report.txt", "sweep.json", "model.swkm", "defended.swkm", "defended.json",
                          "poison.json", "data/train.bin", "data/poisoned.bin"}) {
        const bool same = read_file(a.path() / f) == read_file(b.path() / f);
        o.require(same, std::string(f) + " differs");
    }
    if (o.pass)
        o.note("all 8 attacks, every stage twice; report, sweep, model and defended files byte-identical");
    return o;
}

// ---------------------------------------------------------------------------
// 3. Numerics
// ---------------------------------------------------------------------------

Outcome numerics()
{
    Outcome o;
    double worst_grad = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Dims d{8, 8, 3};
        const TinyClassifier m = TinyClassifier::initialized(d, 32, 16, 10, seed);
        std::vector<Image> batch;
        std::vector<int> labels;
        for (std::size_t i = 0; i < 8; ++i) {
            batch.push_back(oracle::random_image(8, 8, 3, seed * 100 + i));
            labels.push_back(static_cast<int>((seed * 3 + i) % 10));
        }
        const GradCheckResult r = grad_check(m, batch, labels, 1e-4, seed);
        worst_grad = std::max(worst_grad, r.max_relative_error);
        o.require(r.passed, "grad_check seed " + std::to_string(seed));
    }
    const TinyClassifier m = TinyClassifier::initialized({32, 32, 3}, 256, 128, 10, 9);
    double worst_sum = 0.0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto p = m.probabilities(oracle::random_image(32, 32, 3, 50000 + s));
        double sum = 0.0;
        for (double v : p)
            sum += v;
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
    o.require(worst_sum <= 1e-9, "softmax row sum off by " + std::to_string(worst_sum));
    std::ostringstream s;
    s << "max grad rel err " << worst_grad << ", max |sum - 1| " << worst_sum;
    o.note(s.str());
    return o;
}

// ---------------------------------------------------------------------------
// 4. Learnability, 5. Defense efficacy
// ---------------------------------------------------------------------------

struct Trained {
    Datasets data;
    AttackInstance inst;
    TinyClassifier model;
};

Trained infected_model(const std::string& attack, std::uint64_t seed)
{
    RunConfig cfg;
    cfg.seed = seed;
    cfg.attack = attack;
    Datasets data = make_datasets(cfg);
    AttackInstance inst = find_attack(attack, data.train.dims(), data.train.num_classes);
    TinyClassifier model = train_for(cfg, poison_for(cfg, data.train, inst).dataset, attack);
    return {std::move(data), std::move(inst), std::move(model)};
}

Outcome learnability()
{
    Outcome o;
    const Trained t = infected_model("badnets-single", 21);
    o.require(t.data.train.size() == 2000 && t.data.train.num_classes == 10 && t.data.train.dims() == Dims{32, 32, 3},
              "unexpected training set shape");
    const auto* square = std::get_if<SolidSquare>(&t.inst.trigger);
    o.require(square && square->size == 5 && square->color == std::array<std::uint8_t, 3>{255, 255, 255} &&
                  t.inst.poison_ratio == 0.10,
              "attack is not a 10 % white 5x5 square");
    const double acc = accuracy(t.model, t.data.test);
    const double asr = attack_success_rate(t.model, t.data.test, t.inst);
    o.require(acc >= 0.80, "clean ACC " + fmt(acc) + " < 0.80");
    o.require(asr >= 0.90, "ASR " + fmt(asr) + " < 0.90");
    o.note("ACC " + fmt(acc) + ", ASR " + fmt(asr));
    return o;
}

Outcome defense_efficacy(const std::string& attack, std::uint64_t seed)
{
    Outcome o;
    const Trained t = infected_model(attack, seed);
    RunConfig cfg;
    cfg.seed = seed;
    const SweepConfig sc = effective_sweep_config(cfg, t.data.clean_pool.size());
    o.require(sc.finetune_epochs == 5, "fine-tune epochs");
    const Registry registry = registry_default();
    const DefendedModel dm = defend(registry, t.model, t.data.clean_pool, reference_pf(), reference_pi(), sc,
                                    {seed, config_digest(cfg), attack});
    const DefenseReport r = evaluate_defense(registry, t.model, dm, t.data.test, t.inst, derive_seed(seed, "eval"));
    const double drop = r.baseline.acc() - r.defended.acc();
    o.require(r.defended.asr() <= 0.30, "defended ASR " + fmt(r.defended.asr()) + " > 0.30");
    o.require(drop <= 0.15, "ACC drop " + fmt(drop) + " > 0.15");
    o.note("ACC " + fmt(r.baseline.acc()) + " -> " + fmt(r.defended.acc()) + ", ASR " + fmt(r.baseline.asr()) +
           " -> " + fmt(r.defended.asr()));
    return o;
}

Outcome defense_efficacy_both()
{
    Outcome o;
    for (const auto& [attack, seed] : {std::pair{"badnets-single", 31}, std::pair{"badnets-all-to-all", 32}}) {
        const auto start = std::chrono::steady_clock::now();
        const Outcome one = defense_efficacy(attack, static_cast<std::uint64_t>(seed));
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        o.pass = o.pass && one.pass;
        o.note(std::string(attack) + ": " + one.detail + ", " + fmt(secs, 1) + " s");
        o.require(secs < 600, std::string(attack) + " took longer than 600 s");
    }
    return o;
}

// ---------------------------------------------------------------------------
// 6. Algorithm 1 on mocks
// ---------------------------------------------------------------------------

Outcome algorithm_on_mocks()
{
    Outcome o;
    constexpr int kAttacks = 4;
    LabeledDataset pool;
    pool.num_classes = 2;
    for (int i = 0; i < 4; ++i) {
        pool.images.push_back(Image(4, 4, 3));
        pool.labels.push_back(i % 2);
    }
    int worlds = 0;
    int fallbacks = 0;
    int mismatches = 0;
    for (bool flat : {false, true})
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            const oracle::MockWorld world{seed, flat};
            const int n = 1 + static_cast<int>(seed % 6);
            const Registry registry = oracle::mock_registry(24);
            SweepConfig cfg;
            cfg.n = n;
            cfg.eps_acc = 0.55;
            cfg.finetune_samples = 4;
            const auto shared = std::make_shared<const oracle::MockWorld>(world);
            const EvaluatorList search = oracle::mock_evaluators(shared, kAttacks);
            const auto want = oracle::brute_force(world, registry, kAttacks, cfg.eps_acc, cfg.eps_asr, n);

            const Shortlist s = shortlist(registry, search, cfg);
            std::vector<std::string> ids;
            bool same = s.entries.size() == want.shortlist.size();
            for (std::size_t i = 0; same && i < s.entries.size(); ++i)
                same = s.entries[i].id == want.shortlist[i] && s.entries[i].avg_asr == want.shortlist_avg[i];
            const PfSelection pf = build_pf(registry, s, n);
            same = same && pf.policy.ids() == want.pf && pf.deficient == want.deficient;
            if (same && !want.pf.empty()) {
                const PiSelection pi = select_pi(pf.policy, finetune_per_attack(search, pool, cfg), cfg);
                same = pi.avg_base == want.avg_base && pi.candidates.size() == want.subset_mean.size() &&
                       pi.policy.ids() == want.pi && pi.fallback == want.fallback;
                for (std::size_t m = 0; same && m < pi.candidates.size(); ++m)
                    same = pi.candidates[m].mean_asr == want.subset_mean[m] &&
                           pi.candidates[m].qualified == want.subset_qualified[m];
                fallbacks += pi.fallback;
            }
            ++worlds;
            mismatches += !same;
        }
    o.require(mismatches == 0, std::to_string(mismatches) + " of " + std::to_string(worlds) + " worlds differ");
    o.require(fallbacks > 0, "no world exercised the empty qualified-set fallback");
    o.note(std::to_string(worlds) + " mock worlds, " + std::to_string(fallbacks) + " fallbacks");
    return o;
}

// ---------------------------------------------------------------------------
// 7. Structural fidelity
// ---------------------------------------------------------------------------

std::vector<std::string> lines_of(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);)
        out.push_back(line);
    return out;
}

std::size_t numbers_in(const std::string& line)
{
    std::istringstream in(line);
    std::size_t count = 0;
    for (std::string tok; in >> tok;) {
        char* end = nullptr;
        std::strtod(tok.c_str(), &end);
        count += !tok.empty() && end == tok.c_str() + tok.size();
    }
    return count;
}

Outcome structural()
{
    Outcome o;
    oracle::TempDir dir("accept-struct");
    RunConfig cfg;
    cfg.seed = 1;
    stages::gen_data(cfg, dir.path());
    stages::sweep(cfg, dir.path());
    const auto doc = nlohmann::json::parse(read_text(dir.path() / "sweep.json"));
    const auto attacks = doc.at("shortlist").at("attacks").get<std::vector<std::string>>();
    o.require(attacks == std::vector<std::string>{"trojan-wm-b", "invisible-l2", "invisible-l0"},
              "search set is not the desk search attacks");

    const auto shortlist = lines_of(read_text(dir.path() / "shortlist.txt"));
    const std::size_t entries = doc.at("shortlist").at("entries").size();
    o.require(shortlist.size() >= 3 + entries + 1, "shortlist table too short");
    if (shortlist.size() >= 3) {
        o.require(shortlist[0].find("Function") == 0 && shortlist[0].find("Average ASR") != std::string::npos,
                  "shortlist header");
        std::size_t pos = 0;
        for (const auto& a : attacks) {
            const auto at = shortlist[0].find(a, pos);
            o.require(at != std::string::npos, "shortlist column for " + a);
            pos = at == std::string::npos ? pos : at;
        }
        std::size_t asr = 0;
        std::size_t acc = 0;
        for (std::size_t at = shortlist[1].find("ASR"); at != std::string::npos; at = shortlist[1].find("ASR", at + 1))
            ++asr;
        for (std::size_t at = shortlist[1].find("ACC"); at != std::string::npos; at = shortlist[1].find("ACC", at + 1))
            ++acc;
        o.require(asr == attacks.size() && acc == attacks.size(), "per-attack ASR/ACC sub-header");
        for (std::size_t i = 3; i < 3 + 1 + entries && i < shortlist.size(); ++i)
            o.require(numbers_in(shortlist[i]) == 1 + 2 * attacks.size(), "shortlist row " + std::to_string(i));
    }

    const std::string tables = read_text(dir.path() / "sweep_tables.txt");
    const auto at_validation = tables.find("Validation set");
    o.require(at_validation != std::string::npos, "validation section");
    if (at_validation != std::string::npos) {
        const auto v = lines_of(tables.substr(at_validation));
        o.require(v.size() >= 4 && v[1].find("Attack") == 0 && v[1].find("Baseline") != std::string::npos &&
                      v[1].find("P_f tune + P_i infer") != std::string::npos &&
                      v[1].find("P_f tune + P_f infer") != std::string::npos,
                  "validation header");
        const auto rows = doc.at("validation");
        o.require(rows.size() == 5, "five validation attacks");
        for (std::size_t i = 0; i < rows.size() && 4 + i < v.size(); ++i) {
            o.require(v[4 + i].find(rows[i].at("attack").get<std::string>()) == 0, "validation row order");
            o.require(numbers_in(v[4 + i]) == 6, "validation row has ACC/ASR for three strategies");
        }
    }

    int subset_ok = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const RunConfig c = reduced_config(seed);
        auto registry = std::make_shared<const Registry>(registry_default());
        const SweepResult r = sweep_attack_db(c, make_datasets(c), registry);
        const auto pf = r.pf.policy.ids();
        bool subset = !r.pi.policy.empty();
        for (const auto& id : r.pi.policy.ids())
            subset = subset && std::find(pf.begin(), pf.end(), id) != pf.end();
        subset_ok += subset;
    }
    o.require(subset_ok == 10, "P_i within P_f on " + std::to_string(subset_ok) + "/10 seeds");
    const auto ids = [](const nlohmann::json& policy) {
        std::string out;
        for (const auto& step : policy.at("steps"))
            out += (out.empty() ? "" : ",") + step.at("id").get<std::string>();
        return out;
    };
    o.note("desk sweep P_f = " + ids(doc.at("pf")) + ", P_i = " + ids(doc.at("pi")) +
           (doc.at("pi_fallback").get<bool>() ? " (fallback)" : "") + "; P_i within P_f on " +
           std::to_string(subset_ok) + "/10 seeds");
    return o;
}

// ---------------------------------------------------------------------------
// 8. Formats
// ---------------------------------------------------------------------------

template <class F>
bool throws_format_error(F&& f)
{
    try {
        f();
    } catch (const FormatError&) {
        return true;
    } catch (...) {
        return false;
    }
    return false;
}

Outcome formats()
{
    Outcome o;
    oracle::TempDir dir("accept-formats");
    std::vector<std::uint8_t> bytes(20 * kCifarRecordSize);
    Rng rng(3);
    for (std::size_t i = 0; i < bytes.size(); ++i)
        bytes[i] = static_cast<std::uint8_t>(i % kCifarRecordSize == 0 ? rng.below(10) : rng.below(256));
    write_file(dir.path() / "in.bin", bytes);
    write_cifar10_binary(load_cifar10_binary(dir.path() / "in.bin"), dir.path() / "out.bin");
    o.require(read_file(dir.path() / "out.bin") == bytes, "CIFAR-10 round trip");
    o.require(throws_format_error([&] { static_cast<void>(parse_cifar10(std::span(bytes).first(bytes.size() - 7))); }),
              "truncated CIFAR-10");
    auto bad = bytes;
    bad[kCifarRecordSize * 4] = 12;
    o.require(throws_format_error([&] { static_cast<void>(parse_cifar10(bad)); }), "CIFAR-10 label 12");

    const TinyClassifier m = TinyClassifier::initialized({32, 32, 3}, 64, 32, 10, 4);
    save_model(m, dir.path() / "a.swkm");
    save_model(load_model(dir.path() / "a.swkm"), dir.path() / "b.swkm");
    o.require(read_file(dir.path() / "a.swkm") == read_file(dir.path() / "b.swkm"), "model round trip");
    const auto model_bytes = read_file(dir.path() / "a.swkm");
    o.require(
        throws_format_error([&] { static_cast<void>(deserialize_model(std::span(model_bytes).first(1000))); }),
        "truncated model");
    if (o.pass)
        o.note("CIFAR-10 and model files byte-exact; truncation and bad labels rejected");
    return o;
}

} // namespace

int main()
{
    struct Criterion {
        const char* name;
        double limit_seconds;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {"transform oracles", 10, transform_oracles},
        {"determinism", 0, determinism},
        {"numerics", 0, numerics},
        {"learnability", 180, learnability},
        {"defense efficacy", 0, defense_efficacy_both},
        {"algorithm 1 on mocks", 5, algorithm_on_mocks},
        {"structural fidelity", 0, structural},
        {"formats", 0, formats},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.limit_seconds > 0)
            o.require(secs < c.limit_seconds, "took longer than " + fmt(c.limit_seconds, 0) + " s");
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.name << "  (" << o.detail << "; " << fmt(secs, 1)
                  << " s)" << std::endl;
    }
    return failed;
}
