#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sweepkit/attacks.hpp"
#include "sweepkit/augment.hpp"
#include "sweepkit/dataset.hpp"
#include "sweepkit/metrics.hpp"
#include "sweepkit/model.hpp"
#include "sweepkit/sweep.hpp"

namespace sweepkit {

struct DatasetConfig {
    /// "shapes" (generated), "cifar10" (binary files) or "pnm" (directory + manifest).
    std::string source = "shapes";
    int num_classes = 10;
    Dims dims{32, 32, 3};
    std::size_t train_size = 2000;
    std::size_t test_size = 1000;
    /// Clean samples held by the defender for fine-tuning, separate from training data.
    std::size_t clean_pool_size = 12500;
    /// File sources only. Without a clean pool path the clean training set is used.
    std::string train_path;
    std::string test_path;
    std::string clean_pool_path;
};

/// Everything one run depends on. Every random draw derives from `seed`.
struct RunConfig {
    std::uint64_t seed = 1;
    DatasetConfig dataset;
    /// Attack of the default database used by poison / train / defend / eval.
    std::string attack = "badnets-single";
    /// Attack database entries used by the sweep; empty means all of them.
    std::vector<std::string> attacks;
    TrainConfig train = [] {
        TrainConfig t;
        t.epochs = 10;
        return t;
    }();
    /// `sweep.seed` is ignored; it derives from `seed`.
    SweepConfig sweep;
    /// Unset: min(10000, 80 % of the clean pool).
    std::optional<std::size_t> finetune_samples;
    /// Policies for defend; unset falls back to the sweep result, then to the reference policies.
    std::optional<Policy> pf;
    std::optional<Policy> pi;

    /// Throws ConfigError.
    void validate() const;
};

/// Canonical JSON, schema "sweepkit.run/v1". Keys are sorted, so equal configs
/// serialize identically.
std::string run_config_to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys, bad types and invalid values
/// throw ConfigError.
RunConfig run_config_from_json(const std::string& text);
/// 64-bit FNV-1a of the canonical JSON, as 16 lowercase hex digits.
std::string config_digest(const RunConfig& cfg);

/// The sweep settings actually used for a clean pool of `clean_pool` samples.
SweepConfig effective_sweep_config(const RunConfig& cfg, std::size_t clean_pool);

/// OD, RSPA, SAT, GCSM, GESM, DSSM.
Policy reference_pf();
/// SAT, GCSM, DSSM.
Policy reference_pi();

struct Datasets {
    LabeledDataset train;
    LabeledDataset test;
    LabeledDataset clean_pool;
};

/// Generates the shapes sets (seeds "data/train", "data/test", "data/pool") or
/// loads the configured files.
Datasets make_datasets(const RunConfig& cfg);

/// The configured database entries, in database order. Throws ConfigError
/// for unknown names.
std::vector<AttackInstance> selected_attacks(const RunConfig& cfg, Dims dims, int num_classes);
AttackInstance find_attack(const std::string& name, Dims dims, int num_classes);

/// Poisoning and training seeds derive from the attack name, so the sweep's
/// model for an attack equals the one built by poison + train.
PoisonResult poison_for(const RunConfig& cfg, const LabeledDataset& train, const AttackInstance& inst);
TinyClassifier train_for(const RunConfig& cfg, const LabeledDataset& poisoned, const std::string& attack_name);

using Logger = std::function<void(std::string_view)>;

/// Trains an infected model per attack and wraps it with eval_samples clean and
/// triggered test samples.
EvaluatorList build_evaluators(const RunConfig& cfg, const Datasets& data, std::shared_ptr<const Registry> registry,
                               const std::vector<AttackInstance>& attacks, const Logger& log = {});

/// Builds the search and validation evaluators from the configured attacks and runs the sweep.
SweepResult sweep_attack_db(const RunConfig& cfg, const Datasets& data, std::shared_ptr<const Registry> registry,
                            const Logger& log = {});

struct Provenance {
    std::uint64_t seed = 0;
    std::string config_digest;
    std::string attack;
};

/// A fine-tuned model bound to its mandatory inference preprocessing.
struct DefendedModel {
    TinyClassifier model;
    Policy pf;
    Policy pi;
    Provenance provenance;
};

/// Stage 1 fine-tunes the infected model on P_f-transformed clean samples for
/// cfg.finetune_epochs; stage 2 binds P_i. Throws InvalidArgument for empty policies.
DefendedModel defend(const Registry& registry, const TinyClassifier& infected, const LabeledDataset& clean,
                     const Policy& pf, const Policy& pi, const SweepConfig& cfg, Provenance provenance = {});

/// P_i with Rng(sample_seed), then the fine-tuned model.
int defended_predict(const DefendedModel& dm, const Image& img, std::uint64_t sample_seed,
                     const Registry& registry);

/// Writes <stem>.swkm and <stem>.json into dir.
void save_defended(const DefendedModel& dm, const std::filesystem::path& dir, const std::string& stem = "defended");
DefendedModel load_defended(const std::filesystem::path& dir, const std::string& stem = "defended");

/// Schema "sweepkit.report/v1".
struct DefenseReport {
    std::string attack;
    std::uint64_t seed = 0;
    std::string config_digest;
    Policy pf;
    Policy pi;
    /// Infected model, no preprocessing.
    EvalReport baseline;
    /// Defended model with P_i.
    EvalReport defended;
    StrategyRow strategies;
    std::optional<SweepResult> sweep;
};

/// Evaluates the infected and defended models on the test set and the
/// attack's triggered test samples with seed-derived preprocessing.
DefenseReport evaluate_defense(const Registry& registry, const TinyClassifier& infected, const DefendedModel& dm,
                               const LabeledDataset& test, const AttackInstance& inst, std::uint64_t eval_seed);

std::string report_to_json(const DefenseReport& r);
/// Throws FormatError.
DefenseReport report_from_json(const std::string& text);
/// Defense summary plus, when a sweep is attached, the shortlist, search and
/// validation tables.
std::string render_report(const DefenseReport& r);

/// File-level stages. All artifacts live under `out`:
///   data/{train,test,pool}[.bin]   gen-data
///   data/poisoned[.bin], poison.json   poison
///   model.swkm                     train
///   sweep.json, shortlist.txt, sweep_tables.txt   sweep
///   defended.swkm, defended.json   defend
///   report.json                    eval
///   report.txt                     report
/// Datasets are CIFAR-10 binary when they fit the format, PNM directories otherwise.
namespace stages {
void gen_data(const RunConfig& cfg, const std::filesystem::path& out, const Logger& log = {});
void poison(const RunConfig& cfg, const std::filesystem::path& out, const Logger& log = {});
void train(const RunConfig& cfg, const std::filesystem::path& out, const Logger& log = {});
void sweep(const RunConfig& cfg, const std::filesystem::path& out, const Logger& log = {});
void defend(const RunConfig& cfg, const std::filesystem::path& out, const Logger& log = {});
void eval(const RunConfig& cfg, const std::filesystem::path& out, const Logger& log = {});
/// Returns the rendered text, also written to report.txt.
std::string report(const std::filesystem::path& out);
} // namespace stages

} // namespace sweepkit
