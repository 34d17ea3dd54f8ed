#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sweepkit/attacks.hpp"
#include "sweepkit/augment.hpp"
#include "sweepkit/dataset.hpp"
#include "sweepkit/metrics.hpp"
#include "sweepkit/model.hpp"

namespace sweepkit {

struct SweepConfig {
    double eps_acc = 0.7;
    double eps_asr = 0.01;
    int n = 6;
    std::size_t eval_samples = 200;
    std::size_t finetune_samples = 10000;
    int finetune_epochs = 5;
    AdadeltaConfig optimizer;
    int batch_size = 32;
    std::uint64_t seed = 0;

    /// Throws ConfigError.
    void validate(std::size_t registry_size) const;
};

/// min(10000, floor(0.8 * clean_pool)).
std::size_t desk_finetune_samples(std::size_t clean_pool);

/// One attack of the search or validation set as the sweep sees it: an
/// infected model with its clean and triggered evaluation samples.
class AttackEvaluator {
public:
    virtual ~AttackEvaluator() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    /// ACC over the clean evaluation samples; nullptr means no preprocessing.
    [[nodiscard]] virtual double acc(const Policy* preprocess) const = 0;
    /// ASR over the triggered evaluation samples; nullptr means no preprocessing.
    [[nodiscard]] virtual double asr(const Policy* preprocess) const = 0;
    /// The same attack with its model fine-tuned on `finetune_set`. This object is unchanged.
    [[nodiscard]] virtual std::unique_ptr<AttackEvaluator> fine_tuned(const LabeledDataset& finetune_set,
                                                                      const SweepConfig& cfg) const = 0;
};

using EvaluatorList = std::vector<std::unique_ptr<AttackEvaluator>>;

/// AttackEvaluator backed by a TinyClassifier. Stochastic preprocessing uses
/// sample_seed(eval_seed, i) per evaluation sample.
class ModelEvaluator final : public AttackEvaluator {
public:
    ModelEvaluator(std::string name, TinyClassifier model, LabeledDataset clean, TriggeredSet triggered,
                   std::shared_ptr<const Registry> registry, std::uint64_t eval_seed);

    [[nodiscard]] std::string name() const override { return name_; }
    [[nodiscard]] double acc(const Policy* preprocess) const override;
    [[nodiscard]] double asr(const Policy* preprocess) const override;
    [[nodiscard]] std::unique_ptr<AttackEvaluator> fine_tuned(const LabeledDataset& finetune_set,
                                                              const SweepConfig& cfg) const override;

    [[nodiscard]] const TinyClassifier& model() const { return model_; }
    [[nodiscard]] EvalReport report(const Policy* preprocess) const;

private:
    std::string name_;
    TinyClassifier model_;
    LabeledDataset clean_;
    TriggeredSet triggered_;
    std::shared_ptr<const Registry> registry_;
    std::uint64_t eval_seed_;
};

struct ShortlistEntry {
    std::string id;
    std::vector<double> acc; ///< per search attack
    std::vector<double> asr; ///< per search attack
    double avg_asr = 0.0;
};

struct Shortlist {
    std::vector<std::string> attacks;
    /// No transform, measured the same way.
    ShortlistEntry baseline;
    /// Functions with acc > eps_acc on every attack, ascending by avg_asr,
    /// ties in registry order.
    std::vector<ShortlistEntry> entries;
};

/// Step 1: evaluates every registry function as a single-step policy on the
/// original infected models.
Shortlist shortlist(const Registry& registry, const EvaluatorList& search, const SweepConfig& cfg);

struct PfSelection {
    Policy policy;
    /// Fewer than n functions were shortlisted; policy holds all of them.
    bool deficient = false;
};

/// Top-n shortlisted functions in canonical order.
PfSelection build_pf(const Registry& registry, const Shortlist& s, int n);

/// Draws min(cfg.finetune_samples, pool size) samples of the clean pool and
/// transforms each with P_f under derive_seed(cfg.seed, "finetune-transform", i).
LabeledDataset make_finetune_set(const Registry& registry, const LabeledDataset& clean_pool, const Policy& pf,
                                 const SweepConfig& cfg);

EvaluatorList finetune_per_attack(const EvaluatorList& attacks, const LabeledDataset& finetune_set,
                                  const SweepConfig& cfg);

struct SubsetScore {
    std::uint32_t mask = 0; ///< bit i set: step i of P_f is included
    Policy policy;
    std::vector<double> asr; ///< per attack
    double mean_asr = 0.0;
    bool qualified = false;
};

struct PiSelection {
    double avg_base = 0.0;
    /// All 2^n - 1 non-empty subsets in increasing mask order.
    std::vector<SubsetScore> candidates;
    Policy policy;
    /// No subset qualified; policy is P_f.
    bool fallback = false;
};

/// avg_base is the mean ASR of the fine-tuned models under P_f. A subset
/// qualifies when avg_base - mean > eps_asr; the qualified subset with the
/// smallest mean wins, ties to the smaller mask.
PiSelection select_pi(const Policy& pf, const EvaluatorList& finetuned, const SweepConfig& cfg);

struct AccAsr {
    double acc = 0.0;
    double asr = 0.0;
};

/// ACC/ASR of one attack under the strategies compared in the result tables.
struct StrategyRow {
    std::string attack;
    AccAsr baseline;     ///< original model, no preprocessing
    AccAsr pf_pi;        ///< fine-tuned with P_f, P_i at inference
    AccAsr pf_inference; ///< original model, P_f at inference
    AccAsr pf_finetune;  ///< fine-tuned with P_f, no preprocessing
    AccAsr pf_pf;        ///< fine-tuned with P_f, P_f at inference
};

StrategyRow strategy_row(const AttackEvaluator& original, const AttackEvaluator& finetuned, const Policy& pf,
                         const Policy& pi);

/// Fine-tunes every validation attack with P_f and measures the strategies.
std::vector<StrategyRow> validate(const EvaluatorList& validation, const Policy& pf, const Policy& pi,
                                  const LabeledDataset& finetune_set, const SweepConfig& cfg);

struct SweepResult {
    SweepConfig config;
    Shortlist shortlist;
    PfSelection pf;
    PiSelection pi;
    std::vector<StrategyRow> search_rows;
    std::vector<StrategyRow> validation_rows;
};

/// The full search: shortlist, P_f, fine-tuning, P_i, then validation.
SweepResult run_sweep(const Registry& registry, const EvaluatorList& search, const EvaluatorList& validation,
                      const LabeledDataset& clean_pool, const SweepConfig& cfg);

std::string sweep_to_json(const SweepResult& r);
/// Throws FormatError.
SweepResult sweep_from_json(const std::string& text);

/// Aligned text tables: shortlist (function, average ASR, per-attack ASR/ACC),
/// search-set strategies and validation-set strategies.
std::string render_shortlist_table(const Shortlist& s, const Policy& pf);
std::string render_search_table(const std::vector<StrategyRow>& rows);
std::string render_validation_table(const std::vector<StrategyRow>& rows);

} // namespace sweepkit
