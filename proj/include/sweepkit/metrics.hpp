#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sweepkit/attacks.hpp"
#include "sweepkit/augment.hpp"
#include "sweepkit/dataset.hpp"
#include "sweepkit/model.hpp"

namespace sweepkit {

/// Seed of the preprocessing draw for evaluation sample i:
/// derive_seed(seed, "preprocess", i).
std::uint64_t sample_seed(std::uint64_t seed, std::size_t i);

/// Predictions for every image, each optionally preprocessed with its own
/// sample_seed(). Runs in parallel; the result does not depend on the worker count.
std::vector<int> predict_all(const Classifier& model, std::span<const Image> images,
                             const CompiledPolicy* preprocess = nullptr, std::uint64_t seed = 0);

/// Exact counts behind one ACC/ASR measurement.
struct EvalReport {
    std::size_t clean_total = 0;
    std::size_t clean_correct = 0;
    std::size_t triggered_total = 0;
    std::size_t triggered_hits = 0;
    /// confusion[true][predicted] over the clean samples.
    std::vector<std::vector<std::size_t>> confusion;

    [[nodiscard]] double acc() const;
    [[nodiscard]] double asr() const;
};

/// Fraction of samples whose (optionally preprocessed) prediction equals the label.
double accuracy(const Classifier& model, const LabeledDataset& ds, const CompiledPolicy* preprocess = nullptr,
                std::uint64_t seed = 0);

/// Fraction of triggered samples predicted as the attacker's desired label.
double attack_success_rate(const Classifier& model, const TriggeredSet& triggered,
                           const CompiledPolicy* preprocess = nullptr, std::uint64_t seed = 0);
/// Builds the triggered set from clean samples first (single-target maps drop
/// samples of the target class). Throws InvalidArgument if nothing is left.
double attack_success_rate(const Classifier& model, const LabeledDataset& clean, const AttackInstance& inst,
                           const CompiledPolicy* preprocess = nullptr, std::uint64_t seed = 0);

/// ACC over `clean` and ASR over `triggered` with the same preprocessing and seed.
EvalReport evaluate(const Classifier& model, const LabeledDataset& clean, const TriggeredSet& triggered,
                    const CompiledPolicy* preprocess = nullptr, std::uint64_t seed = 0);

} // namespace sweepkit
