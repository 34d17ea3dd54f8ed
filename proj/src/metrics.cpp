#include "sweepkit/metrics.hpp"

#include <algorithm>

#include "sweepkit/error.hpp"
#include "sweepkit/parallel.hpp"
#include "sweepkit/rng.hpp"

namespace sweepkit {

std::uint64_t sample_seed(std::uint64_t seed, std::size_t i)
{
    return derive_seed(seed, "preprocess", i);
}

std::vector<int> predict_all(const Classifier& model, std::span<const Image> images, const CompiledPolicy* preprocess,
                             std::uint64_t seed)
{
    std::vector<Image> transformed;
    if (preprocess) {
        transformed.resize(images.size());
        parallel_for(images.size(),
                     [&](std::size_t i) { transformed[i] = preprocess->apply(images[i], sample_seed(seed, i)); });
        images = transformed;
    }
    constexpr std::size_t kChunk = 64;
    std::vector<int> out(images.size());
    parallel_for((images.size() + kChunk - 1) / kChunk, [&](std::size_t c) {
        const auto chunk = images.subspan(c * kChunk, std::min(kChunk, images.size() - c * kChunk));
        const auto pred = model.predict(chunk);
        std::copy(pred.begin(), pred.end(), out.begin() + static_cast<std::ptrdiff_t>(c * kChunk));
    });
    return out;
}

double EvalReport::acc() const
{
    return clean_total ? static_cast<double>(clean_correct) / static_cast<double>(clean_total) : 0.0;
}

double EvalReport::asr() const
{
    return triggered_total ? static_cast<double>(triggered_hits) / static_cast<double>(triggered_total) : 0.0;
}

double accuracy(const Classifier& model, const LabeledDataset& ds, const CompiledPolicy* preprocess, std::uint64_t seed)
{
    if (ds.empty())
        throw InvalidArgument("accuracy needs a non-empty dataset");
    const auto pred = predict_all(model, ds.images, preprocess, seed);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        ok += pred[i] == ds.labels[i];
    return static_cast<double>(ok) / static_cast<double>(ds.size());
}

double attack_success_rate(const Classifier& model, const TriggeredSet& triggered, const CompiledPolicy* preprocess,
                           std::uint64_t seed)
{
    if (triggered.empty())
        throw InvalidArgument("attack success rate needs at least one triggered sample");
    const auto pred = predict_all(model, triggered.images, preprocess, seed);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        hits += pred[i] == triggered.desired_labels[i];
    return static_cast<double>(hits) / static_cast<double>(triggered.size());
}

double attack_success_rate(const Classifier& model, const LabeledDataset& clean, const AttackInstance& inst,
                           const CompiledPolicy* preprocess, std::uint64_t seed)
{
    if (clean.empty())
        throw InvalidArgument("attack success rate needs a non-empty dataset");
    const TriggeredSet t = make_triggered_set(clean, inst);
    if (t.empty())
        throw InvalidArgument("every sample belongs to the target class; nothing to evaluate");
    return attack_success_rate(model, t, preprocess, seed);
}

EvalReport evaluate(const Classifier& model, const LabeledDataset& clean, const TriggeredSet& triggered,
                    const CompiledPolicy* preprocess, std::uint64_t seed)
{
    const auto k = static_cast<std::size_t>(model.num_classes());
    EvalReport r;
    r.confusion.assign(k, std::vector<std::size_t>(k, 0));
    const auto clean_pred = predict_all(model, clean.images, preprocess, seed);
    for (std::size_t i = 0; i < clean_pred.size(); ++i) {
        const auto truth = static_cast<std::size_t>(clean.labels[i]);
        const auto pred = static_cast<std::size_t>(clean_pred[i]);
        if (truth >= k)
            throw InvalidArgument("label outside the model's classes");
        ++r.confusion[truth][pred];
        r.clean_correct += truth == pred;
    }
    r.clean_total = clean_pred.size();
    const auto trig_pred = predict_all(model, triggered.images, preprocess, seed);
    for (std::size_t i = 0; i < trig_pred.size(); ++i)
        r.triggered_hits += trig_pred[i] == triggered.desired_labels[i];
    r.triggered_total = trig_pred.size();
    return r;
}

} // namespace sweepkit
