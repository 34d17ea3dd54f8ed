#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "sweepkit/dataset.hpp"
#include "sweepkit/image.hpp"

namespace sweepkit {

struct AdadeltaConfig {
    double rho = 0.95;
    double epsilon = 1e-6;
    double learning_rate = 0.05;
};

class TinyClassifier;

struct TrainConfig {
    AdadeltaConfig optimizer;
    int epochs = 30;
    int batch_size = 32;
    int hidden1 = 256;
    int hidden2 = 128;
    std::uint64_t seed = 0;
    /// Called after every epoch with the 1-based epoch number.
    std::function<void(int, const TinyClassifier&)> on_epoch;

    void validate() const;
};

/// Anything that maps an image to a class index. Implemented by
/// TinyClassifier and by test doubles.
class Classifier {
public:
    virtual ~Classifier() = default;
    [[nodiscard]] virtual int predict(const Image& img) const = 0;
    /// Defaults to predict() per image.
    [[nodiscard]] virtual std::vector<int> predict(std::span<const Image> images) const;
    [[nodiscard]] virtual int num_classes() const = 0;
};

/// flatten -> dense(hidden1) -> ReLU -> dense(hidden2) -> ReLU -> dense(K) -> softmax.
///
/// Inputs are pixel / 255. All parameters live in one flat buffer in the
/// order W1, b1, W2, b2, W3, b3, each weight matrix row-major (out x in).
class TinyClassifier final : public Classifier {
public:
    static constexpr std::uint32_t kFormatVersion = 1;

    /// All-zero parameters.
    TinyClassifier(Dims input, int hidden1, int hidden2, int num_classes);

    /// He-uniform weights (limit sqrt(6 / fan_in)), zero biases.
    static TinyClassifier initialized(Dims input, int hidden1, int hidden2, int num_classes, std::uint64_t seed);

    [[nodiscard]] Dims input_dims() const { return dims_; }
    [[nodiscard]] int input_size() const { return static_cast<int>(dims_.size()); }
    [[nodiscard]] int hidden1() const { return hidden1_; }
    [[nodiscard]] int hidden2() const { return hidden2_; }
    [[nodiscard]] int num_classes() const override { return classes_; }

    [[nodiscard]] std::vector<double> logits(const Image& img) const;
    [[nodiscard]] std::vector<double> probabilities(const Image& img) const;
    /// Logits for a batch, row i for images[i]. Bit-identical to logits() per
    /// image: every unit accumulates its inputs in a fixed order.
    [[nodiscard]] std::vector<std::vector<double>> logits(std::span<const Image> images) const;
    /// argmax of the softmax; ties go to the lowest class index.
    [[nodiscard]] int predict(const Image& img) const override;
    /// Same result as calling predict() per image.
    [[nodiscard]] std::vector<int> predict(std::span<const Image> images) const override;

    [[nodiscard]] std::span<const double> parameters() const { return params_; }
    std::span<double> parameters() { return params_; }

    /// Mean cross-entropy over the batch, and its gradient w.r.t. every parameter.
    double loss_and_gradient(std::span<const Image> images, std::span<const int> labels,
                             std::span<double> gradient) const;
    double loss(std::span<const Image> images, std::span<const int> labels) const;

    /// Gradient of the mean cross-entropy w.r.t. the input pixels (pixel units),
    /// for real-valued inputs given as image-shaped buffers in [0, 255].
    double loss_and_input_gradient(std::span<const std::vector<double>> inputs, std::span<const int> labels,
                                   std::vector<std::vector<double>>& input_gradients) const;

    friend bool operator==(const TinyClassifier& a, const TinyClassifier& b)
    {
        return a.dims_ == b.dims_ && a.hidden1_ == b.hidden1_ && a.hidden2_ == b.hidden2_ &&
               a.classes_ == b.classes_ && a.params_ == b.params_;
    }

private:
    void check_input(const Image& img) const;

    Dims dims_;
    int hidden1_;
    int hidden2_;
    int classes_;
    std::vector<double> params_;
};

/// Mini-batch cross-entropy training with Adadelta from a seeded initialization.
TinyClassifier train(const LabeledDataset& ds, const TrainConfig& cfg);

/// Continues training from m's weights with fresh optimizer state.
/// cfg.epochs is ignored in favor of `epochs`; hidden widths are taken from m.
TinyClassifier fine_tune(const TinyClassifier& m, const LabeledDataset& ds, int epochs, const TrainConfig& cfg = {});

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    bool passed = false;
};

/// Compares analytic gradients against central differences (step 1e-5) on a
/// seeded random subset of parameters. Relative error is
/// |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult grad_check(const TinyClassifier& m, std::span<const Image> images, std::span<const int> labels,
                           double tolerance, std::uint64_t seed, std::size_t per_tensor = 40);

/// Byte layout (little-endian):
///   "SWKM" | u32 version | u32 height, width, channels, hidden1, hidden2, classes | f64 parameters...
void save_model(const TinyClassifier& m, const std::filesystem::path& path);
TinyClassifier load_model(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_model(const TinyClassifier& m);
TinyClassifier deserialize_model(std::span<const std::uint8_t> bytes);

} // namespace sweepkit
