#include "sweepkit/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "sweepkit/error.hpp"
#include "sweepkit/rng.hpp"

namespace sweepkit {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;
using ConstVecMap = Eigen::Map<const Vec>;

struct Layout {
    std::size_t w1, b1, w2, b2, w3, b3, total;
};

Layout layout_for(int d, int h1, int h2, int k)
{
    Layout l{};
    const auto D = static_cast<std::size_t>(d);
    const auto H1 = static_cast<std::size_t>(h1);
    const auto H2 = static_cast<std::size_t>(h2);
    const auto K = static_cast<std::size_t>(k);
    l.w1 = 0;
    l.b1 = l.w1 + H1 * D;
    l.w2 = l.b1 + H1;
    l.b2 = l.w2 + H2 * H1;
    l.w3 = l.b2 + H2;
    l.b3 = l.w3 + K * H2;
    l.total = l.b3 + K;
    return l;
}

struct Views {
    ConstRowMap w1, w2, w3;
    ConstVecMap b1, b2, b3;
};

Views views(std::span<const double> p, int d, int h1, int h2, int k)
{
    const Layout l = layout_for(d, h1, h2, k);
    return {ConstRowMap(p.data() + l.w1, h1, d), ConstRowMap(p.data() + l.w2, h2, h1),
            ConstRowMap(p.data() + l.w3, k, h2),  ConstVecMap(p.data() + l.b1, h1),
            ConstVecMap(p.data() + l.b2, h2),     ConstVecMap(p.data() + l.b3, k)};
}

// Stable log-softmax cross-entropy for one column; writes softmax into probs.
double cross_entropy(const Eigen::Ref<const Vec>& logits, int label, Eigen::Ref<Vec> probs)
{
    const double mx = logits.maxCoeff();
    probs = (logits.array() - mx).exp();
    const double sum = probs.sum();
    probs /= sum;
    return -(logits[label] - mx - std::log(sum));
}

// Row sums accumulated column by column in index order.
void row_sums(const Mat& m, double* out)
{
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        out[r] = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            out[r] += m(r, c);
}

struct BatchGrad {
    double loss;
    Mat input_grad; // d x B, w.r.t. scaled inputs
};

// Forward + backward over column-major inputs X (d x B, already scaled).
// Parameter gradient goes into `grad` when non-empty.
BatchGrad backprop(std::span<const double> params, int d, int h1, int h2, int k, const Mat& X,
                   std::span<const int> labels, std::span<double> grad, bool want_input_grad)
{
    const Views v = views(params, d, h1, h2, k);
    const auto B = X.cols();

    Mat z1 = v.w1 * X;
    z1.colwise() += v.b1;
    Mat a1 = z1.cwiseMax(0.0);
    Mat z2 = v.w2 * a1;
    z2.colwise() += v.b2;
    Mat a2 = z2.cwiseMax(0.0);
    Mat z3 = v.w3 * a2;
    z3.colwise() += v.b3;

    Mat dz3(k, B);
    double loss = 0.0;
    for (Eigen::Index j = 0; j < B; ++j) {
        const int y = labels[static_cast<std::size_t>(j)];
        Vec probs(k);
        loss += cross_entropy(z3.col(j), y, probs);
        probs[y] -= 1.0;
        dz3.col(j) = probs;
    }
    const double inv_b = 1.0 / static_cast<double>(B);
    loss *= inv_b;
    dz3 *= inv_b;

    Mat dz2 = (v.w3.transpose() * dz3).cwiseProduct((z2.array() > 0.0).cast<double>().matrix());
    Mat dz1 = (v.w2.transpose() * dz2).cwiseProduct((z1.array() > 0.0).cast<double>().matrix());

    if (!grad.empty()) {
        const Layout l = layout_for(d, h1, h2, k);
        RowMap(grad.data() + l.w3, k, h2).noalias() = dz3 * a2.transpose();
        row_sums(dz3, grad.data() + l.b3);
        RowMap(grad.data() + l.w2, h2, h1).noalias() = dz2 * a1.transpose();
        row_sums(dz2, grad.data() + l.b2);
        RowMap(grad.data() + l.w1, h1, d).noalias() = dz1 * X.transpose();
        row_sums(dz1, grad.data() + l.b1);
    }

    BatchGrad out{loss, {}};
    if (want_input_grad)
        out.input_grad = v.w1.transpose() * dz1;
    return out;
}

// Inference runs on column tiles of kTile samples laid out [tile][unit][kTile].
// Each output unit accumulates its inputs in index order through one code
// path, so a sample's result does not depend on its batch or tile position.
constexpr std::size_t kTile = 8;
constexpr std::size_t kRows = 4;
constexpr std::size_t kDepth = 256;
using Lane = Eigen::Matrix<double, kTile, 1>;
using LaneMap = Eigen::Map<Lane>;
using ConstLaneMap = Eigen::Map<const Lane>;

void dense_tiles(const double* w, const double* b, int n_out, int n_in, const std::vector<double>& x,
                 std::size_t tiles, std::vector<double>& out, bool relu)
{
    const auto O = static_cast<std::size_t>(n_out);
    const auto I = static_cast<std::size_t>(n_in);
    const std::size_t padded = (O + kRows - 1) / kRows * kRows;
    std::vector<double> w_pad;
    if (padded != O) {
        w_pad.assign(padded * I, 0.0);
        std::copy(w, w + O * I, w_pad.begin());
        w = w_pad.data();
    }
    std::vector<double> acc_buf(tiles * padded * kTile, 0.0);
    for (std::size_t k0 = 0; k0 < I; k0 += kDepth) {
        const std::size_t k1 = std::min(I, k0 + kDepth);
        for (std::size_t o0 = 0; o0 < padded; o0 += kRows) {
            const double* wr = w + o0 * I;
            for (std::size_t t = 0; t < tiles; ++t) {
                const double* xt = x.data() + t * I * kTile;
                double* ot = acc_buf.data() + (t * padded + o0) * kTile;
                LaneMap out0(ot), out1(ot + kTile), out2(ot + 2 * kTile), out3(ot + 3 * kTile);
                Lane a0 = out0, a1 = out1, a2 = out2, a3 = out3;
                for (std::size_t k = k0; k < k1; ++k) {
                    const ConstLaneMap xk(xt + k * kTile);
                    a0 += wr[k] * xk;
                    a1 += wr[I + k] * xk;
                    a2 += wr[2 * I + k] * xk;
                    a3 += wr[3 * I + k] * xk;
                }
                out0 = a0;
                out1 = a1;
                out2 = a2;
                out3 = a3;
            }
        }
    }
    out.assign(tiles * O * kTile, 0.0);
    for (std::size_t t = 0; t < tiles; ++t)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t j = 0; j < kTile; ++j) {
                const double v = acc_buf[(t * padded + o) * kTile + j] + b[o];
                out[(t * O + o) * kTile + j] = relu ? std::max(v, 0.0) : v;
            }
}

Mat stack_images(std::span<const Image> images, std::span<const std::size_t> order)
{
    const auto d = static_cast<Eigen::Index>(images.front().dims().size());
    Mat X(d, static_cast<Eigen::Index>(order.size()));
    for (std::size_t j = 0; j < order.size(); ++j) {
        const auto px = images[order[j]].data();
        for (Eigen::Index i = 0; i < d; ++i)
            X(i, static_cast<Eigen::Index>(j)) = px[static_cast<std::size_t>(i)] / 255.0;
    }
    return X;
}

struct AdadeltaState {
    std::vector<double> acc_grad;
    std::vector<double> acc_update;
};

void run_epochs(TinyClassifier& m, const LabeledDataset& ds, int epochs, const TrainConfig& cfg)
{
    const AdadeltaConfig& opt = cfg.optimizer;
    auto params = m.parameters();
    AdadeltaState state{std::vector<double>(params.size(), 0.0), std::vector<double>(params.size(), 0.0)};
    std::vector<double> grad(params.size(), 0.0);
    std::vector<std::size_t> order(ds.size());
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);

        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const Mat X = stack_images(ds.images, idx);
            std::vector<int> y(idx.size());
            for (std::size_t j = 0; j < idx.size(); ++j)
                y[j] = ds.labels[idx[j]];
            backprop(params, m.input_size(), m.hidden1(), m.hidden2(), m.num_classes(), X, y, grad, false);

            for (std::size_t p = 0; p < params.size(); ++p) {
                const double g = grad[p];
                double& ag = state.acc_grad[p];
                double& au = state.acc_update[p];
                ag = opt.rho * ag + (1.0 - opt.rho) * g * g;
                const double upd = std::sqrt(au + opt.epsilon) / std::sqrt(ag + opt.epsilon) * g;
                au = opt.rho * au + (1.0 - opt.rho) * upd * upd;
                params[p] -= opt.learning_rate * upd;
            }
        }
        if (cfg.on_epoch)
            cfg.on_epoch(epoch + 1, m);
    }
}

void check_dataset_for(const TinyClassifier& m, const LabeledDataset& ds)
{
    if (ds.empty())
        throw InvalidArgument("cannot train on an empty dataset");
    ds.validate();
    if (ds.dims() != m.input_dims())
        throw InvalidArgument("dataset image dimensions do not match the model input");
    if (ds.num_classes > m.num_classes())
        throw InvalidArgument("dataset has more classes than the model outputs");
}

} // namespace

void TrainConfig::validate() const
{
    if (!(optimizer.rho > 0.0 && optimizer.rho < 1.0))
        throw InvalidArgument("Adadelta rho must lie in (0, 1)");
    if (!(optimizer.epsilon > 0.0))
        throw InvalidArgument("Adadelta epsilon must be positive");
    if (!(optimizer.learning_rate > 0.0))
        throw InvalidArgument("learning-rate scale must be positive");
    if (epochs < 1)
        throw InvalidArgument("epochs must be at least 1");
    if (batch_size < 1)
        throw InvalidArgument("batch size must be at least 1");
    if (hidden1 < 1 || hidden2 < 1)
        throw InvalidArgument("hidden widths must be positive");
}

TinyClassifier::TinyClassifier(Dims input, int hidden1, int hidden2, int num_classes)
    : dims_(input), hidden1_(hidden1), hidden2_(hidden2), classes_(num_classes)
{
    if (input.height < 1 || input.width < 1 || (input.channels != 1 && input.channels != 3))
        throw InvalidArgument("invalid model input dimensions");
    if (hidden1 < 1 || hidden2 < 1 || num_classes < 2)
        throw InvalidArgument("invalid model layer sizes");
    params_.assign(layout_for(input_size(), hidden1, hidden2, num_classes).total, 0.0);
}

TinyClassifier TinyClassifier::initialized(Dims input, int hidden1, int hidden2, int num_classes, std::uint64_t seed)
{
    TinyClassifier m(input, hidden1, hidden2, num_classes);
    const Layout l = layout_for(m.input_size(), hidden1, hidden2, num_classes);
    Rng rng(seed);
    auto fill = [&](std::size_t offset, std::size_t count, int fan_in) {
        const double limit = std::sqrt(6.0 / fan_in);
        for (std::size_t i = 0; i < count; ++i)
            m.params_[offset + i] = rng.uniform(-limit, limit);
    };
    fill(l.w1, l.b1 - l.w1, m.input_size());
    fill(l.w2, l.b2 - l.w2, hidden1);
    fill(l.w3, l.b3 - l.w3, hidden2);
    return m;
}

void TinyClassifier::check_input(const Image& img) const
{
    if (img.dims() != dims_)
        throw InvalidArgument("image dimensions do not match the model input");
}

std::vector<double> TinyClassifier::logits(const Image& img) const
{
    return logits(std::span<const Image>(&img, 1)).front();
}

std::vector<std::vector<double>> TinyClassifier::logits(std::span<const Image> images) const
{
    for (const auto& img : images)
        check_input(img);
    const Layout l = layout_for(input_size(), hidden1_, hidden2_, classes_);
    const double* p = params_.data();
    const std::size_t tiles = (images.size() + kTile - 1) / kTile;
    const std::size_t d = dims_.size();
    std::vector<double> x(tiles * d * kTile, 0.0);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto px = images[i].data();
        double* dst = x.data() + (i / kTile) * d * kTile + i % kTile;
        for (std::size_t k = 0; k < d; ++k)
            dst[k * kTile] = px[k] / 255.0;
    }
    std::vector<double> a1, a2, z;
    dense_tiles(p + l.w1, p + l.b1, hidden1_, input_size(), x, tiles, a1, true);
    dense_tiles(p + l.w2, p + l.b2, hidden2_, hidden1_, a1, tiles, a2, true);
    dense_tiles(p + l.w3, p + l.b3, classes_, hidden2_, a2, tiles, z, false);
    std::vector<std::vector<double>> out(images.size(), std::vector<double>(static_cast<std::size_t>(classes_)));
    for (std::size_t i = 0; i < images.size(); ++i)
        for (std::size_t c = 0; c < out[i].size(); ++c)
            out[i][c] = z[(i / kTile) * out[i].size() * kTile + c * kTile + i % kTile];
    return out;
}

std::vector<double> TinyClassifier::probabilities(const Image& img) const
{
    std::vector<double> z = logits(img);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& e : z) {
        e = std::exp(e - mx);
        sum += e;
    }
    for (double& e : z)
        e /= sum;
    return z;
}

int TinyClassifier::predict(const Image& img) const
{
    const std::vector<double> z = logits(img);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

std::vector<int> TinyClassifier::predict(std::span<const Image> images) const
{
    std::vector<int> out;
    out.reserve(images.size());
    for (const auto& z : logits(images))
        out.push_back(static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin()));
    return out;
}

std::vector<int> Classifier::predict(std::span<const Image> images) const
{
    std::vector<int> out;
    out.reserve(images.size());
    for (const auto& img : images)
        out.push_back(predict(img));
    return out;
}

double TinyClassifier::loss_and_gradient(std::span<const Image> images, std::span<const int> labels,
                                         std::span<double> gradient) const
{
    if (images.empty() || images.size() != labels.size())
        throw InvalidArgument("batch must be non-empty with one label per image");
    if (!gradient.empty() && gradient.size() != params_.size())
        throw InvalidArgument("gradient buffer has the wrong size");
    for (const auto& img : images)
        check_input(img);
    for (int y : labels)
        if (y < 0 || y >= classes_)
            throw InvalidArgument("label outside the model's classes");
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const Mat X = stack_images(images, order);
    return backprop(params_, input_size(), hidden1_, hidden2_, classes_, X, labels, gradient, false).loss;
}

double TinyClassifier::loss(std::span<const Image> images, std::span<const int> labels) const
{
    return loss_and_gradient(images, labels, {});
}

double TinyClassifier::loss_and_input_gradient(std::span<const std::vector<double>> inputs, std::span<const int> labels,
                                               std::vector<std::vector<double>>& input_gradients) const
{
    if (inputs.empty() || inputs.size() != labels.size())
        throw InvalidArgument("batch must be non-empty with one label per input");
    const auto d = static_cast<Eigen::Index>(input_size());
    Mat X(d, static_cast<Eigen::Index>(inputs.size()));
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        if (inputs[j].size() != static_cast<std::size_t>(d))
            throw InvalidArgument("input buffer does not match the model input size");
        for (Eigen::Index i = 0; i < d; ++i)
            X(i, static_cast<Eigen::Index>(j)) = inputs[j][static_cast<std::size_t>(i)] / 255.0;
    }
    const BatchGrad g = backprop(params_, input_size(), hidden1_, hidden2_, classes_, X, labels, {}, true);
    input_gradients.assign(inputs.size(), std::vector<double>(static_cast<std::size_t>(d)));
    for (std::size_t j = 0; j < inputs.size(); ++j)
        for (Eigen::Index i = 0; i < d; ++i)
            input_gradients[j][static_cast<std::size_t>(i)] = g.input_grad(i, static_cast<Eigen::Index>(j)) / 255.0;
    return g.loss;
}

TinyClassifier train(const LabeledDataset& ds, const TrainConfig& cfg)
{
    cfg.validate();
    if (ds.empty())
        throw InvalidArgument("cannot train on an empty dataset");
    ds.validate();
    TinyClassifier m = TinyClassifier::initialized(ds.dims(), cfg.hidden1, cfg.hidden2, ds.num_classes,
                                                   derive_seed(cfg.seed, "init"));
    run_epochs(m, ds, cfg.epochs, cfg);
    return m;
}

TinyClassifier fine_tune(const TinyClassifier& m, const LabeledDataset& ds, int epochs, const TrainConfig& cfg)
{
    if (epochs < 1)
        throw InvalidArgument("fine-tuning needs at least one epoch");
    TrainConfig c = cfg;
    c.epochs = epochs;
    c.hidden1 = m.hidden1();
    c.hidden2 = m.hidden2();
    c.validate();
    check_dataset_for(m, ds);
    TinyClassifier out = m;
    run_epochs(out, ds, epochs, c);
    return out;
}

GradCheckResult grad_check(const TinyClassifier& m, std::span<const Image> images, std::span<const int> labels,
                           double tolerance, std::uint64_t seed, std::size_t per_tensor)
{
    const auto params = m.parameters();
    std::vector<double> analytic(params.size());
    m.loss_and_gradient(images, labels, analytic);

    const Layout l = layout_for(m.input_size(), m.hidden1(), m.hidden2(), m.num_classes());
    const std::size_t bounds[] = {l.w1, l.b1, l.w2, l.b2, l.w3, l.b3, l.total};
    Rng rng(seed);
    std::vector<std::size_t> picks;
    for (std::size_t t = 0; t + 1 < std::size(bounds); ++t) {
        const std::size_t count = bounds[t + 1] - bounds[t];
        for (std::size_t i = 0; i < std::min(per_tensor, count); ++i)
            picks.push_back(bounds[t] + static_cast<std::size_t>(rng.below(count)));
    }

    constexpr double kStep = 1e-5;
    TinyClassifier probe = m;
    GradCheckResult result;
    for (std::size_t p : picks) {
        const double original = probe.parameters()[p];
        probe.parameters()[p] = original + kStep;
        const double up = probe.loss(images, labels);
        probe.parameters()[p] = original - kStep;
        const double down = probe.loss(images, labels);
        probe.parameters()[p] = original;
        const double numeric = (up - down) / (2.0 * kStep);
        const double a = analytic[p];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
        result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
    }
    result.checked = picks.size();
    result.passed = std::isfinite(result.max_relative_error) && result.max_relative_error <= tolerance;
    return result;
}

namespace {

constexpr char kMagic[4] = {'S', 'W', 'K', 'M'};
constexpr std::size_t kHeaderSize = 4 + 4 + 6 * 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at)
{
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(b[at + static_cast<std::size_t>(i)]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t at)
{
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(b[at + static_cast<std::size_t>(i)]) << (8 * i);
    return v;
}

} // namespace

std::vector<std::uint8_t> serialize_model(const TinyClassifier& m)
{
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + m.parameters().size() * 8);
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u32(out, TinyClassifier::kFormatVersion);
    const Dims d = m.input_dims();
    for (int v : {d.height, d.width, d.channels, m.hidden1(), m.hidden2(), m.num_classes()})
        put_u32(out, static_cast<std::uint32_t>(v));
    for (double p : m.parameters())
        put_u64(out, std::bit_cast<std::uint64_t>(p));
    return out;
}

TinyClassifier deserialize_model(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < kHeaderSize)
        throw FormatError("model file truncated: header incomplete");
    if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
        throw FormatError("not a model file: bad magic");
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != TinyClassifier::kFormatVersion)
        throw FormatError("unsupported model file version " + std::to_string(version));
    std::uint32_t f[6];
    for (std::size_t i = 0; i < 6; ++i)
        f[i] = get_u32(bytes, 8 + 4 * i);
    for (std::uint32_t v : f)
        if (v == 0 || v > (1u << 20))
            throw FormatError("model file has implausible layer dimensions");
    TinyClassifier m = [&] {
        try {
            return TinyClassifier(Dims{static_cast<int>(f[0]), static_cast<int>(f[1]), static_cast<int>(f[2])},
                                  static_cast<int>(f[3]), static_cast<int>(f[4]), static_cast<int>(f[5]));
        } catch (const InvalidArgument& e) {
            throw FormatError(std::string("model file header invalid: ") + e.what());
        }
    }();
    auto params = m.parameters();
    if (bytes.size() != kHeaderSize + params.size() * 8)
        throw FormatError("model file size " + std::to_string(bytes.size()) + " does not match its header (expected " +
                          std::to_string(kHeaderSize + params.size() * 8) + ")");
    for (std::size_t i = 0; i < params.size(); ++i)
        params[i] = std::bit_cast<double>(get_u64(bytes, kHeaderSize + 8 * i));
    return m;
}

void save_model(const TinyClassifier& m, const std::filesystem::path& path)
{
    const auto bytes = serialize_model(m);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("failed writing " + path.string());
}

TinyClassifier load_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

} // namespace sweepkit
