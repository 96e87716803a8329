#include "qexp/dec_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qexp/detail/binary_io.hpp"
#include "qexp/detail/random.hpp"

namespace qexp::dec {

namespace {

double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

VectorXd softmax(const VectorXd& z) {
    const double m = z.maxCoeff();
    VectorXd e = (z.array() - m).exp();
    return e / e.sum();
}

std::span<double> view(MatrixXd& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}
std::span<double> view(VectorXd& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

LstmWeights lstm_zeros(std::size_t d, std::size_t h) {
    return {MatrixXd::Zero(4 * h, d), MatrixXd::Zero(4 * h, h), VectorXd::Zero(4 * h)};
}

// Position processed at step s.
std::size_t position(std::size_t s, std::size_t steps, bool reverse) {
    return reverse ? steps - 1 - s : s;
}

DirectionTrace run_direction(const LstmWeights& w, const Sequence& seq, bool reverse) {
    const auto h = static_cast<Eigen::Index>(w.recurrent.cols());
    const auto steps = static_cast<std::size_t>(seq.cols());
    const MatrixXd projected = w.input * seq;
    DirectionTrace trace;
    trace.gates.reserve(steps);
    trace.cells.reserve(steps);
    trace.hidden.reserve(steps);
    VectorXd h_prev = VectorXd::Zero(h);
    VectorXd c_prev = VectorXd::Zero(h);
    for (std::size_t s = 0; s < steps; ++s) {
        const auto t = static_cast<Eigen::Index>(position(s, steps, reverse));
        VectorXd a = projected.col(t) + w.recurrent * h_prev + w.bias;
        for (Eigen::Index k = 0; k < 3 * h; ++k) a[k] = sigmoid(a[k]);
        for (Eigen::Index k = 3 * h; k < 4 * h; ++k) a[k] = std::tanh(a[k]);
        VectorXd c = a.segment(h, h).cwiseProduct(c_prev) + a.segment(0, h).cwiseProduct(a.segment(3 * h, h));
        VectorXd hs = a.segment(2 * h, h).cwiseProduct(c.array().tanh().matrix());
        trace.gates.push_back(std::move(a));
        trace.cells.push_back(c);
        trace.hidden.push_back(hs);
        c_prev = std::move(c);
        h_prev = std::move(hs);
    }
    return trace;
}

// `external` holds dLoss/dh for each processing step (columns).
void backprop_direction(const LstmWeights& w, const Sequence& seq, const DirectionTrace& trace, bool reverse,
                        const MatrixXd& external, LstmWeights& grad) {
    const auto h = static_cast<Eigen::Index>(w.recurrent.cols());
    const auto steps = static_cast<std::size_t>(seq.cols());
    VectorXd dh_next = VectorXd::Zero(h);
    VectorXd dc_next = VectorXd::Zero(h);
    VectorXd da(4 * h);
    const VectorXd zero = VectorXd::Zero(h);
    for (std::size_t s = steps; s-- > 0;) {
        const auto t = static_cast<Eigen::Index>(position(s, steps, reverse));
        const VectorXd& gates = trace.gates[s];
        const auto i = gates.segment(0, h).array();
        const auto f = gates.segment(h, h).array();
        const auto o = gates.segment(2 * h, h).array();
        const auto g = gates.segment(3 * h, h).array();
        const VectorXd& c_prev = s > 0 ? trace.cells[s - 1] : zero;
        const VectorXd& h_prev = s > 0 ? trace.hidden[s - 1] : zero;

        const VectorXd dh = external.col(static_cast<Eigen::Index>(s)) + dh_next;
        const Eigen::ArrayXd tc = trace.cells[s].array().tanh();
        const Eigen::ArrayXd dc = dc_next.array() + dh.array() * o * (1.0 - tc.square());

        da.segment(0, h) = (dc * g * i * (1.0 - i)).matrix();
        da.segment(h, h) = (dc * c_prev.array() * f * (1.0 - f)).matrix();
        da.segment(2 * h, h) = (dh.array() * tc * o * (1.0 - o)).matrix();
        da.segment(3 * h, h) = (dc * i * (1.0 - g.square())).matrix();

        grad.input.noalias() += da * seq.col(t).transpose();
        grad.recurrent.noalias() += da * h_prev.transpose();
        grad.bias += da;
        dh_next.noalias() = w.recurrent.transpose() * da;
        dc_next = (dc * f).matrix();
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters

Parameters Parameters::zeros(const ModelShape& shape) {
    const auto d = shape.embedding_dim;
    const auto h = shape.hidden;
    const auto r = shape.representation;
    return {lstm_zeros(d, h),           lstm_zeros(d, h),       MatrixXd::Zero(r, 2 * h),
            VectorXd::Zero(r),          MatrixXd::Zero(2, r),   VectorXd::Zero(2)};
}

std::vector<TensorView> Parameters::tensors() {
    return {{"forward.input", view(forward.input)},
            {"forward.recurrent", view(forward.recurrent)},
            {"forward.bias", view(forward.bias)},
            {"backward.input", view(backward.input)},
            {"backward.recurrent", view(backward.recurrent)},
            {"backward.bias", view(backward.bias)},
            {"repr.weight", view(repr_weight)},
            {"repr.bias", view(repr_bias)},
            {"head.weight", view(head_weight)},
            {"head.bias", view(head_bias)}};
}

std::vector<ConstTensorView> Parameters::tensors() const {
    std::vector<ConstTensorView> out;
    for (const auto& t : const_cast<Parameters*>(this)->tensors()) out.push_back({t.name, t.values});
    return out;
}

void Parameters::set_zero() {
    for (auto& t : tensors()) std::fill(t.values.begin(), t.values.end(), 0.0);
}

bool Parameters::all_finite() const {
    for (const auto& t : tensors()) {
        if (!std::all_of(t.values.begin(), t.values.end(), [](double x) { return std::isfinite(x); })) {
            return false;
        }
    }
    return true;
}

std::size_t Parameters::count() const {
    std::size_t n = 0;
    for (const auto& t : tensors()) n += t.values.size();
    return n;
}

bool operator==(const Parameters& a, const Parameters& b) {
    const auto ta = a.tensors();
    const auto tb = b.tensors();
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (!std::equal(ta[i].values.begin(), ta[i].values.end(), tb[i].values.begin(), tb[i].values.end())) {
            return false;
        }
    }
    return true;
}

Parameters initial_parameters(const ModelShape& shape, std::uint64_t seed, double scale) {
    auto params = Parameters::zeros(shape);
    std::mt19937_64 rng(seed);
    for (auto& t : params.tensors()) {
        for (auto& x : t.values) x = detail::uniform(rng, -scale, scale);
    }
    const auto h = static_cast<Eigen::Index>(shape.hidden);
    params.forward.bias.segment(h, h).setOnes();
    params.backward.bias.segment(h, h).setOnes();
    return params;
}

// ---------------------------------------------------------------------------
// Forward and backward passes

EncodeTrace encode_trace(const Parameters& params, const Sequence& sequence, Pooling pooling) {
    if (sequence.cols() == 0) throw std::invalid_argument("cannot encode an empty sequence");
    EncodeTrace trace;
    trace.forward = run_direction(params.forward, sequence, false);
    trace.backward = run_direction(params.backward, sequence, true);
    const auto h = params.forward.recurrent.cols();
    trace.pooled.resize(2 * h);
    if (pooling == Pooling::FinalState) {
        trace.pooled << trace.forward.hidden.back(), trace.backward.hidden.back();
    } else {
        VectorXd f = VectorXd::Zero(h);
        VectorXd b = VectorXd::Zero(h);
        for (const auto& x : trace.forward.hidden) f += x;
        for (const auto& x : trace.backward.hidden) b += x;
        const double steps = static_cast<double>(sequence.cols());
        trace.pooled << f / steps, b / steps;
    }
    trace.representation = softmax(params.repr_weight * trace.pooled + params.repr_bias);
    return trace;
}

void encode_backward(const Parameters& params, const Sequence& sequence, const EncodeTrace& trace,
                     const VectorXd& d_representation, Pooling pooling, Parameters& grad) {
    const VectorXd& r = trace.representation;
    const VectorXd du = r.cwiseProduct(d_representation - VectorXd::Constant(r.size(), d_representation.dot(r)));
    grad.repr_weight.noalias() += du * trace.pooled.transpose();
    grad.repr_bias += du;
    const VectorXd d_pooled = params.repr_weight.transpose() * du;

    const auto h = params.forward.recurrent.cols();
    const auto steps = sequence.cols();
    MatrixXd ext_f = MatrixXd::Zero(h, steps);
    MatrixXd ext_b = MatrixXd::Zero(h, steps);
    if (pooling == Pooling::FinalState) {
        ext_f.col(steps - 1) = d_pooled.head(h);
        ext_b.col(steps - 1) = d_pooled.tail(h);
    } else {
        ext_f.colwise() = d_pooled.head(h) / static_cast<double>(steps);
        ext_b.colwise() = d_pooled.tail(h) / static_cast<double>(steps);
    }
    backprop_direction(params.forward, sequence, trace.forward, false, ext_f, grad.forward);
    backprop_direction(params.backward, sequence, trace.backward, true, ext_b, grad.backward);
}

Eigen::Vector2d head_probabilities(const Parameters& params, const VectorXd& a, const VectorXd& b) {
    const VectorXd z = params.head_weight * (a - b) + params.head_bias;
    return softmax(z);
}

namespace {

// Cross-entropy and dLoss/dlogits for the head.
double head_loss(const Parameters& params, const VectorXd& a, const VectorXd& b, bool same_class,
                 Eigen::Vector2d& d_logits) {
    const Eigen::Vector2d z = params.head_weight * (a - b) + params.head_bias;
    const double m = z.maxCoeff();
    const double log_norm = m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m));
    const int y = same_class ? 1 : 0;
    const Eigen::Vector2d p = (z.array() - log_norm).exp();
    d_logits = p;
    d_logits[y] -= 1.0;
    return log_norm - z[y];
}

}  // namespace

double pair_loss(const Parameters& params, const Sequence& left, const Sequence& right, bool same_class,
                 Pooling pooling, Parameters* grad, double weight) {
    const auto ta = encode_trace(params, left, pooling);
    const auto tb = encode_trace(params, right, pooling);
    Eigen::Vector2d dz;
    const double loss = head_loss(params, ta.representation, tb.representation, same_class, dz);
    if (grad != nullptr) {
        dz *= weight;
        grad->head_weight.noalias() += dz * (ta.representation - tb.representation).transpose();
        grad->head_bias += dz;
        const VectorXd d_a = params.head_weight.transpose() * dz;
        encode_backward(params, left, ta, d_a, pooling, *grad);
        encode_backward(params, right, tb, -d_a, pooling, *grad);
    }
    return loss;
}

// ---------------------------------------------------------------------------
// SiameseModel

namespace {

void check_shapes(const ModelShape& shape, const Parameters& p) {
    const auto d = static_cast<Eigen::Index>(shape.embedding_dim);
    const auto h = static_cast<Eigen::Index>(shape.hidden);
    const auto r = static_cast<Eigen::Index>(shape.representation);
    auto ok = [](const auto& m, Eigen::Index rows, Eigen::Index cols) {
        return m.rows() == rows && m.cols() == cols;
    };
    for (const auto* lstm : {&p.forward, &p.backward}) {
        if (!ok(lstm->input, 4 * h, d) || !ok(lstm->recurrent, 4 * h, h) || !ok(lstm->bias, 4 * h, 1)) {
            throw std::invalid_argument("LSTM parameter shapes do not match the model shape");
        }
    }
    if (!ok(p.repr_weight, r, 2 * h) || !ok(p.repr_bias, r, 1) || !ok(p.head_weight, 2, r) ||
        !ok(p.head_bias, 2, 1)) {
        throw std::invalid_argument("dense parameter shapes do not match the model shape");
    }
}

}  // namespace

SiameseModel::SiameseModel(ModelShape shape, std::shared_ptr<const EmbeddingTable> embeddings,
                           std::uint64_t seed, ModelOptions options)
    : SiameseModel(shape, std::move(embeddings), initial_parameters(shape, seed), seed, options) {}

SiameseModel::SiameseModel(ModelShape shape, std::shared_ptr<const EmbeddingTable> embeddings, Parameters params,
                           std::uint64_t seed, ModelOptions options)
    : shape_(shape), embeddings_(std::move(embeddings)), params_(std::move(params)), seed_(seed),
      options_(options) {
    if (shape.embedding_dim == 0 || shape.hidden == 0 || shape.representation == 0) {
        throw std::invalid_argument("model dimensions must be positive");
    }
    if (!embeddings_) throw std::invalid_argument("model needs an embedding table");
    if (embeddings_->dim() != shape.embedding_dim) {
        throw std::invalid_argument(fmt::format("embedding dimension {} does not match model dimension {}",
                                                embeddings_->dim(), shape.embedding_dim));
    }
    check_shapes(shape_, params_);
}

std::optional<Sequence> SiameseModel::sequence(std::span<const std::string> query_terms,
                                               const std::string& candidate) const {
    const auto x = embeddings_->find(candidate);
    if (x.empty()) return std::nullopt;
    std::vector<std::span<const double>> columns;
    for (const auto& t : query_terms) {
        const auto v = embeddings_->find(t);
        if (!v.empty()) columns.push_back(v);
    }
    if (columns.empty()) return std::nullopt;
    columns.push_back(x);
    Sequence seq(static_cast<Eigen::Index>(shape_.embedding_dim), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) {
        seq.col(static_cast<Eigen::Index>(c)) =
            Eigen::Map<const VectorXd>(columns[c].data(), static_cast<Eigen::Index>(columns[c].size()));
    }
    return seq;
}

VectorXd SiameseModel::encode(std::span<const std::string> query_terms, const std::string& candidate) const {
    const auto seq = sequence(query_terms, candidate);
    if (!seq) {
        throw std::invalid_argument(fmt::format("cannot embed candidate '{}' with its query", candidate));
    }
    return encode(*seq);
}

VectorXd SiameseModel::encode(const Sequence& seq) const {
    return encode_trace(params_, seq, options_.pooling).representation;
}

double SiameseModel::compare(const VectorXd& a, const VectorXd& b) const {
    const double forward = head_probabilities(params_, a, b)[1];
    if (!options_.symmetric_compare) return forward;
    return 0.5 * (forward + head_probabilities(params_, b, a)[1]);
}

void SiameseModel::save(std::ostream& out) const {
    using namespace detail;
    out.write(kCheckpointMagic, 4);
    write_le<std::uint8_t>(out, kCheckpointVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape_.embedding_dim));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape_.hidden));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape_.representation));
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(options_.pooling));
    write_le<std::uint8_t>(out, options_.symmetric_compare ? 1 : 0);
    write_le<std::uint64_t>(out, seed_);
    for (const auto& t : params_.tensors()) {
        write_le<std::uint64_t>(out, t.values.size());
        for (double x : t.values) write_le<double>(out, x);
    }
}

void SiameseModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write checkpoint '{}'", path.string()));
    save(out);
}

SiameseModel SiameseModel::load(std::istream& in, std::shared_ptr<const EmbeddingTable> embeddings) {
    using namespace detail;
    char magic[4];
    if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kCheckpointMagic)) {
        throw std::runtime_error("not a model checkpoint (bad magic)");
    }
    const auto version = read_le<std::uint8_t>(in);
    if (version != kCheckpointVersion) {
        throw std::runtime_error(fmt::format("unsupported checkpoint version {}", version));
    }
    ModelShape shape;
    shape.embedding_dim = read_le<std::uint32_t>(in);
    shape.hidden = read_le<std::uint32_t>(in);
    shape.representation = read_le<std::uint32_t>(in);
    ModelOptions options;
    const auto pooling = read_le<std::uint8_t>(in);
    if (pooling > 1) throw std::runtime_error("checkpoint has an unknown pooling mode");
    options.pooling = static_cast<Pooling>(pooling);
    options.symmetric_compare = read_le<std::uint8_t>(in) != 0;
    const auto seed = read_le<std::uint64_t>(in);
    auto params = Parameters::zeros(shape);
    for (auto& t : params.tensors()) {
        const auto n = read_le<std::uint64_t>(in);
        if (n != t.values.size()) {
            throw std::runtime_error(fmt::format("checkpoint tensor {} has {} values, expected {}", t.name, n,
                                                 t.values.size()));
        }
        for (auto& x : t.values) x = read_le<double>(in);
    }
    return SiameseModel(shape, std::move(embeddings), std::move(params), seed, options);
}

SiameseModel SiameseModel::load(const std::filesystem::path& path, std::shared_ptr<const EmbeddingTable> embeddings) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open checkpoint '{}'", path.string()));
    return load(in, std::move(embeddings));
}

// ---------------------------------------------------------------------------
// Pairs

std::vector<PairExample> enumerate_pairs(std::span<const Label> labels) {
    std::vector<PairExample> pairs;
    pairs.reserve(labels.size() * (labels.size() > 0 ? labels.size() - 1 : 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (i != j) pairs.push_back({i, j, labels[i] == labels[j]});
        }
    }
    return pairs;
}

namespace {

std::vector<Label> labels_of(const LabeledDataset& dataset) {
    std::vector<Label> labels;
    labels.reserve(dataset.examples.size());
    for (const auto& ex : dataset.examples) labels.push_back(ex.label);
    return labels;
}

}  // namespace

std::vector<PairExample> enumerate_pairs(const LabeledDataset& dataset) {
    return enumerate_pairs(labels_of(dataset));
}

std::vector<PairExample> sample_pairs(std::span<const Label> labels, std::size_t count, bool balance,
                                      std::mt19937_64& rng) {
    const auto n = labels.size();
    if (n < 2) throw std::invalid_argument("pair generation needs at least two examples");
    std::vector<PairExample> pairs;
    pairs.reserve(count);
    if (!balance) {
        for (std::size_t k = 0; k < count; ++k) {
            const auto i = detail::uniform_index(rng, n);
            auto j = detail::uniform_index(rng, n - 1);
            if (j >= i) ++j;
            pairs.push_back({i, j, labels[i] == labels[j]});
        }
        return pairs;
    }

    if (count % 2 != 0) throw std::invalid_argument("balanced pair sampling needs an even pair count");
    std::map<Label, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
    if (by_class.size() < 2) throw std::invalid_argument("balanced pairs need at least two classes");
    std::vector<std::size_t> same_pool;  // examples whose class has another member
    for (const auto& [_, members] : by_class) {
        if (members.size() >= 2) same_pool.insert(same_pool.end(), members.begin(), members.end());
    }
    std::sort(same_pool.begin(), same_pool.end());
    if (same_pool.empty()) throw std::invalid_argument("balanced pairs need a class with two examples");

    for (std::size_t k = 0; k < count / 2; ++k) {
        const auto i = same_pool[detail::uniform_index(rng, same_pool.size())];
        const auto& members = by_class[labels[i]];
        std::size_t j;
        do {
            j = members[detail::uniform_index(rng, members.size())];
        } while (j == i);
        pairs.push_back({i, j, true});
    }
    for (std::size_t k = 0; k < count / 2; ++k) {
        const auto i = detail::uniform_index(rng, n);
        const auto others = n - by_class[labels[i]].size();
        // j-th example (in index order) outside i's class
        auto target = detail::uniform_index(rng, others);
        std::size_t j = 0;
        for (;; ++j) {
            if (labels[j] != labels[i]) {
                if (target == 0) break;
                --target;
            }
        }
        pairs.push_back({i, j, false});
    }
    detail::shuffle(std::span(pairs), rng);
    return pairs;
}

std::vector<PairExample> generate_pairs(const LabeledDataset& dataset, std::size_t count, bool balance,
                                        std::uint64_t seed) {
    if (count == kAllPairs) return enumerate_pairs(dataset);
    std::mt19937_64 rng(seed);
    const auto labels = labels_of(dataset);
    return sample_pairs(labels, count, balance, rng);
}

std::string_view to_string(PairOrder order) {
    return order == PairOrder::LabelOrdered ? "label" : "sampled";
}

PairOrder parse_pair_order(std::string_view text) {
    if (text == "label") return PairOrder::LabelOrdered;
    if (text == "sampled") return PairOrder::AsSampled;
    throw std::invalid_argument(fmt::format("unknown pair order '{}' (expected label or sampled)", text));
}

namespace {

int label_rank(Label l) {
    switch (l) {
        case Label::Good: return 0;
        case Label::Neutral: return 1;
        case Label::Bad: return 2;
    }
    return 1;
}

}  // namespace

void orient_pairs(std::span<PairExample> pairs, std::span<const Label> labels, PairOrder order) {
    if (order == PairOrder::AsSampled) return;
    for (auto& p : pairs) {
        if (!p.same_class && label_rank(labels[p.left]) < label_rank(labels[p.right])) std::swap(p.left, p.right);
    }
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw std::invalid_argument("Adam moment decay rates must be in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
    if (pairs_per_epoch < 1) throw std::invalid_argument("pairs per epoch must be >= 1");
}

Adam::Adam(const ModelShape& shape, double lr, double beta1, double beta2, double epsilon)
    : m_(Parameters::zeros(shape)), v_(Parameters::zeros(shape)), lr_(lr), beta1_(beta1), beta2_(beta2),
      epsilon_(epsilon) {}

void Adam::step(Parameters& params, const Parameters& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto p = params.tensors();
    const auto g = grad.tensors();
    auto m = m_.tensors();
    auto v = v_.tensors();
    for (std::size_t k = 0; k < p.size(); ++k) {
        for (std::size_t i = 0; i < p[k].values.size(); ++i) {
            const double gi = g[k].values[i];
            m[k].values[i] = beta1_ * m[k].values[i] + (1.0 - beta1_) * gi;
            v[k].values[i] = beta2_ * v[k].values[i] + (1.0 - beta2_) * gi * gi;
            const double m_hat = m[k].values[i] / c1;
            const double v_hat = v[k].values[i] / c2;
            p[k].values[i] -= lr_ * m_hat / (std::sqrt(v_hat) + epsilon_);
        }
    }
}

namespace {

struct EmbeddedExamples {
    std::vector<Sequence> sequences;
    std::vector<Label> labels;
    std::vector<std::size_t> source;  // dataset index of each kept example
};

EmbeddedExamples embed_examples(const LabeledDataset& dataset, const SiameseModel& model) {
    EmbeddedExamples out;
    for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
        const auto& ex = dataset.examples[i];
        if (auto seq = model.sequence(ex.query_terms, ex.candidate)) {
            out.sequences.push_back(std::move(*seq));
            out.labels.push_back(ex.label);
            out.source.push_back(i);
        }
    }
    return out;
}

}  // namespace

TrainResult train(const LabeledDataset& dataset, const TrainConfig& config, SiameseModel& model) {
    config.validate();
    const auto examples = embed_examples(dataset, model);
    if (examples.sequences.size() < dataset.examples.size()) {
        spdlog::info("training on {} of {} examples (the rest lack embeddings)", examples.sequences.size(),
                     dataset.examples.size());
    }
    if (examples.sequences.size() < 2) throw std::invalid_argument("training needs at least two embeddable examples");

    TrainResult result;
    result.trainable_examples = examples.sequences.size();
    const auto pooling = model.options().pooling;
    auto& params = model.params();
    Adam adam(model.shape(), config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_epsilon);
    Parameters grad = Parameters::zeros(model.shape());
    std::mt19937_64 rng(config.seed);

    const auto n = examples.sequences.size();
    std::vector<std::ptrdiff_t> slot_of(n, -1);
    std::vector<std::size_t> unique;
    std::vector<EncodeTrace> traces;
    std::vector<VectorXd> d_repr;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        auto pairs = sample_pairs(examples.labels, config.pairs_per_epoch, config.balance, rng);
        orient_pairs(pairs, examples.labels, config.pair_order);
        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < pairs.size(); begin += config.batch_size, ++batch_index) {
            const auto end = std::min(pairs.size(), begin + config.batch_size);
            const double scale = 1.0 / static_cast<double>(end - begin);
            grad.set_zero();

            // Each distinct example in the batch is encoded and backpropagated once.
            unique.clear();
            traces.clear();
            for (std::size_t k = begin; k < end; ++k) {
                for (auto idx : {pairs[k].left, pairs[k].right}) {
                    if (slot_of[idx] < 0) {
                        slot_of[idx] = static_cast<std::ptrdiff_t>(unique.size());
                        unique.push_back(idx);
                        traces.push_back(encode_trace(params, examples.sequences[idx], pooling));
                    }
                }
            }
            d_repr.assign(unique.size(), VectorXd::Zero(static_cast<Eigen::Index>(model.shape().representation)));

            double loss = 0.0;
            for (std::size_t k = begin; k < end; ++k) {
                const auto a = static_cast<std::size_t>(slot_of[pairs[k].left]);
                const auto b = static_cast<std::size_t>(slot_of[pairs[k].right]);
                Eigen::Vector2d dz;
                loss += head_loss(params, traces[a].representation, traces[b].representation, pairs[k].same_class,
                                  dz);
                dz *= scale;
                grad.head_weight.noalias() +=
                    dz * (traces[a].representation - traces[b].representation).transpose();
                grad.head_bias += dz;
                const VectorXd d = params.head_weight.transpose() * dz;
                d_repr[a] += d;
                d_repr[b] -= d;
            }
            loss *= scale;
            if (!std::isfinite(loss)) {
                throw TrainingError(fmt::format("non-finite loss at epoch {} batch {}", epoch, batch_index));
            }
            for (std::size_t u = 0; u < unique.size(); ++u) {
                encode_backward(params, examples.sequences[unique[u]], traces[u], d_repr[u], pooling, grad);
                slot_of[unique[u]] = -1;
            }
            adam.step(params, grad);
            if (!params.all_finite()) {
                throw TrainingError(fmt::format("non-finite parameters after epoch {} batch {}", epoch, batch_index));
            }
            result.history.push_back({epoch, batch_index, loss});
            epoch_loss += loss;
        }
        spdlog::debug("epoch {}: mean loss {:.6f}", epoch, epoch_loss / static_cast<double>(batch_index));
    }
    return result;
}

void write_loss_csv(std::ostream& out, std::span<const LossRecord> history) {
    out << "epoch,batch,loss\n";
    for (const auto& r : history) out << fmt::format("{},{},{}\n", r.epoch, r.batch, r.loss);
}

void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write loss history '{}'", path.string()));
    write_loss_csv(out, history);
}

double pair_accuracy(const SiameseModel& model, const LabeledDataset& dataset, std::span<const PairExample> pairs) {
    if (pairs.empty()) throw std::invalid_argument("pair accuracy over zero pairs");
    std::map<std::size_t, VectorXd> cache;
    auto encoded = [&](std::size_t i) -> const VectorXd& {
        auto it = cache.find(i);
        if (it == cache.end()) {
            const auto& ex = dataset.examples.at(i);
            it = cache.emplace(i, model.encode(ex.query_terms, ex.candidate)).first;
        }
        return it->second;
    };
    std::size_t correct = 0;
    for (const auto& p : pairs) {
        const bool same = model.compare(encoded(p.left), encoded(p.right)) >= kSameClassThreshold;
        if (same == p.same_class) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Inference

void ReferenceSet::validate() const {
    if (items.empty()) throw std::invalid_argument("reference set is empty");
    std::size_t good = 0;
    std::size_t bad = 0;
    for (const auto& item : items) {
        if (item.label == Label::Good) ++good;
        else if (item.label == Label::Bad) ++bad;
        else throw std::invalid_argument("reference set may only hold Good and Bad items");
    }
    if (good != bad) throw std::invalid_argument(fmt::format("reference set has {} Good but {} Bad items", good, bad));
}

ReferenceSet build_reference_set(const LabeledDataset& dataset, const EmbeddingTable& embeddings, std::size_t size,
                                 std::uint64_t seed) {
    if (size < 2 || size % 2 != 0) throw std::invalid_argument("reference set size must be even and >= 2");
    auto embeddable = [&](const LabeledExample& ex) {
        if (!embeddings.contains(ex.candidate)) return false;
        return std::any_of(ex.query_terms.begin(), ex.query_terms.end(),
                           [&](const std::string& t) { return embeddings.contains(t); });
    };
    std::vector<std::size_t> good;
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
        const auto& ex = dataset.examples[i];
        if (!embeddable(ex)) continue;
        if (ex.label == Label::Good) good.push_back(i);
        if (ex.label == Label::Bad) bad.push_back(i);
    }
    if (good.empty() || bad.empty()) {
        throw std::invalid_argument(
            fmt::format("reference set needs Good and Bad examples (have {} Good, {} Bad)", good.size(), bad.size()));
    }
    std::size_t half = size / 2;
    if (good.size() < half || bad.size() < half) {
        half = std::min(good.size(), bad.size());
        spdlog::warn("reference set shrunk to {} items ({} Good, {} Bad available)", 2 * half, good.size(),
                     bad.size());
    }
    std::mt19937_64 rng(seed);
    detail::shuffle(std::span(good), rng);
    detail::shuffle(std::span(bad), rng);
    ReferenceSet refset;
    for (std::size_t k = 0; k < half; ++k) {
        for (auto i : {good[k], bad[k]}) {
            const auto& ex = dataset.examples[i];
            refset.items.push_back({ex.query_terms, ex.candidate, ex.label});
        }
    }
    return refset;
}

double p_good_from_outcomes(std::span<const Label> reference_labels, const std::vector<bool>& same_class) {
    if (reference_labels.empty()) throw std::invalid_argument("p_good needs a non-empty reference set");
    if (reference_labels.size() != same_class.size()) throw std::invalid_argument("one outcome per reference item");
    std::size_t same_as_good = 0;
    std::size_t unlike_bad = 0;
    for (std::size_t i = 0; i < reference_labels.size(); ++i) {
        switch (reference_labels[i]) {
            case Label::Good:
                if (same_class[i]) ++same_as_good;
                break;
            case Label::Bad:
                if (!same_class[i]) ++unlike_bad;
                break;
            case Label::Neutral:
                throw std::invalid_argument("reference items must be Good or Bad");
        }
    }
    return static_cast<double>(same_as_good + unlike_bad) / static_cast<double>(reference_labels.size());
}

GoodnessEstimator::GoodnessEstimator(const SiameseModel& model, ReferenceSet refset)
    : model_(model), refset_(std::move(refset)) {
    refset_.validate();
    for (const auto& item : refset_.items) {
        encoded_.push_back(model_.encode(item.query_terms, item.candidate));
        labels_.push_back(item.label);
    }
}

double GoodnessEstimator::p_good(std::span<const std::string> query_terms, const std::string& candidate) const {
    const auto seq = model_.sequence(query_terms, candidate);
    if (!seq) return 0.0;
    const VectorXd probe = model_.encode(*seq);
    std::vector<bool> same(encoded_.size());
    for (std::size_t i = 0; i < encoded_.size(); ++i) {
        same[i] = model_.compare(probe, encoded_[i]) >= kSameClassThreshold;
    }
    return p_good_from_outcomes(labels_, same);
}

double p_good(std::span<const std::string> query_terms, const std::string& candidate, const SiameseModel& model,
              const ReferenceSet& refset) {
    return GoodnessEstimator(model, refset).p_good(query_terms, candidate);
}

// ---------------------------------------------------------------------------
// Gradient verification

GradientCheckReport gradient_check(const Parameters& params, const Sequence& left, const Sequence& right,
                                   bool same_class, Pooling pooling, double step) {
    Parameters analytic = params;
    analytic.set_zero();
    pair_loss(params, left, right, same_class, pooling, &analytic);

    Parameters probe = params;
    auto probe_tensors = probe.tensors();
    const auto analytic_tensors = analytic.tensors();
    GradientCheckReport report;
    for (std::size_t k = 0; k < probe_tensors.size(); ++k) {
        TensorCheck check{std::string(probe_tensors[k].name), probe_tensors[k].values.size(), 0.0, 0.0};
        for (std::size_t i = 0; i < probe_tensors[k].values.size(); ++i) {
            double& x = probe_tensors[k].values[i];
            const double original = x;
            x = original + step;
            const double up = pair_loss(probe, left, right, same_class, pooling);
            x = original - step;
            const double down = pair_loss(probe, left, right, same_class, pooling);
            x = original;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic_tensors[k].values[i];
            const double abs_err = std::abs(a - numeric);
            const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-8});
            check.max_absolute_error = std::max(check.max_absolute_error, abs_err);
            check.max_relative_error = std::max(check.max_relative_error, rel_err);
        }
        report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
        report.tensors.push_back(std::move(check));
    }
    return report;
}

GradientCheckReport gradient_check(const SiameseModel& model, std::span<const std::string> left_query,
                                   const std::string& left_candidate, std::span<const std::string> right_query,
                                   const std::string& right_candidate, bool same_class, double step) {
    const auto left = model.sequence(left_query, left_candidate);
    const auto right = model.sequence(right_query, right_candidate);
    if (!left || !right) throw std::invalid_argument("gradient check pair cannot be embedded");
    return gradient_check(model.params(), *left, *right, same_class, model.options().pooling, step);
}

SiameseModel make_toy_model(std::uint64_t seed, Pooling pooling) {
    constexpr std::size_t kDim = 4;
    auto table = std::make_shared<EmbeddingTable>(kDim);
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    for (const char* term : {"alpha", "beta", "gamma", "delta", "epsilon", "zeta"}) {
        std::vector<double> v(kDim);
        for (auto& x : v) x = detail::uniform(rng, -1.0, 1.0);
        table->add(term, v);
    }
    const ModelShape shape{kDim, 3, 4};
    return SiameseModel(shape, table, initial_parameters(shape, seed, 1.0), seed, {pooling, false});
}

}  // namespace qexp::dec
