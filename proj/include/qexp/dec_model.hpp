#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qexp/collection.hpp"
#include "qexp/embeddings.hpp"
#include "qexp/labeling.hpp"

// Siamese expansion-term classifier. Each (query, candidate) pair is read
// as the sequence of its term embeddings, encoded by a bidirectional LSTM
// and a dense softmax layer; two encodings are compared by feeding their
// difference to a dense softmax head that scores "same class".
namespace qexp::dec {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ModelShape {
    std::size_t embedding_dim = 200;
    std::size_t hidden = 200;
    std::size_t representation = 400;

    friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

enum class Pooling : std::uint8_t {
    FinalState = 0,  // last forward state || last backward state
    Mean = 1,        // per-position concatenations averaged over the sequence
};

struct ModelOptions {
    Pooling pooling = Pooling::FinalState;
    /// Average compare(a, b) and compare(b, a) at inference.
    bool symmetric_compare = false;
};

/// Gate blocks are stacked in the order input, forget, output, candidate.
struct LstmWeights {
    MatrixXd input;      // 4h x d
    MatrixXd recurrent;  // 4h x h
    VectorXd bias;       // 4h
};

struct TensorView {
    std::string_view name;
    std::span<double> values;
};

struct ConstTensorView {
    std::string_view name;
    std::span<const double> values;
};

/// Every trainable tensor. Also used for gradients and Adam moments.
struct Parameters {
    LstmWeights forward;
    LstmWeights backward;
    MatrixXd repr_weight;  // r x 2h
    VectorXd repr_bias;    // r
    MatrixXd head_weight;  // 2 x r; row 0 = different, row 1 = same
    VectorXd head_bias;    // 2

    static Parameters zeros(const ModelShape& shape);

    /// Declaration order; checkpoint files store tensors in this order.
    std::vector<TensorView> tensors();
    std::vector<ConstTensorView> tensors() const;

    void set_zero();
    bool all_finite() const;
    std::size_t count() const;

    friend bool operator==(const Parameters& a, const Parameters& b);
};

/// Uniform [-scale, scale] everywhere except forget-gate biases, which start at 1.
Parameters initial_parameters(const ModelShape& shape, std::uint64_t seed, double scale = 0.08);

/// Columns are time steps: the embedded query terms in order, then the candidate.
using Sequence = MatrixXd;

struct DirectionTrace {
    std::vector<VectorXd> gates;  // post-activation [i; f; o; g] per step, 4h
    std::vector<VectorXd> cells;
    std::vector<VectorXd> hidden;
};

/// Intermediate values of one encoding, kept for backpropagation. Backward
/// direction entries are indexed by processing step, so step 0 is the last position.
struct EncodeTrace {
    DirectionTrace forward;
    DirectionTrace backward;
    VectorXd pooled;          // 2h
    VectorXd representation;  // r, softmax output
};

EncodeTrace encode_trace(const Parameters& params, const Sequence& sequence, Pooling pooling);

/// Accumulates dLoss/dparams into `grad` given dLoss/drepresentation.
void encode_backward(const Parameters& params, const Sequence& sequence, const EncodeTrace& trace,
                     const VectorXd& d_representation, Pooling pooling, Parameters& grad);

/// Softmax over head_weight * (a - b) + head_bias; index 1 is "same".
Eigen::Vector2d head_probabilities(const Parameters& params, const VectorXd& a, const VectorXd& b);

/// Cross-entropy of one ordered pair. With `grad`, accumulates the gradient
/// scaled by `weight`.
double pair_loss(const Parameters& params, const Sequence& left, const Sequence& right, bool same_class,
                 Pooling pooling, Parameters* grad = nullptr, double weight = 1.0);

class SiameseModel {
public:
    SiameseModel(ModelShape shape, std::shared_ptr<const EmbeddingTable> embeddings, std::uint64_t seed,
                 ModelOptions options = {});
    SiameseModel(ModelShape shape, std::shared_ptr<const EmbeddingTable> embeddings, Parameters params,
                 std::uint64_t seed, ModelOptions options = {});

    const ModelShape& shape() const noexcept { return shape_; }
    const ModelOptions& options() const noexcept { return options_; }
    ModelOptions& options() noexcept { return options_; }
    std::uint64_t seed() const noexcept { return seed_; }
    Parameters& params() noexcept { return params_; }
    const Parameters& params() const noexcept { return params_; }
    const EmbeddingTable& embeddings() const { return *embeddings_; }
    std::shared_ptr<const EmbeddingTable> embeddings_ptr() const { return embeddings_; }

    /// Empty when the candidate or every query term lacks an embedding.
    std::optional<Sequence> sequence(std::span<const std::string> query_terms, const std::string& candidate) const;

    /// Representation vector (length r, positive, sums to one). Throws
    /// std::invalid_argument when the pair cannot be embedded.
    VectorXd encode(std::span<const std::string> query_terms, const std::string& candidate) const;
    VectorXd encode(const Sequence& sequence) const;

    /// Probability that the two encoded pairs share a class.
    double compare(const VectorXd& a, const VectorXd& b) const;

    void save(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;
    static SiameseModel load(std::istream& in, std::shared_ptr<const EmbeddingTable> embeddings);
    static SiameseModel load(const std::filesystem::path& path, std::shared_ptr<const EmbeddingTable> embeddings);

private:
    ModelShape shape_;
    std::shared_ptr<const EmbeddingTable> embeddings_;
    Parameters params_;
    std::uint64_t seed_;
    ModelOptions options_;
};

inline constexpr char kCheckpointMagic[4] = {'Q', 'X', 'D', 'M'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

// ---------------------------------------------------------------------------
// Pairs

/// Ordered pair of dataset example indices.
struct PairExample {
    std::size_t left;
    std::size_t right;
    bool same_class;

    friend bool operator==(const PairExample&, const PairExample&) = default;
};

/// All n(n-1) ordered pairs of distinct examples.
std::vector<PairExample> enumerate_pairs(std::span<const Label> labels);
std::vector<PairExample> enumerate_pairs(const LabeledDataset& dataset);

/// `count` random ordered pairs of distinct examples. With `balance`, the
/// first half of the draws are same-class pairs and the rest different-class
/// pairs, then the whole batch is shuffled; `count` must be even. Throws
/// std::invalid_argument if balancing is impossible (one class only, or no
/// class with two members).
std::vector<PairExample> sample_pairs(std::span<const Label> labels, std::size_t count, bool balance,
                                      std::mt19937_64& rng);
/// Pass kAllPairs as `count` for the exhaustive n(n-1) enumeration.
inline constexpr std::size_t kAllPairs = 0;
std::vector<PairExample> generate_pairs(const LabeledDataset& dataset, std::size_t count, bool balance,
                                        std::uint64_t seed);

/// How different-class pairs are presented to the signed comparison head.
/// AsSampled keeps the sampled left/right order, so each unordered pair is
/// seen both ways round. LabelOrdered puts the example with the better label
/// (Good > Neutral > Bad) on the right.
enum class PairOrder : std::uint8_t { LabelOrdered = 0, AsSampled = 1 };

std::string_view to_string(PairOrder order);
PairOrder parse_pair_order(std::string_view text);

/// Applies `order` in place; same-class pairs are left untouched.
void orient_pairs(std::span<PairExample> pairs, std::span<const Label> labels, PairOrder order);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t batch_size = 32;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t epochs = 10;
    std::size_t pairs_per_epoch = 50000;
    bool balance = true;
    PairOrder pair_order = PairOrder::LabelOrdered;
    std::uint64_t seed = 1;

    void validate() const;
};

class Adam {
public:
    Adam(const ModelShape& shape, double lr, double beta1, double beta2, double epsilon);
    void step(Parameters& params, const Parameters& grad);
    std::size_t steps() const noexcept { return t_; }

private:
    Parameters m_;
    Parameters v_;
    double lr_;
    double beta1_;
    double beta2_;
    double epsilon_;
    std::size_t t_ = 0;
};

struct LossRecord {
    std::size_t epoch;
    std::size_t batch;
    double loss;
};

struct TrainResult {
    std::vector<LossRecord> history;
    std::size_t trainable_examples = 0;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mini-batch Adam on pair cross-entropy. Examples whose candidate or whole
/// query lacks an embedding are left out. Embeddings are never modified.
/// Throws TrainingError on a non-finite loss.
TrainResult train(const LabeledDataset& dataset, const TrainConfig& config, SiameseModel& model);

void write_loss_csv(std::ostream& out, std::span<const LossRecord> history);
void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> history);

/// Fraction of pairs whose thresholded compare() matches same_class.
double pair_accuracy(const SiameseModel& model, const LabeledDataset& dataset, std::span<const PairExample> pairs);

// ---------------------------------------------------------------------------
// Inference

inline constexpr std::size_t kDefaultReferenceSize = 100;
inline constexpr double kSameClassThreshold = 0.5;

struct ReferenceItem {
    Tokens query_terms;
    std::string candidate;
    Label label;
};

/// Equal numbers of Good and Bad labeled pairs.
struct ReferenceSet {
    std::vector<ReferenceItem> items;

    void validate() const;
    std::size_t size() const noexcept { return items.size(); }
};

/// Draws size/2 Good and size/2 Bad examples that the model can embed. If a
/// class is short, the set shrinks to twice the smaller class (with a
/// warning). Throws std::invalid_argument if either class is empty.
ReferenceSet build_reference_set(const LabeledDataset& dataset, const EmbeddingTable& embeddings,
                                 std::size_t size, std::uint64_t seed);

/// (N_g + N_nb) / N where N_g counts "same" verdicts against Good references
/// and N_nb counts "different" verdicts against Bad references.
double p_good_from_outcomes(std::span<const Label> reference_labels, const std::vector<bool>& same_class);

/// Caches reference encodings so repeated p_good calls only encode the probe.
class GoodnessEstimator {
public:
    GoodnessEstimator(const SiameseModel& model, ReferenceSet refset);

    /// Zero when the pair cannot be embedded.
    double p_good(std::span<const std::string> query_terms, const std::string& candidate) const;
    const ReferenceSet& references() const noexcept { return refset_; }

private:
    const SiameseModel& model_;
    ReferenceSet refset_;
    std::vector<VectorXd> encoded_;
    std::vector<Label> labels_;
};

double p_good(std::span<const std::string> query_terms, const std::string& candidate, const SiameseModel& model,
              const ReferenceSet& refset);

// ---------------------------------------------------------------------------
// Gradient verification

struct TensorCheck {
    std::string name;
    std::size_t size = 0;
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
};

struct GradientCheckReport {
    std::vector<TensorCheck> tensors;
    double max_relative_error = 0.0;

    bool passed(double tolerance) const { return max_relative_error < tolerance; }
};

/// Compares backpropagated gradients of pair_loss against central
/// differences for every parameter. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradientCheckReport gradient_check(const Parameters& params, const Sequence& left, const Sequence& right,
                                   bool same_class, Pooling pooling, double step = 1e-5);
GradientCheckReport gradient_check(const SiameseModel& model, std::span<const std::string> left_query,
                                   const std::string& left_candidate, std::span<const std::string> right_query,
                                   const std::string& right_candidate, bool same_class, double step = 1e-5);

/// Small fixed model (d=4, h=3, r=4) with its own vocabulary, used by the
/// gradcheck command and tests.
SiameseModel make_toy_model(std::uint64_t seed, Pooling pooling = Pooling::FinalState);

}  // namespace qexp::dec
