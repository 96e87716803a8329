#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "qexp/dec_model.hpp"
#include "qexp/experiment.hpp"
#include "qexp/expansion.hpp"
#include "qexp/labeling.hpp"

namespace qexp {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Settings shared by every qexp subcommand. Precedence, lowest first:
/// built-in defaults, config file, QEXP_<KEY> environment variables,
/// command-line flags.
struct Config {
    // paths
    std::string corpus;
    std::string topics;
    std::string qrels;
    std::string embeddings;
    std::string stopwords;  // empty: bundled INQUERY list
    std::string index = "index.qxix";
    std::string dataset = "dataset.tsv";
    std::string model = "model.qxdm";
    std::string output_dir = ".";
    std::string collection;

    // retrieval
    double mu = kDefaultMu;
    std::size_t depth = kDefaultDepth;

    // expansion
    std::size_t m = 10;
    double alpha = 1.0;
    double beta = 0.5;
    std::size_t pool_size = kDefaultPoolSize;

    // labeling
    double eps = kDefaultNeutralityEps;

    // training
    double lr = 0.001;
    std::size_t batch = 32;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;
    std::size_t pair_budget = 50000;
    std::size_t refset_size = dec::kDefaultReferenceSize;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t hidden = 200;
    std::size_t representation = 400;
    std::string pooling = "final";
    std::string pair_order = "label";
    bool symmetric_compare = false;

    // evaluation
    std::size_t folds = 5;

    unsigned workers = 0;  // 0: hardware concurrency

    /// Throws ConfigError naming the key for unknown keys or bad values.
    void set(std::string_view key, std::string_view value);
    std::string get(std::string_view key) const;
    static const std::vector<std::string>& keys();
    static std::string_view describe(std::string_view key);

    /// `key = value` lines; '#' starts a comment.
    void load_file(const std::filesystem::path& path);
    void load_string(std::string_view text, std::string_view origin = "<string>");
    /// Applies QEXP_<UPPERCASE_KEY> variables found through `lookup`.
    void apply_environment(const std::function<const char*(const char*)>& lookup);
    void apply_environment();

    /// Range checks for every numeric field.
    void validate() const;

    RetrievalSettings retrieval() const { return {mu, depth}; }
    ExpansionConfig expansion() const { return {m, alpha, beta, pool_size}; }
    LabelingConfig labeling() const;
    dec::TrainConfig training() const;
    dec::ModelOptions model_options() const;
    ExperimentConfig experiment() const;
};

}  // namespace qexp
