#include "qexp/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <type_traits>
#include <variant>

#include <fmt/format.h>

namespace qexp {

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed is stored through the size_t field kind");

using Field = std::variant<std::string Config::*, double Config::*, std::size_t Config::*, unsigned Config::*,
                           bool Config::*>;

struct KeySpec {
    std::string_view key;
    Field field;
    std::string_view description;
};

const std::vector<KeySpec>& specs() {
    static const std::vector<KeySpec> table = {
        {"corpus", &Config::corpus, "TREC document file or directory"},
        {"topics", &Config::topics, "TREC topic file"},
        {"qrels", &Config::qrels, "TREC qrels file"},
        {"embeddings", &Config::embeddings, "word vectors in GloVe text format"},
        {"stopwords", &Config::stopwords, "stopword file (empty: bundled INQUERY list)"},
        {"index", &Config::index, "index file"},
        {"dataset", &Config::dataset, "labeled dataset TSV"},
        {"model", &Config::model, "model checkpoint"},
        {"output_dir", &Config::output_dir, "directory for runs and reports"},
        {"collection", &Config::collection, "collection name recorded in outputs"},
        {"mu", &Config::mu, "Dirichlet smoothing parameter"},
        {"depth", &Config::depth, "retrieval and evaluation depth"},
        {"m", &Config::m, "expansion terms added per query"},
        {"alpha", &Config::alpha, "DEC reweighting strength"},
        {"beta", &Config::beta, "original-query interpolation weight"},
        {"pool_size", &Config::pool_size, "candidate pool size"},
        {"eps", &Config::eps, "neutral band for AP change when labeling"},
        {"lr", &Config::lr, "Adam learning rate"},
        {"batch", &Config::batch, "mini-batch size in pairs"},
        {"epochs", &Config::epochs, "training epochs"},
        {"seed", &Config::seed, "seed for all randomness"},
        {"pair_budget", &Config::pair_budget, "training pairs sampled per epoch"},
        {"refset_size", &Config::refset_size, "reference set size (half Good, half Bad)"},
        {"adam_beta1", &Config::adam_beta1, "Adam first-moment decay"},
        {"adam_beta2", &Config::adam_beta2, "Adam second-moment decay"},
        {"adam_eps", &Config::adam_eps, "Adam epsilon"},
        {"hidden", &Config::hidden, "LSTM hidden size per direction"},
        {"representation", &Config::representation, "pair representation size"},
        {"pooling", &Config::pooling, "BiLSTM pooling: final or mean"},
        {"pair_order", &Config::pair_order, "different-class pair orientation: label or sampled"},
        {"symmetric_compare", &Config::symmetric_compare, "average both pair orders at inference"},
        {"folds", &Config::folds, "cross-validation folds"},
        {"workers", &Config::workers, "worker threads (0: all cores, 1: serial)"},
    };
    return table;
}

const KeySpec& spec_for(std::string_view key) {
    for (const auto& s : specs()) {
        if (s.key == key) return s;
    }
    throw ConfigError(fmt::format("unknown config key '{}'", key));
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end || value.empty()) {
        throw ConfigError(fmt::format("config key '{}': cannot parse '{}'", key, value));
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError(fmt::format("config key '{}': expected true or false, got '{}'", key, value));
}

}  // namespace

void Config::set(std::string_view key, std::string_view value) {
    const auto& spec = spec_for(key);
    value = trim(value);
    std::visit(
        [&](auto member) {
            using T = std::remove_reference_t<decltype(this->*member)>;
            if constexpr (std::is_same_v<T, std::string>) {
                this->*member = std::string(value);
            } else if constexpr (std::is_same_v<T, bool>) {
                this->*member = parse_bool(key, value);
            } else {
                this->*member = parse_number<T>(key, value);
            }
        },
        spec.field);
}

std::string Config::get(std::string_view key) const {
    const auto& spec = spec_for(key);
    return std::visit(
        [&](auto member) -> std::string {
            using T = std::remove_cvref_t<decltype(this->*member)>;
            if constexpr (std::is_same_v<T, std::string>) {
                return this->*member;
            } else if constexpr (std::is_same_v<T, bool>) {
                return (this->*member) ? "true" : "false";
            } else {
                return fmt::format("{}", this->*member);
            }
        },
        spec.field);
}

const std::vector<std::string>& Config::keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& s : specs()) out.emplace_back(s.key);
        return out;
    }();
    return names;
}

std::string_view Config::describe(std::string_view key) {
    return spec_for(key).description;
}

void Config::load_string(std::string_view text, std::string_view origin) {
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line(raw);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(fmt::format("{}:{}: expected 'key = value'", origin, line_no));
        }
        const auto key = trim(line.substr(0, eq));
        try {
            set(key, line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("{}:{}: {}", origin, line_no, e.what()));
        }
    }
}

void Config::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    load_string(buf.str(), path.string());
}

void Config::apply_environment(const std::function<const char*(const char*)>& lookup) {
    for (const auto& key : keys()) {
        std::string var = "QEXP_" + key;
        std::transform(var.begin(), var.end(), var.begin(),
                       [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
        if (const char* value = lookup(var.c_str())) {
            try {
                set(key, value);
            } catch (const ConfigError& e) {
                throw ConfigError(fmt::format("environment {}: {}", var, e.what()));
            }
        }
    }
}

void Config::apply_environment() {
    apply_environment([](const char* name) { return std::getenv(name); });
}

void Config::validate() const {
    auto fail = [](std::string_view key, std::string_view why) {
        throw ConfigError(fmt::format("config key '{}': {}", key, why));
    };
    if (!(mu > 0.0)) fail("mu", "must be > 0");
    if (depth < 1) fail("depth", "must be >= 1");
    if (m < 1) fail("m", "must be >= 1");
    if (!(alpha >= 0.0)) fail("alpha", "must be >= 0");
    if (!(beta >= 0.0 && beta <= 1.0)) fail("beta", "must be in [0, 1]");
    if (pool_size < 1) fail("pool_size", "must be >= 1");
    if (!(eps >= 0.0)) fail("eps", "must be >= 0");
    if (!(lr > 0.0)) fail("lr", "must be > 0");
    if (batch < 1) fail("batch", "must be >= 1");
    if (pair_budget < 2 || pair_budget % 2 != 0) fail("pair_budget", "must be even and >= 2");
    if (refset_size < 2 || refset_size % 2 != 0) fail("refset_size", "must be even and >= 2");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1", "must be in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2", "must be in [0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps", "must be > 0");
    if (hidden < 1) fail("hidden", "must be >= 1");
    if (representation < 1) fail("representation", "must be >= 1");
    if (pooling != "final" && pooling != "mean") fail("pooling", "must be 'final' or 'mean'");
    if (pair_order != "label" && pair_order != "sampled") fail("pair_order", "must be 'label' or 'sampled'");
    if (folds < 2) fail("folds", "must be >= 2");
}

LabelingConfig Config::labeling() const {
    return {pool_size, eps, retrieval(), collection, workers};
}

dec::TrainConfig Config::training() const {
    dec::TrainConfig t;
    t.learning_rate = lr;
    t.batch_size = batch;
    t.adam_beta1 = adam_beta1;
    t.adam_beta2 = adam_beta2;
    t.adam_epsilon = adam_eps;
    t.epochs = epochs;
    t.pairs_per_epoch = pair_budget;
    t.pair_order = dec::parse_pair_order(pair_order);
    t.seed = seed + 1;
    return t;
}

dec::ModelOptions Config::model_options() const {
    return {pooling == "mean" ? dec::Pooling::Mean : dec::Pooling::FinalState, symmetric_compare};
}

ExperimentConfig Config::experiment() const {
    ExperimentConfig e;
    e.retrieval = retrieval();
    e.expansion = expansion();
    e.training = training();
    e.hidden = hidden;
    e.representation = representation;
    e.model_options = model_options();
    e.reference_size = refset_size;
    e.folds = folds;
    e.seed = seed;
    e.workers = workers;
    return e;
}

}  // namespace qexp
