#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qexp/collection.hpp"
#include "qexp/config.hpp"
#include "qexp/dec_model.hpp"
#include "qexp/embeddings.hpp"
#include "qexp/evaluation.hpp"
#include "qexp/expansion.hpp"
#include "qexp/experiment.hpp"
#include "qexp/labeling.hpp"
#include "qexp/retrieval.hpp"

namespace fs = std::filesystem;
using namespace qexp;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-subcommand flag storage: every config key becomes --key (and
/// --key-with-dashes), plus --config.
struct CommonOptions {
    std::string config_path;
    std::map<std::string, std::string> overrides;
    bool verbose = false;
};

void add_common_options(CLI::App& cmd, CommonOptions& opts) {
    cmd.add_option("--config", opts.config_path, "flat key = value configuration file");
    cmd.add_flag("-v,--verbose", opts.verbose, "log progress");
    for (const auto& key : Config::keys()) {
        std::string names = "--" + key;
        std::string dashed = key;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        if (dashed != key) names += ",--" + dashed;
        cmd.add_option(names, opts.overrides[key], std::string(Config::describe(key)));
    }
}

Config resolve_config(CLI::App& cmd, const CommonOptions& opts) {
    Config cfg;
    if (!opts.config_path.empty()) cfg.load_file(opts.config_path);
    cfg.apply_environment();
    for (const auto& [key, value] : opts.overrides) {
        if (cmd.get_option("--" + key)->count() > 0) cfg.set(key, value);
    }
    cfg.validate();
    spdlog::set_level(opts.verbose ? spdlog::level::info : spdlog::level::warn);
    return cfg;
}

const std::string& require(const std::string& key, const std::string& value) {
    if (value.empty()) throw UsageError(fmt::format("config key '{}' is required for this command", key));
    return value;
}

fs::path require_file(const std::string& key, const std::string& value) {
    const fs::path p = require(key, value);
    if (!fs::exists(p)) throw UsageError(fmt::format("config key '{}': '{}' does not exist", key, p.string()));
    return p;
}

StopwordSet stopwords_for(const Config& cfg) {
    if (cfg.stopwords.empty()) return inquery_stopwords();
    return load_stopwords(require_file("stopwords", cfg.stopwords));
}

fs::path output_path(const Config& cfg, const std::string& name) {
    fs::create_directories(cfg.output_dir);
    return fs::path(cfg.output_dir) / name;
}

std::shared_ptr<const EmbeddingTable> embeddings_for(const Config& cfg,
                                                     const std::unordered_set<std::string>& vocabulary) {
    const auto path = require_file("embeddings", cfg.embeddings);
    spdlog::info("loading embeddings from {}", path.string());
    return std::make_shared<const EmbeddingTable>(load_embeddings(path, &vocabulary));
}

std::unordered_set<std::string> vocabulary_of(const InvertedIndex& idx, std::span<const Topic> topics) {
    std::unordered_set<std::string> vocab(idx.vocabulary().begin(), idx.vocabulary().end());
    for (const auto& t : topics) vocab.insert(t.title_terms.begin(), t.title_terms.end());
    return vocab;
}

InvertedIndex load_index(const Config& cfg) {
    return InvertedIndex::load(require_file("index", cfg.index));
}

std::vector<Topic> load_topics_for(const Config& cfg, const StopwordSet& stopwords) {
    return load_topics(require_file("topics", cfg.topics), stopwords);
}

int cmd_index(const Config& cfg) {
    const auto stopwords = stopwords_for(cfg);
    const auto docs = ingest_trec_docs(require_file("corpus", cfg.corpus), stopwords);
    const auto idx = build_index(docs, cfg.workers);
    idx.save(fs::path(cfg.index));
    fmt::print("indexed {} documents, {} terms, {} tokens -> {}\n", idx.num_docs(), idx.vocabulary_size(),
               idx.total_tokens(), cfg.index);
    return 0;
}

int cmd_label(const Config& cfg) {
    const auto stopwords = stopwords_for(cfg);
    const auto idx = load_index(cfg);
    const auto topics = load_topics_for(cfg, stopwords);
    const auto qrels = load_qrels(require_file("qrels", cfg.qrels));
    const auto table = embeddings_for(cfg, vocabulary_of(idx, topics));

    const auto dataset = build_dataset(topics, idx, qrels, *table, stopwords, cfg.labeling());
    write_dataset(fs::path(cfg.dataset), dataset);
    const auto oracle = oracle_run(dataset, topics, idx, qrels, cfg.retrieval());
    const auto report = format_label_report(label_statistics(dataset), oracle, cfg.collection);
    std::ofstream(output_path(cfg, "label_report.txt")) << report;
    fmt::print("{}wrote {} labeled examples -> {}\n", report, dataset.examples.size(), cfg.dataset);
    return 0;
}

std::unordered_set<std::string> vocabulary_of(const LabeledDataset& dataset) {
    std::unordered_set<std::string> vocab;
    for (const auto& ex : dataset.examples) {
        vocab.insert(ex.candidate);
        vocab.insert(ex.query_terms.begin(), ex.query_terms.end());
    }
    return vocab;
}

int cmd_train(const Config& cfg) {
    const auto dataset = read_dataset(require_file("dataset", cfg.dataset));
    const auto table = embeddings_for(cfg, vocabulary_of(dataset));
    const dec::ModelShape shape{table->dim(), cfg.hidden, cfg.representation};
    dec::SiameseModel model(shape, table, cfg.seed, cfg.model_options());
    const auto result = dec::train(dataset, cfg.training(), model);
    model.save(fs::path(cfg.model));
    const auto loss_path = output_path(cfg, "loss.csv");
    dec::write_loss_csv(loss_path, result.history);
    const double final_loss = result.history.empty() ? 0.0 : result.history.back().loss;
    fmt::print("trained on {} examples, {} batches, final batch loss {:.6f}\nmodel -> {}\nloss curve -> {}\n",
               result.trainable_examples, result.history.size(), final_loss, cfg.model, loss_path.string());
    return 0;
}

int cmd_expand(const Config& cfg, const std::string& method_name) {
    const auto method = parse_method(method_name);
    const auto stopwords = stopwords_for(cfg);
    const auto idx = load_index(cfg);
    const auto topics = load_topics_for(cfg, stopwords);

    std::shared_ptr<const EmbeddingTable> table;
    std::optional<LabeledDataset> dataset;
    if (method != Method::Qlm) {
        auto vocab = vocabulary_of(idx, topics);
        if (method == Method::Dec) {
            dataset = read_dataset(require_file("dataset", cfg.dataset));
            vocab.merge(vocabulary_of(*dataset));
        }
        table = embeddings_for(cfg, vocab);
    } else {
        table = std::make_shared<const EmbeddingTable>();
    }

    std::optional<dec::SiameseModel> model;
    std::optional<dec::GoodnessEstimator> estimator;
    GoodnessFn goodness;
    if (method == Method::Dec) {
        model.emplace(dec::SiameseModel::load(require_file("model", cfg.model), table));
        model->options().symmetric_compare = cfg.symmetric_compare;
        auto refset = dec::build_reference_set(*dataset, *table, cfg.refset_size, cfg.seed + 2);
        estimator.emplace(*model, std::move(refset));
        goodness = [&](std::span<const std::string> q, const std::string& x) { return estimator->p_good(q, x); };
    }

    const auto queries = build_queries(method, topics, idx, *table, stopwords, cfg.expansion(), goodness);
    const auto runs = retrieve_all(queries, idx, cfg.mu, cfg.depth, cfg.workers);
    const auto run_path = output_path(cfg, fmt::format("run.{}.txt", to_string(method)));
    write_run(run_path, runs, fmt::format("qexp-{}", to_string(method)));
    write_query_models(output_path(cfg, fmt::format("queries.{}.tsv", to_string(method))), queries);
    fmt::print("{} queries -> {}\n", runs.size(), run_path.string());
    return 0;
}

int cmd_eval(const Config& cfg, const std::vector<std::string>& method_names) {
    std::vector<Method> methods;
    for (const auto& name : method_names) methods.push_back(parse_method(name));
    if (methods.empty()) methods.assign(std::begin(kAllMethods), std::end(kAllMethods));

    const auto stopwords = stopwords_for(cfg);
    const auto idx = load_index(cfg);
    const auto topics = load_topics_for(cfg, stopwords);
    const auto qrels = load_qrels(require_file("qrels", cfg.qrels));
    std::optional<LabeledDataset> dataset;
    auto vocab = vocabulary_of(idx, topics);
    if (std::find(methods.begin(), methods.end(), Method::Dec) != methods.end()) {
        dataset = read_dataset(require_file("dataset", cfg.dataset));
        vocab.merge(vocabulary_of(*dataset));
    }
    const auto table = embeddings_for(cfg, vocab);

    ExperimentInputs inputs;
    inputs.topics = topics;
    inputs.index = &idx;
    inputs.qrels = &qrels;
    inputs.embeddings = table;
    inputs.stopwords = &stopwords;
    inputs.dataset = dataset ? &*dataset : nullptr;

    const auto report = cross_validate(inputs, methods, cfg.experiment());
    const auto text = format_report(report);
    std::ofstream(output_path(cfg, "report.txt")) << text;
    std::ofstream tsv(output_path(cfg, "report.tsv"));
    write_report_tsv(tsv, report);
    std::ofstream csv(output_path(cfg, "per_query.csv"));
    write_per_query_csv(csv, report);
    fmt::print("{}", text);
    return 0;
}

int cmd_gradcheck(const Config& cfg, double tolerance) {
    bool all_passed = true;
    for (auto pooling : {dec::Pooling::FinalState, dec::Pooling::Mean}) {
        const auto model = dec::make_toy_model(cfg.seed, pooling);
        const std::vector<std::string> q1{"alpha", "beta"};
        const std::vector<std::string> q2{"gamma"};
        for (bool same : {true, false}) {
            const auto report = dec::gradient_check(model, q1, "delta", q2, "epsilon", same);
            fmt::print("pooling={} same_class={}\n", pooling == dec::Pooling::Mean ? "mean" : "final", same);
            for (const auto& t : report.tensors) {
                fmt::print("  {:<20} n={:<4} max_rel={:.3e} max_abs={:.3e}\n", t.name, t.size, t.max_relative_error,
                           t.max_absolute_error);
            }
            const bool ok = report.passed(tolerance);
            all_passed = all_passed && ok;
            fmt::print("  max relative error {:.3e} (tolerance {:.0e}): {}\n", report.max_relative_error, tolerance,
                       ok ? "PASS" : "FAIL");
        }
    }
    return all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Embedding-based query expansion with a learned term-goodness classifier"};
    app.require_subcommand(1);

    CommonOptions index_opts, label_opts, train_opts, expand_opts, eval_opts, grad_opts;
    auto* index = app.add_subcommand("index", "Tokenize a TREC collection and write the inverted index");
    add_common_options(*index, index_opts);
    auto* label = app.add_subcommand("label", "Label candidate expansion terms Good, Neutral or Bad by AP change");
    add_common_options(*label, label_opts);
    auto* train = app.add_subcommand("train", "Train the siamese BiLSTM term classifier");
    add_common_options(*train, train_opts);
    auto* expand = app.add_subcommand("expand", "Expand the topics with one method and write a run file");
    add_common_options(*expand, expand_opts);
    std::string method = "qlm";
    expand->add_option("--method", method, "qlm, awe, eqe1 or dec")
        ->check(CLI::IsMember({"qlm", "awe", "eqe1", "dec"}));
    auto* eval = app.add_subcommand("eval", "Cross-validated comparison of all methods");
    add_common_options(*eval, eval_opts);
    std::vector<std::string> methods;
    eval->add_option("--methods", methods, "subset of qlm, awe, eqe1, dec (default: all)")
        ->check(CLI::IsMember({"qlm", "awe", "eqe1", "dec"}));
    auto* grad = app.add_subcommand("gradcheck", "Check backpropagation against finite differences on a toy model");
    add_common_options(*grad, grad_opts);
    double tolerance = 1e-4;
    grad->add_option("--tolerance", tolerance, "maximum relative error")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*index) return cmd_index(resolve_config(*index, index_opts));
        if (*label) return cmd_label(resolve_config(*label, label_opts));
        if (*train) return cmd_train(resolve_config(*train, train_opts));
        if (*expand) return cmd_expand(resolve_config(*expand, expand_opts), method);
        if (*eval) return cmd_eval(resolve_config(*eval, eval_opts), methods);
        if (*grad) return cmd_gradcheck(resolve_config(*grad, grad_opts), tolerance);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "qexp: error: %s\n", e.what());
        return 1;
    }
    return 2;
}
