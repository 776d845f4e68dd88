#ifndef ENGNN_CLI_HPP
#define ENGNN_CLI_HPP

// Command-line verbs: gen-data, train, check, report.
// Exit codes: 0 success, 1 runtime or experiment failure, 2 usage or config error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "engnn/checks.hpp"
#include "engnn/datasets.hpp"
#include "engnn/jsonl.hpp"
#include "engnn/subgraph_tasks.hpp"
#include "engnn/train.hpp"

namespace engnn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Error carrying the exit code it should produce.
class CliError : public std::runtime_error {
public:
    CliError(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
    int code() const noexcept { return code_; }

private:
    int code_;
};

// --- data tasks --------------------------------------------------------------

enum class TaskFamily { Count, Subgraph, CslPairs };

struct TaskSpec {
    TaskFamily family = TaskFamily::Count;
    PatternKind pattern = PatternKind::C3;
    SubgraphTask subgraph = SubgraphTask::Density;
    std::string label;

    TaskLevel level() const {
        switch (family) {
            case TaskFamily::Count: return TaskLevel::Node;
            case TaskFamily::Subgraph: return TaskLevel::Subset;
            case TaskFamily::CslPairs: return TaskLevel::Graph;
        }
        return TaskLevel::Node;
    }
    LossKind loss() const { return family == TaskFamily::Count ? LossKind::L1 : LossKind::CrossEntropy; }
    std::size_t output_dim() const {
        return family == TaskFamily::Count ? 1 : family == TaskFamily::Subgraph ? 3 : 2;
    }
};

/// Parses count:<pattern>, subgraph:<density|cutratio|component> or csl-pairs.
inline std::optional<TaskSpec> parse_task(std::string_view s) {
    TaskSpec t;
    t.label = std::string(s);
    if (s == "csl-pairs") {
        t.family = TaskFamily::CslPairs;
        return t;
    }
    const auto colon = s.find(':');
    if (colon == std::string_view::npos) return std::nullopt;
    const std::string_view head = s.substr(0, colon), tail = s.substr(colon + 1);
    if (head == "count") {
        auto p = parse_pattern(tail);
        if (!p) return std::nullopt;
        t.family = TaskFamily::Count;
        t.pattern = *p;
        return t;
    }
    if (head == "subgraph") {
        auto k = parse_subgraph_task(tail);
        if (!k) return std::nullopt;
        t.family = TaskFamily::Subgraph;
        t.subgraph = *k;
        return t;
    }
    return std::nullopt;
}

struct DataSpec {
    TaskSpec task;
    std::size_t n = 16;
    std::size_t count = 100;
    std::uint64_t seed = 0;
    double p = 0.3;
    std::string path;  // read from JSONL instead of generating when set
};

inline Dataset generate_dataset(const DataSpec& d) {
    switch (d.task.family) {
        case TaskFamily::Count: return gen_count_dataset(d.task.pattern, d.n, d.count, d.seed, d.p);
        case TaskFamily::Subgraph: return gen_subgraph_task(d.task.subgraph, d.n, d.count, d.seed);
        case TaskFamily::CslPairs: return gen_csl_pair(d.n, 2, 3);
    }
    return {};
}

inline void check_data_spec(const DataSpec& d) {
    if (d.task.family == TaskFamily::Count && (d.n < 1 || d.count < 1))
        throw ConfigError("count tasks need n >= 1 and count >= 1");
    if (d.task.family == TaskFamily::Count && !(d.p >= 0.0 && d.p <= 1.0))
        throw ConfigError("edge probability must lie in [0, 1]");
    if (d.task.family == TaskFamily::Subgraph && (d.n < 8 || d.count < 1))
        throw ConfigError("subgraph tasks need n >= 8 and count >= 1");
    if (d.task.family == TaskFamily::CslPairs && d.n < 7)
        throw ConfigError("csl-pairs needs n >= 7 so that skips 2 and 3 give distinct circulants");
}

/// One-line description of a dataset: record count, node total, label range.
inline std::string dataset_summary(const DataSpec& spec, const Dataset& data) {
    std::ostringstream os;
    std::size_t nodes = 0;
    double lo = INFINITY, hi = -INFINITY, sum = 0.0;
    std::size_t labels = 0;
    for (const Graph& g : data) {
        nodes += g.node_count();
        if (!g.targets()) continue;
        for (double v : g.targets()->values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
            ++labels;
        }
    }
    os << "task=" << spec.task.label << " records=" << data.size() << " nodes=" << nodes << " labels=" << labels;
    if (labels > 0) os << " min=" << lo << " max=" << hi << " mean=" << format_value(sum / static_cast<double>(labels));
    if (spec.task.family == TaskFamily::CslPairs && data.size() == 2) {
        os << " wl_equal=" << (wl_equivalent(data[0], data[1], data[0].node_count()) ? "yes" : "no")
           << " spectrally_distinct=" << (spectrally_distinct(data[0], data[1]) ? "yes" : "no");
    }
    return os.str();
}

// --- run configuration -------------------------------------------------------

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DataSpec data;
    std::string output_dir;
    std::string run_id;
};

namespace detail {

inline double json_real(const nlohmann::json& j, const std::string& where) {
    if (!j.is_number()) throw ConfigError(where + " must be a number");
    return j.get<double>();
}

inline const nlohmann::json& section(const nlohmann::json& root, const char* name, bool required) {
    static const nlohmann::json empty = nlohmann::json::object();
    if (!root.contains(name)) {
        if (required) throw ConfigError(std::string("config needs a '") + name + "' section");
        return empty;
    }
    const nlohmann::json& s = root.at(name);
    if (!s.is_object()) throw ConfigError(std::string("config section '") + name + "' must be an object");
    return s;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig t;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        const std::string where = "train." + key;
        if (key == "epochs") t.epochs = json_count(*it, where);
        else if (key == "batch_size") t.batch_size = json_count(*it, where);
        else if (key == "lr") t.lr = json_real(*it, where);
        else if (key == "weight_decay") t.weight_decay = json_real(*it, where);
        else if (key == "seed") t.seed = json_count(*it, where);
        else if (key == "patience") t.patience = json_count(*it, where);
        else if (key == "eval_every") t.eval_every = json_count(*it, where);
        else if (key == "restarts") t.restarts = json_count(*it, where);
        else if (key == "valid_fraction") t.valid_fraction = json_real(*it, where);
        else if (key == "test_fraction") t.test_fraction = json_real(*it, where);
        else if (key == "loss") {
            auto k = parse_loss_kind(json_string(*it, where));
            if (!k) throw ConfigError(where + " must be l1 or cross_entropy");
            t.loss = *k;
        } else {
            throw ConfigError("unknown key " + where);
        }
    }
    return t;
}

inline DataSpec data_spec_from_json(const nlohmann::json& j) {
    DataSpec d;
    bool have_task = false, have_n = false;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        const std::string where = "data." + key;
        if (key == "task") {
            const std::string s = json_string(*it, where);
            auto t = parse_task(s);
            if (!t) throw ConfigError(where + ": unknown task '" + s + "'");
            d.task = *t;
            have_task = true;
        } else if (key == "n") {
            d.n = json_count(*it, where);
            have_n = true;
        } else if (key == "count") d.count = json_count(*it, where);
        else if (key == "seed") d.seed = json_count(*it, where);
        else if (key == "p") d.p = json_real(*it, where);
        else if (key == "path") d.path = json_string(*it, where);
        else throw ConfigError("unknown key " + where);
    }
    if (!have_task) throw ConfigError("data.task is required");
    if (!have_n && d.task.family == TaskFamily::CslPairs) d.n = 11;
    check_data_spec(d);
    return d;
}

}  // namespace detail

/// Parses a run configuration. The data task fixes the model's task level,
/// output width and loss; explicit values that disagree are rejected.
inline RunConfig run_config_from_json(const nlohmann::json& root) {
    if (!root.is_object()) throw ConfigError("config must be a JSON object");
    for (auto it = root.begin(); it != root.end(); ++it)
        if (it.key() != "model" && it.key() != "train" && it.key() != "data" && it.key() != "output")
            throw ConfigError("unknown config section '" + it.key() + "'");
    RunConfig rc;
    rc.data = detail::data_spec_from_json(detail::section(root, "data", true));

    const nlohmann::json& model = detail::section(root, "model", false);
    rc.model = model_config_from_json(model);
    const TaskSpec& task = rc.data.task;
    if (model.contains("task_level") && rc.model.task_level != task.level())
        throw ConfigError("model.task_level conflicts with data.task " + task.label);
    if (model.contains("output_dim") && rc.model.output_dim != task.output_dim())
        throw ConfigError("model.output_dim conflicts with data.task " + task.label);
    rc.model.task_level = task.level();
    rc.model.output_dim = task.output_dim();

    const nlohmann::json& train = detail::section(root, "train", false);
    rc.train = detail::train_config_from_json(train);
    if (train.contains("loss") && rc.train.loss != task.loss())
        throw ConfigError("train.loss conflicts with data.task " + task.label);
    rc.train.loss = task.loss();
    rc.train.validate();

    const nlohmann::json& output = detail::section(root, "output", true);
    for (auto it = output.begin(); it != output.end(); ++it) {
        if (it.key() == "directory") rc.output_dir = detail::json_string(*it, "output.directory");
        else if (it.key() == "run_id") rc.run_id = detail::json_string(*it, "output.run_id");
        else throw ConfigError("unknown key output." + it.key());
    }
    if (rc.output_dir.empty()) throw ConfigError("output.directory is required");
    return rc;
}

/// Applies ENGNN_SEED, when set, as the training seed.
inline void apply_seed_override(RunConfig& rc, const char* env) {
    if (!env) return;
    const std::string s(env);
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || s.front() == '-')
        throw ConfigError("ENGNN_SEED must be a non-negative integer, got '" + s + "'");
    rc.train.seed = v;
}

// --- commands ----------------------------------------------------------------

inline int cmd_gen_data(const DataSpec& spec, const std::string& out_path, std::ostream& out) {
    check_data_spec(spec);
    Dataset data = generate_dataset(spec);
    write_jsonl(out_path, data);
    out << dataset_summary(spec, data) << '\n';
    return kExitOk;
}

inline int cmd_train(RunConfig rc, std::ostream& out) {
    namespace fs = std::filesystem;
    const std::string variant(variant_name(rc.model.variant));
    if (rc.run_id.empty()) rc.run_id = variant + "-seed" + std::to_string(rc.train.seed);
    const Dataset data = rc.data.path.empty() ? generate_dataset(rc.data) : read_jsonl(rc.data.path);
    if (!data.empty() && data.front().input_features().dim(1) != rc.model.feature_dim)
        throw ConfigError("dataset graphs carry " + std::to_string(data.front().input_features().dim(1)) +
                          " feature columns but model.feature_dim is " + std::to_string(rc.model.feature_dim));
    fs::create_directories(rc.output_dir);

    std::vector<MetricRow> rows;
    const MetricRow base{rc.run_id, rc.data.task.label, variant, "", "", 0.0, rc.train.seed};
    TensorSet params;
    if (rc.data.task.family == TaskFamily::CslPairs) {
        if (data.size() != 2) throw ConfigError("csl-pairs needs exactly two graphs");
        const DiscriminationReport rep = discrimination_experiment(data[0], data[1], rc.model, rc.train);
        auto add = [&](const char* split, const char* metric, double v) {
            MetricRow r = base;
            r.split = split;
            r.metric = metric;
            r.value = v;
            rows.push_back(r);
        };
        add("train", "accuracy", rep.train_accuracy);
        add("held_out_draws", "accuracy", rep.held_out_accuracy);
        params = rep.params;
        out << "train accuracy " << format_value(rep.train_accuracy) << ", held-out per-draw accuracy "
            << format_value(rep.held_out_accuracy) << " (" << rep.epochs_run << " epochs, attempt "
            << rep.restart + 1 << " of " << rc.train.restarts << ")\n";
    } else {
        const Experiment ex = run_experiment(rc.model, rc.train, data);
        for (auto [split, m] : {std::pair{"train", &ex.train}, {"valid", &ex.valid}, {"test", &ex.test}}) {
            if (std::string(split) == "valid" && rc.train.valid_fraction == 0.0) continue;
            if (std::string(split) == "test" && rc.train.test_fraction == 0.0) continue;
            MetricRow r = base;
            r.split = split;
            append_metric_rows(rows, r, rc.train.loss, *m);
        }
        params = ex.trained.params;
        std::ofstream hist(fs::path(rc.output_dir) / "history.csv", std::ios::binary);
        write_history_csv(hist, ex.trained.history);
        const bool regression = rc.train.loss == LossKind::L1;
        out << "best epoch " << ex.trained.best_epoch << " of " << ex.trained.epochs_run << "; test "
            << (regression ? "NMAE " : "accuracy ") << format_value(regression ? ex.test.nmae : ex.test.accuracy)
            << '\n';
    }
    save_checkpoint((fs::path(rc.output_dir) / "checkpoint.json").string(), rc.model, params);
    std::ofstream csv(fs::path(rc.output_dir) / "metrics.csv", std::ios::binary);
    write_metrics_csv(csv, rows);
    if (!csv) throw std::runtime_error("cannot write metrics.csv under " + rc.output_dir);
    out << "wrote " << (fs::path(rc.output_dir) / "metrics.csv").string() << " and checkpoint.json\n";
    return kExitOk;
}

inline int cmd_check(const std::string& what, std::uint64_t seed, std::optional<std::size_t> trials,
                     std::ostream& out) {
    CheckReport rep;
    if (what == "equivariance") rep = equivariance_check(seed, trials.value_or(100));
    else if (what == "gradients") rep = gradient_check(seed, trials.value_or(1));
    else if (what == "covering") {
        std::vector<std::vector<CoveringRow>> tables;
        rep = covering_check(seed, default_covering_cases(), &tables);
    } else if (what == "expectation") rep = expectation_check(seed, trials.value_or(10));
    else throw CliError(kExitUsage, "unknown check '" + what + "'");
    for (const auto& line : rep.lines) out << line << '\n';
    out << rep.name << ": " << (rep.pass ? "PASS" : "FAIL") << '\n';
    return rep.pass ? kExitOk : kExitFailure;
}

struct ReportTable {
    std::vector<std::string> merged;  // CSV lines without the header
    struct Row {
        std::string task, variant, split, metric;
        std::size_t seeds = 0;
        double median = 0.0;
    };
    std::vector<Row> rows;
};

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Merges metric CSVs and takes the median of each (task, variant, split,
/// metric) group over the runs that report it.
inline ReportTable build_report(const std::vector<std::string>& inputs) {
    if (inputs.empty()) throw CliError(kExitUsage, "report needs at least one input CSV");
    ReportTable t;
    std::map<std::tuple<std::string, std::string, std::string, std::string>, std::vector<double>> groups;
    for (const std::string& path : inputs) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw CliError(kExitUsage, "cannot read " + path);
        std::string line;
        if (!std::getline(in, line) || line != kMetricsHeader)
            throw CliError(kExitUsage, path + ": header is not '" + std::string(kMetricsHeader) + "'");
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::vector<std::string> f;
            std::stringstream ss(line);
            for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
            double value = 0.0;
            try {
                std::size_t used = 0;
                if (f.size() != 7) throw std::invalid_argument("field count");
                value = std::stod(f[5], &used);
                if (used != f[5].size()) throw std::invalid_argument("value");
            } catch (const std::exception&) {
                throw CliError(kExitUsage, path + ":" + std::to_string(lineno) + ": malformed metrics row");
            }
            groups[{f[1], f[2], f[3], f[4]}].push_back(value);
            t.merged.push_back(line);
        }
    }
    for (auto& [key, values] : groups) {
        const auto& [task, variant, split, metric] = key;
        t.rows.push_back({task, variant, split, metric, values.size(), median_of(values)});
    }
    return t;
}

inline void print_report(const ReportTable& t, std::ostream& out) {
    std::size_t w_task = 4, w_var = 7, w_split = 5, w_metric = 6;
    for (const auto& r : t.rows) {
        w_task = std::max(w_task, r.task.size());
        w_var = std::max(w_var, r.variant.size());
        w_split = std::max(w_split, r.split.size());
        w_metric = std::max(w_metric, r.metric.size());
    }
    auto cell = [&out](const std::string& s, std::size_t w) { out << std::left << std::setw(static_cast<int>(w + 2)) << s; };
    cell("task", w_task);
    cell("variant", w_var);
    cell("split", w_split);
    cell("metric", w_metric);
    out << "runs  median\n";
    for (const auto& r : t.rows) {
        cell(r.task, w_task);
        cell(r.variant, w_var);
        cell(r.split, w_split);
        cell(r.metric, w_metric);
        out << std::left << std::setw(6) << r.seeds << format_value(r.median) << '\n';
    }
}

inline int cmd_report(const std::vector<std::string>& inputs, const std::string& merged_path, std::ostream& out) {
    const ReportTable t = build_report(inputs);
    if (!merged_path.empty()) {
        std::ofstream m(merged_path, std::ios::binary);
        if (!m) throw std::runtime_error("cannot write " + merged_path);
        m << kMetricsHeader << '\n';
        for (const auto& line : t.merged) m << line << '\n';
    } else {
        out << kMetricsHeader << '\n';
        for (const auto& line : t.merged) out << line << '\n';
        out << '\n';
    }
    print_report(t, out);
    return kExitOk;
}

// --- entry point ---------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Equivariant noise GNN: data generation, training, audits and reports", "engnn"};
    app.require_subcommand(1);

    DataSpec gen;
    std::string task, gen_out;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset as JSON lines");
    gen_cmd->add_option("--task", task, "count:<pattern>, subgraph:<density|cutratio|component> or csl-pairs")
        ->required();
    auto* n_opt = gen_cmd->add_option("--n", gen.n, "Nodes per graph (base graph size for subgraph tasks)");
    gen_cmd->add_option("--count", gen.count, "Number of graphs (subsets for subgraph tasks)");
    gen_cmd->add_option("--seed", gen.seed, "Generator seed");
    gen_cmd->add_option("--p", gen.p, "Edge probability for count tasks");
    gen_cmd->add_option("--out", gen_out, "Output JSONL path")->required();

    std::string config_path;
    auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON run configuration");
    train_cmd->add_option("--config", config_path, "Run configuration JSON")->required()->check(CLI::ExistingFile);

    std::string what;
    std::uint64_t check_seed = 0;
    std::optional<std::size_t> trials;
    auto* check_cmd = app.add_subcommand("check", "Run a self-audit and print PASS or FAIL");
    check_cmd->add_option("--what", what, "equivariance, gradients, covering or expectation")
        ->required()
        ->check(CLI::IsMember({"equivariance", "gradients", "covering", "expectation"}));
    check_cmd->add_option("--seed", check_seed, "Audit seed");
    check_cmd->add_option("--trials", trials, "Number of randomized trials")->check(CLI::PositiveNumber);

    std::vector<std::string> inputs;
    std::string merged;
    auto* report_cmd = app.add_subcommand("report", "Merge metric CSVs and print medians over runs");
    report_cmd->add_option("--inputs", inputs, "metrics.csv files");
    report_cmd->add_option("--out", merged, "Write the merged CSV here instead of standard output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*gen_cmd) {
            auto t = parse_task(task);
            if (!t) throw CliError(kExitUsage, "unknown task '" + task + "'");
            gen.task = *t;
            if (n_opt->count() == 0 && gen.task.family == TaskFamily::CslPairs) gen.n = 11;
            return cmd_gen_data(gen, gen_out, out);
        }
        if (*train_cmd) {
            nlohmann::json j;
            {
                std::ifstream in(config_path);
                try {
                    j = nlohmann::json::parse(in);
                } catch (const nlohmann::json::parse_error& e) {
                    throw ConfigError(config_path + ": " + e.what());
                }
            }
            RunConfig rc = run_config_from_json(j);
            apply_seed_override(rc, std::getenv("ENGNN_SEED"));
            return cmd_train(std::move(rc), out);
        }
        if (*check_cmd) return cmd_check(what, check_seed, trials, out);
        if (*report_cmd) return cmd_report(inputs, merged, out);
    } catch (const CliError& e) {
        err << "error: " << e.what() << '\n';
        return e.code();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DivergenceError& e) {
        err << "training diverged: " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace engnn

#endif  // ENGNN_CLI_HPP
