#ifndef ENGNN_JSONL_HPP
#define ENGNN_JSONL_HPP

// One graph per line:
//   {"n": 4, "edges": [[0,1],[1,2]], "x": [[...], ...], "subset": [0,2], "y": 3 | [..]}
// "x", "subset" and "y" are optional. Each undirected edge is written once with u < v.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "engnn/graph.hpp"

namespace engnn {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Dataset = std::vector<Graph>;

namespace detail {

inline nlohmann::ordered_json number_json(double v) {
    if (std::floor(v) == v && std::abs(v) < 9.0e15) return static_cast<std::int64_t>(v);
    return v;
}

inline Graph graph_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
    for (const auto& [key, _] : j.items())
        if (key != "n" && key != "edges" && key != "x" && key != "subset" && key != "y")
            throw std::invalid_argument("unknown field '" + key + "'");
    const auto n = j.at("n").get<std::size_t>();
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
        if (!e.is_array() || e.size() != 2) throw std::invalid_argument("edge must be a pair");
        edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
    }
    Graph g = Graph::from_edges(n, std::span<const Edge>(edges));
    if (j.contains("x")) {
        const auto& x = j.at("x");
        const std::size_t d = x.empty() ? 0 : x.at(0).size();
        if (x.size() != n) throw std::invalid_argument("x must have one row per node");
        Tensor feats(Shape{n, d});
        for (std::size_t v = 0; v < n; ++v) {
            if (x[v].size() != d) throw std::invalid_argument("ragged feature matrix");
            for (std::size_t c = 0; c < d; ++c) feats.at(v, c) = x[v][c].get<double>();
        }
        g.set_features(std::move(feats));
    }
    if (j.contains("subset")) g.set_subset(j.at("subset").get<std::vector<std::size_t>>());
    if (j.contains("y")) {
        const auto& y = j.at("y");
        if (y.is_number()) g.set_graph_target(y.get<double>());
        else g.set_targets(Targets{y.get<std::vector<double>>(), false});
    }
    g.validate();
    return g;
}

}  // namespace detail

inline nlohmann::ordered_json graph_to_json(const Graph& g) {
    nlohmann::ordered_json j;
    j["n"] = g.node_count();
    auto edges = nlohmann::ordered_json::array();
    for (const auto& [u, v] : g.edges()) edges.push_back({u, v});
    j["edges"] = std::move(edges);
    const Tensor& x = g.features();
    if (x.dim(1) > 0) {
        auto rows = nlohmann::ordered_json::array();
        for (std::size_t v = 0; v < g.node_count(); ++v) {
            auto row = nlohmann::ordered_json::array();
            for (std::size_t c = 0; c < x.dim(1); ++c) row.push_back(detail::number_json(x.at(v, c)));
            rows.push_back(std::move(row));
        }
        j["x"] = std::move(rows);
    }
    if (g.subset()) j["subset"] = *g.subset();
    if (g.targets()) {
        const Targets& t = *g.targets();
        if (t.scalar) {
            j["y"] = detail::number_json(t.values.at(0));
        } else {
            auto ys = nlohmann::ordered_json::array();
            for (double v : t.values) ys.push_back(detail::number_json(v));
            j["y"] = std::move(ys);
        }
    }
    return j;
}

inline void write_jsonl(std::ostream& os, const Dataset& graphs) {
    for (const Graph& g : graphs) os << graph_to_json(g).dump() << '\n';
}

inline void write_jsonl(const std::string& path, const Dataset& graphs) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DatasetError("cannot open '" + path + "' for writing");
    write_jsonl(os, graphs);
    if (!os) throw DatasetError("write to '" + path + "' failed");
}

/// Parses every non-blank line; errors name the 1-based line number.
inline Dataset read_jsonl(std::istream& is) {
    Dataset out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DatasetError("line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
        }
        try {
            out.push_back(detail::graph_from_json(j));
        } catch (const std::exception& e) {
            throw DatasetError("line " + std::to_string(lineno) + " (record " + std::to_string(out.size()) +
                               "): " + e.what());
        }
    }
    return out;
}

inline Dataset read_jsonl(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DatasetError("cannot open '" + path + "'");
    return read_jsonl(is);
}

}  // namespace engnn

#endif  // ENGNN_JSONL_HPP
