#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dps/graph.hpp"

namespace dps {

namespace detail {

inline LabeledGraph graph_from_json(const nlohmann::json& j, const std::string& where) {
    LabeledGraph g;
    try {
        g.n = j.at("n").get<int>();
        if (g.n < 1) throw std::invalid_argument("n must be >= 1");
        for (const auto& e : j.at("edges")) {
            const int u = e.at(0).get<int>(), v = e.at(1).get<int>();
            g.edges.push_back({std::min(u, v), std::max(u, v)});
        }
        validate_edges(g.n, g.edges, "graph");
        const auto& x = j.at("x");
        if (static_cast<int>(x.size()) != g.n)
            throw std::invalid_argument("x has " + std::to_string(x.size()) + " rows for n=" +
                                        std::to_string(g.n));
        g.feat_dim = x.empty() ? 0 : static_cast<int>(x.at(0).size());
        for (const auto& row : x) {
            if (static_cast<int>(row.size()) != g.feat_dim)
                throw std::invalid_argument("ragged feature rows");
            for (const auto& v : row) g.x.push_back(v.get<double>());
        }
        g.y = j.at("y").get<int>();
        if (g.y < 0) throw std::invalid_argument("label must be >= 0");
        if (j.contains("domain")) g.domain = j.at("domain").get<int>();
    } catch (const std::exception& e) {
        throw std::runtime_error(where + ": " + e.what());
    }
    return g;
}

inline nlohmann::json graph_to_json(const LabeledGraph& g) {
    nlohmann::json j;
    j["n"] = g.n;
    j["edges"] = nlohmann::json::array();
    for (const auto& e : g.edges) j["edges"].push_back({e[0], e[1]});
    j["x"] = nlohmann::json::array();
    for (int i = 0; i < g.n; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int f = 0; f < g.feat_dim; ++f)
            row.push_back(g.x[static_cast<std::size_t>(i) * g.feat_dim + f]);
        j["x"].push_back(std::move(row));
    }
    j["y"] = g.y;
    if (g.domain >= 0) j["domain"] = g.domain;
    return j;
}

}  // namespace detail

/// Line-delimited JSON, one graph per line. Empty file reads as an empty
/// dataset; a malformed record raises an error naming its line.
inline std::vector<LabeledGraph> read_graphs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_graphs: cannot open " + path);
    std::vector<LabeledGraph> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
        out.push_back(detail::graph_from_json(j, where));
    }
    return out;
}

inline void write_graphs(const std::vector<LabeledGraph>& graphs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_graphs: cannot open " + path);
    for (const auto& g : graphs) out << detail::graph_to_json(g).dump() << "\n";
}

/// Single-document JSON for node-level datasets.
inline NodeDataset read_node_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_node_dataset: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    NodeDataset ds;
    try {
        ds.n = j.at("n").get<int>();
        if (ds.n < 1) throw std::invalid_argument("n must be >= 1");
        for (const auto& e : j.at("edges")) {
            const int u = e.at(0).get<int>(), v = e.at(1).get<int>();
            ds.edges.push_back({std::min(u, v), std::max(u, v)});
        }
        detail::validate_edges(ds.n, ds.edges, "node dataset");
        const auto& x = j.at("x");
        if (static_cast<int>(x.size()) != ds.n)
            throw std::invalid_argument("x has " + std::to_string(x.size()) + " rows for n=" +
                                        std::to_string(ds.n));
        ds.feat_dim = x.empty() ? 0 : static_cast<int>(x.at(0).size());
        for (const auto& row : x)
            for (const auto& v : row) ds.x.push_back(v.get<double>());
        ds.labels = j.at("labels").get<std::vector<int>>();
        for (const auto& s : j.at("split")) {
            const std::string name = s.get<std::string>();
            if (name == "train") ds.split.push_back(Split::train);
            else if (name == "val") ds.split.push_back(Split::val);
            else if (name == "test") ds.split.push_back(Split::test);
            else throw std::invalid_argument("unknown split tag '" + name + "'");
        }
        ds.domain = j.at("domain").get<std::vector<int>>();
        if (static_cast<int>(ds.labels.size()) != ds.n ||
            static_cast<int>(ds.split.size()) != ds.n ||
            static_cast<int>(ds.domain.size()) != ds.n)
            throw std::invalid_argument("labels/split/domain must have one entry per node");
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return ds;
}

inline nlohmann::json node_dataset_to_json(const NodeDataset& ds) {
    nlohmann::json j;
    j["n"] = ds.n;
    j["edges"] = nlohmann::json::array();
    for (const auto& e : ds.edges) j["edges"].push_back({e[0], e[1]});
    j["x"] = nlohmann::json::array();
    for (int i = 0; i < ds.n; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int f = 0; f < ds.feat_dim; ++f)
            row.push_back(ds.x[static_cast<std::size_t>(i) * ds.feat_dim + f]);
        j["x"].push_back(std::move(row));
    }
    j["labels"] = ds.labels;
    j["split"] = nlohmann::json::array();
    for (Split s : ds.split) j["split"].push_back(split_name(s));
    j["domain"] = ds.domain;
    return j;
}

inline void write_node_dataset(const NodeDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_node_dataset: cannot open " + path);
    out << node_dataset_to_json(ds).dump() << "\n";
}

}  // namespace dps
