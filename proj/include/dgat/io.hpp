#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "graph.hpp"
#include "metrics.hpp"
#include "nn.hpp"
#include "rewire.hpp"
#include "synthgen.hpp"
#include "train.hpp"

namespace dgat {

using json = nlohmann::ordered_json;

class format_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int checkpoint_version = 1;

namespace detail {

inline const json& require_key(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw format_error(where + ": missing field '" + key + "'");
    return j.at(key);
}

template <class T>
T read_as(const json& j, const char* key, const std::string& where) {
    try {
        return require_key(j, key, where).get<T>();
    } catch (const json::exception& e) {
        throw format_error(where + ": field '" + key + "' has the wrong type (" + e.what() + ")");
    }
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& where) {
    if (!j.is_array()) throw format_error(where + ": expected an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j.front().size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& r = j[static_cast<std::size_t>(i)];
        if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols)
            throw format_error(where + ": row " + std::to_string(i) + " is ragged");
        for (Eigen::Index k = 0; k < cols; ++k) {
            const auto& v = r[static_cast<std::size_t>(k)];
            if (!v.is_number()) throw format_error(where + ": non-numeric entry in row " + std::to_string(i));
            m(i, k) = v.get<double>();
        }
    }
    return m;
}

/// Infinite thresholds are stored as the strings "inf" / "-inf".
inline json real_to_json(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return x;
}

inline double real_from_json(const json& j, const char* key, const std::string& where) {
    const auto& v = require_key(j, key, where);
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    if (!v.is_number()) throw format_error(where + ": field '" + key + "' is not a number");
    return v.get<double>();
}

inline json edges_to_json(const std::vector<Edge>& edges) {
    json a = json::array();
    for (const auto& e : edges) a.push_back({e.u, e.v});
    return a;
}

}  // namespace detail

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw format_error("write to '" + path + "' failed");
}

inline json parse_json(const std::string& text, const std::string& where) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw format_error(where + ": " + e.what());
    }
}

inline json read_json(const std::string& path) { return parse_json(read_text(path), path); }

/// Two-space indented dump with a trailing newline.
inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Graphs ---------------------------------------------------------------------

/// {"n", "edges"}; a "self_loops" list is written only when the graph has loops.
inline json graph_to_json(const Graph& g) {
    json j;
    j["n"] = g.n();
    j["edges"] = detail::edges_to_json(g.edges());
    if (g.self_loop_count() > 0) {
        json loops = json::array();
        for (node_t i = 0; i < g.n(); ++i)
            if (g.has_self_loop(i)) loops.push_back(i);
        j["self_loops"] = std::move(loops);
    }
    return j;
}

inline Graph graph_from_json(const json& j, const std::string& where = "graph") {
    const auto n = detail::read_as<std::size_t>(j, "n", where);
    const auto raw = detail::read_as<std::vector<std::pair<node_t, node_t>>>(j, "edges", where);
    try {
        Graph g = build_graph(n, raw);
        if (!j.contains("self_loops")) return g;
        std::vector<std::uint8_t> loops(n, 0);
        for (auto i : detail::read_as<std::vector<node_t>>(j, "self_loops", where)) {
            if (i >= n) throw format_error(where + ": self-loop node " + std::to_string(i) + " out of range");
            loops[i] = 1;
        }
        return Graph::from_normalized(n, g.edges(), std::move(loops));
    } catch (const graph_error& e) {
        throw format_error(where + ": " + e.what());
    }
}

/**
 * One "u<TAB>v" pair per line (any whitespace accepted); '#' starts a
 * comment. The node count is one past the largest id unless given.
 */
inline Graph graph_from_tsv(const std::string& text, std::size_t n = 0, const std::string& where = "tsv") {
    std::vector<std::pair<node_t, node_t>> raw;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0, max_id = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        long long u = 0, v = 0;
        if (!(ls >> u)) continue;
        std::string extra;
        if (!(ls >> v) || u < 0 || v < 0 || (ls >> extra))
            throw format_error(where + ": line " + std::to_string(line_no) + " is not a pair of node ids");
        raw.emplace_back(static_cast<node_t>(u), static_cast<node_t>(v));
        max_id = std::max({max_id, static_cast<std::size_t>(u) + 1, static_cast<std::size_t>(v) + 1});
    }
    try {
        return build_graph(n == 0 ? max_id : n, raw);
    } catch (const graph_error& e) {
        throw format_error(where + ": " + e.what());
    }
}

/// Dispatches on extension: ".tsv"/".txt"/".edges" are edge lists, anything else JSON.
inline Graph read_graph(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".tsv" || ext == ".txt" || ext == ".edges") return graph_from_tsv(read_text(path), 0, path);
    return graph_from_json(read_json(path), path);
}

inline LabeledGraph labeled_graph_from_json(const json& j, const std::string& where = "labeled graph") {
    Graph g = graph_from_json(j, where);
    auto labels = detail::read_as<std::vector<std::size_t>>(j, "labels", where);
    const std::size_t classes = j.contains("num_classes") ? detail::read_as<std::size_t>(j, "num_classes", where) : 0;
    try {
        return LabeledGraph(std::move(g), std::move(labels), classes);
    } catch (const std::invalid_argument& e) {
        throw format_error(where + ": " + e.what());
    }
}

inline json metrics_to_json(const MetricReport& r) {
    return json{{"h_node", r.h_node},
                {"h_edge", r.h_edge},
                {"h_edge_adjusted", r.h_edge_adjusted},
                {"h_class", r.h_class},
                {"label_informativeness", r.label_informativeness},
                {"h_agg", r.h_agg}};
}

// Datasets -------------------------------------------------------------------

inline json dataset_to_json(const NodeDataset& ds, const json& meta = json::object()) {
    json j = graph_to_json(ds.graph);
    j["labels"] = ds.labels;
    j["num_classes"] = ds.num_classes;
    j["features"] = detail::matrix_to_json(ds.features);
    j["split"] = json{{"train", ds.split.train}, {"val", ds.split.val}, {"test", ds.split.test}};
    json m = meta;
    m["fallback_edges"] = ds.fallback_edges;
    j["meta"] = std::move(m);
    return j;
}

inline NodeDataset dataset_from_json(const json& j, const std::string& where = "dataset") {
    NodeDataset ds;
    LabeledGraph lg = labeled_graph_from_json(j, where);
    ds.graph = lg.graph();
    ds.labels = lg.labels();
    ds.num_classes = lg.num_classes();
    ds.features = detail::matrix_from_json(detail::require_key(j, "features", where), where + ".features");
    if (static_cast<std::size_t>(ds.features.rows()) != ds.graph.n())
        throw format_error(where + ": feature rows do not match n");
    const auto& split = detail::require_key(j, "split", where);
    ds.split.train = detail::read_as<std::vector<node_t>>(split, "train", where + ".split");
    ds.split.val = detail::read_as<std::vector<node_t>>(split, "val", where + ".split");
    ds.split.test = detail::read_as<std::vector<node_t>>(split, "test", where + ".split");
    std::vector<std::uint8_t> seen(ds.graph.n(), 0);
    for (const auto* part : {&ds.split.train, &ds.split.val, &ds.split.test})
        for (auto i : *part) {
            if (i >= ds.graph.n()) throw format_error(where + ": split node " + std::to_string(i) + " out of range");
            if (seen[i]++) throw format_error(where + ": node " + std::to_string(i) + " appears in two split parts");
        }
    if (j.contains("meta") && j["meta"].contains("fallback_edges"))
        ds.fallback_edges = j["meta"]["fallback_edges"].get<std::size_t>();
    return ds;
}

// Rewire plans ---------------------------------------------------------------

inline json plan_to_json(const RewirePlan& p) {
    return json{{"mode", to_string(p.mode)},
                {"epsilon", detail::real_to_json(p.epsilon)},
                {"pruned", detail::edges_to_json(p.pruned)},
                {"added", detail::edges_to_json(p.added)},
                {"midpoint", p.extremes.midpoint},
                {"vmin", p.extremes.vmin},
                {"vmax", p.extremes.vmax},
                {"constant_signal", p.constant_signal}};
}

// Checkpoints ----------------------------------------------------------------

inline json model_config_to_json(const ModelConfig& c) {
    return json{{"kind", to_string(c.kind)},       {"aggregation", to_string(c.aggregation)},
                {"input_dim", c.input_dim},         {"num_classes", c.num_classes},
                {"layers", c.layers},               {"heads", c.heads},
                {"hidden", c.hidden},               {"edge_proj_dim", c.edge_proj_dim},
                {"dropout", c.dropout},             {"leaky_slope", c.leaky_slope}};
}

inline ModelConfig model_config_from_json(const json& j, const std::string& where) {
    ModelConfig c;
    try {
        c.kind = parse_attention_kind(detail::read_as<std::string>(j, "kind", where));
        c.aggregation = parse_aggregation(detail::read_as<std::string>(j, "aggregation", where));
    } catch (const std::invalid_argument& e) {
        throw format_error(where + ": " + e.what());
    }
    c.input_dim = detail::read_as<std::size_t>(j, "input_dim", where);
    c.num_classes = detail::read_as<std::size_t>(j, "num_classes", where);
    c.layers = detail::read_as<std::size_t>(j, "layers", where);
    c.heads = detail::read_as<std::size_t>(j, "heads", where);
    c.hidden = detail::read_as<std::size_t>(j, "hidden", where);
    c.edge_proj_dim = detail::read_as<std::size_t>(j, "edge_proj_dim", where);
    c.dropout = detail::read_as<double>(j, "dropout", where);
    c.leaky_slope = detail::read_as<double>(j, "leaky_slope", where);
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw format_error(where + ": " + e.what());
    }
    return c;
}

/**
 * Checkpoint layout:
 *   {"format": "dgat-checkpoint", "version": 1, "config": {...},
 *    "pipeline": {...}, "tensors": {"layer0.head0.w_n": [[...], ...], ...}}
 * Tensors are row-major nested arrays keyed by ModelParams::names().
 */
inline json checkpoint_to_json(const Model& model, const json& pipeline = json::object()) {
    json j;
    j["format"] = "dgat-checkpoint";
    j["version"] = checkpoint_version;
    j["config"] = model_config_to_json(model.config);
    j["pipeline"] = pipeline;
    json t = json::object();
    const auto names = model.params.names();
    const auto tensors = model.params.tensors();
    for (std::size_t k = 0; k < names.size(); ++k) t[names[k]] = detail::matrix_to_json(*tensors[k]);
    j["tensors"] = std::move(t);
    return j;
}

inline Model checkpoint_from_json(const json& j, const std::string& where = "checkpoint") {
    if (detail::read_as<std::string>(j, "format", where) != "dgat-checkpoint")
        throw format_error(where + ": not a checkpoint file");
    const int version = detail::read_as<int>(j, "version", where);
    if (version != checkpoint_version)
        throw format_error(where + ": unsupported checkpoint version " + std::to_string(version));
    const ModelConfig cfg = model_config_from_json(detail::require_key(j, "config", where), where + ".config");
    Model model = init_model(cfg, 0);
    const auto& t = detail::require_key(j, "tensors", where);
    const auto names = model.params.names();
    auto tensors = model.params.tensors();
    for (std::size_t k = 0; k < names.size(); ++k) {
        Eigen::MatrixXd m = detail::matrix_from_json(detail::require_key(t, names[k].c_str(), where + ".tensors"),
                                                     where + "." + names[k]);
        if (m.rows() != tensors[k]->rows() || m.cols() != tensors[k]->cols())
            throw format_error(where + ": tensor " + names[k] + " has the wrong shape");
        *tensors[k] = std::move(m);
    }
    return model;
}

inline json pipeline_to_json(const PipelineConfig& p) {
    return json{{"kind", to_string(p.kind)},   {"gamma", p.gamma},     {"alpha", p.alpha},
                {"rewire_mode", to_string(p.rewire_mode)}, {"epsilon", detail::real_to_json(p.epsilon)}, {"eps0", p.eps0}};
}

inline PipelineConfig pipeline_from_json(const json& j, const std::string& where) {
    PipelineConfig p;
    try {
        p.kind = parse_attention_kind(detail::read_as<std::string>(j, "kind", where));
        p.rewire_mode = parse_rewire_mode(detail::read_as<std::string>(j, "rewire_mode", where));
    } catch (const std::invalid_argument& e) {
        throw format_error(where + ": " + e.what());
    }
    p.gamma = detail::read_as<double>(j, "gamma", where);
    p.alpha = detail::read_as<double>(j, "alpha", where);
    p.epsilon = detail::real_from_json(j, "epsilon", where);
    p.eps0 = detail::read_as<double>(j, "eps0", where);
    return p;
}

inline json train_result_to_json(const TrainResult& r) {
    json trace = json::array();
    for (const auto& s : r.trace)
        trace.push_back(json{{"train_loss", s.train_loss}, {"val_loss", s.val_loss}, {"val_accuracy", s.val_accuracy}});
    return json{{"best_step", r.best_step},
                {"best_val_accuracy", r.best_val_accuracy},
                {"test_accuracy", r.test_accuracy},
                {"trace", std::move(trace)}};
}

}  // namespace dgat
