#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "graph.hpp"

namespace dgat {

/// A graph together with a class label per node. Labels are 0..C-1.
class LabeledGraph {
public:
    LabeledGraph(Graph g, std::vector<std::size_t> labels, std::size_t num_classes = 0)
        : graph_(std::move(g)), labels_(std::move(labels)) {
        if (labels_.size() != graph_.n())
            throw std::invalid_argument("LabeledGraph: " + std::to_string(labels_.size()) + " labels for " +
                                        std::to_string(graph_.n()) + " nodes");
        std::size_t mx = 0;
        for (auto z : labels_) mx = std::max(mx, z + 1);
        classes_ = num_classes == 0 ? mx : num_classes;
        if (mx > classes_) throw std::invalid_argument("LabeledGraph: label outside [0, C)");
    }

    const Graph& graph() const { return graph_; }
    const std::vector<std::size_t>& labels() const { return labels_; }
    std::size_t label(node_t i) const { return labels_[i]; }
    std::size_t num_classes() const { return classes_; }

private:
    Graph graph_;
    std::vector<std::size_t> labels_;
    std::size_t classes_ = 0;
};

struct MetricReport {
    double h_node = 0.0;
    double h_edge = 0.0;
    double h_edge_adjusted = 0.0;
    double h_class = 0.0;
    double label_informativeness = 0.0;
    double h_agg = 0.0;
};

class metric_error : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

namespace detail {

inline void require_edges(const LabeledGraph& lg, const char* where) {
    if (lg.graph().edge_count() == 0) throw metric_error(std::string(where) + ": graph has no edges");
}

/// Degree-weighted class distribution p(c) over non-loop incidences.
inline std::vector<double> degree_weighted_class_dist(const LabeledGraph& lg) {
    std::vector<double> p(lg.num_classes(), 0.0);
    for (const auto& e : lg.graph().edges()) {
        p[lg.label(e.u)] += 1.0;
        p[lg.label(e.v)] += 1.0;
    }
    const double total = 2.0 * static_cast<double>(lg.graph().edge_count());
    for (auto& x : p) x /= total;
    return p;
}

}  // namespace detail

/// Mean over nodes of the fraction of (non-loop) neighbours sharing the label.
/// Isolated nodes contribute 0.
inline double node_homophily(const LabeledGraph& lg) {
    const Graph& g = lg.graph();
    double acc = 0.0;
    for (node_t u = 0; u < g.n(); ++u) {
        std::size_t deg = 0, same = 0;
        for (node_t v : g.neighbors(u)) {
            if (v == u) continue;
            ++deg;
            if (lg.label(v) == lg.label(u)) ++same;
        }
        if (deg > 0) acc += static_cast<double>(same) / static_cast<double>(deg);
    }
    return acc / static_cast<double>(g.n());
}

inline double edge_homophily(const LabeledGraph& lg) {
    detail::require_edges(lg, "edge_homophily");
    std::size_t same = 0;
    for (const auto& e : lg.graph().edges())
        if (lg.label(e.u) == lg.label(e.v)) ++same;
    return static_cast<double>(same) / static_cast<double>(lg.graph().edge_count());
}

inline double adjusted_edge_homophily(const LabeledGraph& lg) {
    const double h = edge_homophily(lg);
    double sq = 0.0;
    for (double x : detail::degree_weighted_class_dist(lg)) sq += x * x;
    if (1.0 - sq <= 0.0)
        throw metric_error("adjusted_edge_homophily: every edge endpoint is in one class, so the adjustment is undefined");
    return (h - sq) / (1.0 - sq);
}

/**
 * (1/(C-1)) sum_c [h_c - |class c|/N]_+ where h_c counts same-class neighbour
 * incidences of class-c nodes over their degree sum. Each undirected
 * intra-class edge contributes once per endpoint.
 */
inline double class_homophily(const LabeledGraph& lg) {
    detail::require_edges(lg, "class_homophily");
    const std::size_t c = lg.num_classes();
    if (c < 2) throw metric_error("class_homophily: needs at least two classes");
    std::vector<double> same(c, 0.0), deg(c, 0.0), count(c, 0.0);
    for (node_t i = 0; i < lg.graph().n(); ++i) count[lg.label(i)] += 1.0;
    for (const auto& e : lg.graph().edges()) {
        const auto zu = lg.label(e.u), zv = lg.label(e.v);
        deg[zu] += 1.0;
        deg[zv] += 1.0;
        if (zu == zv) same[zu] += 2.0;
    }
    const double n = static_cast<double>(lg.graph().n());
    double acc = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        const double hk = deg[k] > 0.0 ? same[k] / deg[k] : 0.0;
        acc += std::max(0.0, hk - count[k] / n);
    }
    return acc / static_cast<double>(c - 1);
}

/// 2 - sum p(c1,c2) log p(c1,c2) / sum p(c) log p(c), with 0 log 0 = 0.
inline double label_informativeness(const LabeledGraph& lg) {
    detail::require_edges(lg, "label_informativeness");
    const std::size_t c = lg.num_classes();
    std::vector<double> joint(c * c, 0.0);
    for (const auto& e : lg.graph().edges()) {
        const auto zu = lg.label(e.u), zv = lg.label(e.v);
        joint[zu * c + zv] += 1.0;
        joint[zv * c + zu] += 1.0;
    }
    const double total = 2.0 * static_cast<double>(lg.graph().edge_count());
    double num = 0.0;
    for (double x : joint)
        if (x > 0.0) num += (x / total) * std::log(x / total);
    double den = 0.0;
    for (double x : detail::degree_weighted_class_dist(lg))
        if (x > 0.0) den += x * std::log(x);
    if (den == 0.0) throw metric_error("label_informativeness: single-class degree distribution, entropy is zero");
    return 2.0 - num / den;
}

/**
 * Fraction of nodes whose mean post-aggregation similarity to same-class
 * nodes is at least the mean to other-class nodes, with similarity
 * S = (A+I)Z ((A+I)Z)^T. Row sums of S per class are formed as
 * (A+I)Z_i . sum_{j in class} (A+I)Z_j, so S is never materialized.
 * A node with no other-class nodes counts as satisfying the comparison.
 */
inline double aggregation_homophily(const LabeledGraph& lg) {
    const Graph& g = lg.graph();
    const std::size_t c = lg.num_classes();
    const std::size_t n = g.n();
    std::vector<double> az(n * c, 0.0);
    for (node_t i = 0; i < n; ++i) {
        az[i * c + lg.label(i)] += 1.0;
        for (node_t j : g.neighbors(i))
            if (j != i) az[i * c + lg.label(j)] += 1.0;
    }
    std::vector<double> class_sum(c * c, 0.0), class_count(c, 0.0);
    for (node_t j = 0; j < n; ++j) {
        const auto zj = lg.label(j);
        class_count[zj] += 1.0;
        for (std::size_t k = 0; k < c; ++k) class_sum[zj * c + k] += az[j * c + k];
    }
    std::size_t satisfied = 0;
    for (node_t i = 0; i < n; ++i) {
        const auto zi = lg.label(i);
        double same_sum = 0.0, all_sum = 0.0;
        for (std::size_t cls = 0; cls < c; ++cls) {
            double dot = 0.0;
            for (std::size_t k = 0; k < c; ++k) dot += az[i * c + k] * class_sum[cls * c + k];
            all_sum += dot;
            if (cls == zi) same_sum = dot;
        }
        const double n_same = class_count[zi];
        const double n_diff = static_cast<double>(n) - n_same;
        if (n_diff == 0.0 || same_sum / n_same >= (all_sum - same_sum) / n_diff) ++satisfied;
    }
    return static_cast<double>(satisfied) / static_cast<double>(n);
}

/// Every metric; throws when any of them is undefined for this graph.
inline MetricReport compute_metrics(const LabeledGraph& lg) {
    MetricReport r;
    r.h_node = node_homophily(lg);
    r.h_edge = edge_homophily(lg);
    r.h_edge_adjusted = adjusted_edge_homophily(lg);
    r.h_class = class_homophily(lg);
    r.label_informativeness = label_informativeness(lg);
    r.h_agg = aggregation_homophily(lg);
    return r;
}

}  // namespace dgat
