#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dgat {

using node_t = std::size_t;

/// Undirected edge stored with u < v (or u == v for a self-loop).
struct Edge {
    node_t u = 0;
    node_t v = 0;

    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

inline Edge make_edge(node_t a, node_t b) { return a < b ? Edge{a, b} : Edge{b, a}; }

/// Thrown for malformed graphs and out-of-range arguments.
class graph_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/**
 * Simple undirected graph on dense node ids 0..n-1.
 *
 * The edge list holds non-loop edges only, sorted, u < v. Self-loops live in a
 * per-node bitmap. The CSR view lists every neighbour of i in ascending order
 * and includes i itself when its self-loop bit is set, so the CSR row length
 * is the degree used throughout (loops count once).
 */
class Graph {
public:
    Graph() = default;

    std::size_t n() const { return n_; }
    const std::vector<Edge>& edges() const { return edges_; }
    std::size_t edge_count() const { return edges_.size(); }

    bool has_self_loop(node_t i) const { return self_loops_.at(i) != 0; }
    std::size_t self_loop_count() const {
        return static_cast<std::size_t>(std::count(self_loops_.begin(), self_loops_.end(), std::uint8_t{1}));
    }

    const std::vector<std::size_t>& csr_offsets() const { return offsets_; }
    const std::vector<node_t>& csr_targets() const { return targets_; }

    /// Total number of directed adjacency slots (2|E| + loops).
    std::size_t slot_count() const { return targets_.size(); }

    std::span<const node_t> neighbors(node_t i) const {
        return {targets_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
    }

    std::size_t degree(node_t i) const { return offsets_[i + 1] - offsets_[i]; }

    /// CSR slot of the directed entry (i, j), or slot_count() when absent.
    std::size_t slot_of(node_t i, node_t j) const {
        auto row = neighbors(i);
        auto it = std::lower_bound(row.begin(), row.end(), j);
        if (it == row.end() || *it != j) return slot_count();
        return offsets_[i] + static_cast<std::size_t>(it - row.begin());
    }

    bool adjacent(node_t i, node_t j) const { return slot_of(i, j) != slot_count(); }

    friend bool operator==(const Graph& a, const Graph& b) {
        return a.n_ == b.n_ && a.edges_ == b.edges_ && a.self_loops_ == b.self_loops_;
    }

    /// Builds from already-normalized parts. Used by the free builders below.
    static Graph from_normalized(std::size_t n, std::vector<Edge> edges, std::vector<std::uint8_t> loops) {
        Graph g;
        g.n_ = n;
        g.edges_ = std::move(edges);
        g.self_loops_ = std::move(loops);
        g.rebuild_csr();
        return g;
    }

private:
    void rebuild_csr() {
        std::vector<std::size_t> deg(n_, 0);
        for (const auto& e : edges_) {
            ++deg[e.u];
            ++deg[e.v];
        }
        for (node_t i = 0; i < n_; ++i) deg[i] += self_loops_[i];

        offsets_.assign(n_ + 1, 0);
        for (node_t i = 0; i < n_; ++i) offsets_[i + 1] = offsets_[i] + deg[i];

        targets_.assign(offsets_[n_], 0);
        std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
        for (const auto& e : edges_) {
            targets_[cursor[e.u]++] = e.v;
            targets_[cursor[e.v]++] = e.u;
        }
        for (node_t i = 0; i < n_; ++i)
            if (self_loops_[i]) targets_[cursor[i]++] = i;
        for (node_t i = 0; i < n_; ++i)
            std::sort(targets_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]),
                      targets_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]));
    }

    std::size_t n_ = 0;
    std::vector<Edge> edges_;
    std::vector<std::uint8_t> self_loops_;
    std::vector<std::size_t> offsets_;
    std::vector<node_t> targets_;
};

/// Normalizes raw pairs into a simple undirected graph: symmetric duplicates
/// collapse, self-loops are dropped, edges are sorted.
inline Graph build_graph(std::size_t n, std::span<const std::pair<node_t, node_t>> raw_edges) {
    if (n == 0) throw graph_error("build_graph: node count must be positive");
    std::vector<Edge> edges;
    edges.reserve(raw_edges.size());
    for (std::size_t k = 0; k < raw_edges.size(); ++k) {
        auto [a, b] = raw_edges[k];
        if (a >= n || b >= n)
            throw graph_error("build_graph: edge " + std::to_string(k) + " (" + std::to_string(a) + ", " +
                              std::to_string(b) + ") has an endpoint outside [0, " + std::to_string(n) + ")");
        if (a == b) continue;
        edges.push_back(make_edge(a, b));
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return Graph::from_normalized(n, std::move(edges), std::vector<std::uint8_t>(n, 0));
}

inline Graph build_graph(std::size_t n, const std::vector<std::pair<node_t, node_t>>& raw_edges) {
    return build_graph(n, std::span<const std::pair<node_t, node_t>>(raw_edges));
}

inline Graph build_graph(std::size_t n, std::initializer_list<std::pair<node_t, node_t>> raw_edges) {
    std::vector<std::pair<node_t, node_t>> v(raw_edges);
    return build_graph(n, v);
}

/// Same normalization, from an edge list that may already carry loops to keep.
inline Graph build_graph(std::size_t n, std::span<const Edge> edges, std::vector<std::uint8_t> loops) {
    if (loops.size() != n) throw graph_error("build_graph: self-loop bitmap size mismatch");
    std::vector<std::pair<node_t, node_t>> raw;
    raw.reserve(edges.size());
    for (const auto& e : edges) raw.emplace_back(e.u, e.v);
    Graph g = build_graph(n, raw);
    for (auto& b : loops) b = b ? 1 : 0;
    return Graph::from_normalized(n, g.edges(), std::move(loops));
}

inline std::vector<std::size_t> degrees(const Graph& g) {
    std::vector<std::size_t> d(g.n());
    for (node_t i = 0; i < g.n(); ++i) d[i] = g.degree(i);
    return d;
}

struct ConnectivityReport {
    std::size_t component_count = 0;
    std::vector<std::size_t> component_of;

    bool connected() const { return component_count == 1; }
};

/// BFS labelling; components are numbered in order of their smallest node.
inline ConnectivityReport connectivity(const Graph& g) {
    constexpr auto unset = static_cast<std::size_t>(-1);
    ConnectivityReport rep;
    rep.component_of.assign(g.n(), unset);
    std::queue<node_t> q;
    for (node_t s = 0; s < g.n(); ++s) {
        if (rep.component_of[s] != unset) continue;
        const std::size_t c = rep.component_count++;
        rep.component_of[s] = c;
        q.push(s);
        while (!q.empty()) {
            node_t u = q.front();
            q.pop();
            for (node_t v : g.neighbors(u)) {
                if (rep.component_of[v] == unset) {
                    rep.component_of[v] = c;
                    q.push(v);
                }
            }
        }
    }
    return rep;
}

inline Graph add_self_loops(const Graph& g) {
    return Graph::from_normalized(g.n(), g.edges(), std::vector<std::uint8_t>(g.n(), 1));
}

inline Graph strip_self_loops(const Graph& g) {
    return Graph::from_normalized(g.n(), g.edges(), std::vector<std::uint8_t>(g.n(), 0));
}

/// Induced subgraph on the largest connected component (ties: lowest component
/// id). `kept` receives the original id of each new node.
inline Graph largest_component(const Graph& g, std::vector<node_t>* kept = nullptr) {
    auto rep = connectivity(g);
    std::vector<std::size_t> sizes(rep.component_count, 0);
    for (auto c : rep.component_of) ++sizes[c];
    const auto best = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());

    std::vector<node_t> remap(g.n(), g.n());
    std::vector<node_t> old_ids;
    for (node_t i = 0; i < g.n(); ++i)
        if (rep.component_of[i] == best) {
            remap[i] = old_ids.size();
            old_ids.push_back(i);
        }
    std::vector<Edge> edges;
    for (const auto& e : g.edges())
        if (remap[e.u] < g.n() && remap[e.v] < g.n()) edges.push_back(make_edge(remap[e.u], remap[e.v]));
    std::vector<std::uint8_t> loops(old_ids.size(), 0);
    for (std::size_t k = 0; k < old_ids.size(); ++k) loops[k] = g.has_self_loop(old_ids[k]) ? 1 : 0;
    if (kept) *kept = old_ids;
    std::sort(edges.begin(), edges.end());
    return Graph::from_normalized(old_ids.size(), std::move(edges), std::move(loops));
}

}  // namespace dgat
