#pragma once

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "graph.hpp"
#include "spectral.hpp"

namespace dgat {

enum class RewireMode { none, homophily_prune, heterophily_prune, heterophily_prune_and_add };

inline std::string_view to_string(RewireMode m) {
    switch (m) {
        case RewireMode::none: return "none";
        case RewireMode::homophily_prune: return "homophily_prune";
        case RewireMode::heterophily_prune: return "heterophily_prune";
        case RewireMode::heterophily_prune_and_add: return "heterophily_prune_and_add";
    }
    return "none";
}

inline RewireMode parse_rewire_mode(std::string_view s) {
    if (s == "none") return RewireMode::none;
    if (s == "homophily_prune" || s == "homophily") return RewireMode::homophily_prune;
    if (s == "heterophily_prune" || s == "heterophily") return RewireMode::heterophily_prune;
    if (s == "heterophily_prune_and_add" || s == "heterophily_add") return RewireMode::heterophily_prune_and_add;
    throw std::invalid_argument("unknown rewire mode '" + std::string(s) + "'");
}

enum class PruneRule { homophily, heterophily };

/// Nodes holding the extreme values of a signal, and the midpoint between them.
struct ExtremeNodes {
    node_t vmin = 0;
    node_t vmax = 0;
    double midpoint = 0.0;
};

/// Ties go to the lowest index.
inline ExtremeNodes extreme_nodes(std::span<const double> phi) {
    if (phi.empty()) throw std::invalid_argument("extreme_nodes: empty signal");
    ExtremeNodes ex;
    for (node_t i = 1; i < phi.size(); ++i) {
        if (phi[i] < phi[ex.vmin]) ex.vmin = i;
        if (phi[i] > phi[ex.vmax]) ex.vmax = i;
    }
    ex.midpoint = 0.5 * (phi[ex.vmin] + phi[ex.vmax]);
    return ex;
}

/**
 * Edges whose spectral distance |phi_i - phi_j| crosses the threshold.
 * Homophily prunes d < epsilon, heterophily prunes d > epsilon; both strict.
 */
inline std::vector<Edge> prune_edges(const Graph& g, std::span<const double> phi, double epsilon, PruneRule rule) {
    if (phi.size() != g.n()) throw std::invalid_argument("prune_edges: signal size does not match graph");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("prune_edges: epsilon must be non-negative");
    std::vector<Edge> pruned;
    for (const auto& e : g.edges()) {
        const double d = std::abs(phi[e.u] - phi[e.v]);
        const bool drop = rule == PruneRule::homophily ? d < epsilon : d > epsilon;
        if (drop) pruned.push_back(e);
    }
    return pruned;
}

struct AddedEdges {
    std::vector<Edge> edges;
    ExtremeNodes extremes;
    bool constant_signal = false;
};

/// Links every node below the midpoint to vmax and every node above it to
/// vmin, skipping existing edges and self-pairs.
inline AddedEdges add_edges(const Graph& g, std::span<const double> phi) {
    if (phi.size() != g.n()) throw std::invalid_argument("add_edges: signal size does not match graph");
    AddedEdges out;
    out.extremes = extreme_nodes(phi);
    const auto& ex = out.extremes;
    if (phi[ex.vmin] == phi[ex.vmax]) {
        out.constant_signal = true;
        return out;
    }
    for (node_t i = 0; i < g.n(); ++i) {
        node_t partner;
        if (phi[i] < ex.midpoint)
            partner = ex.vmax;
        else if (phi[i] > ex.midpoint)
            partner = ex.vmin;
        else
            continue;
        if (partner == i || g.adjacent(i, partner)) continue;
        out.edges.push_back(make_edge(i, partner));
    }
    std::sort(out.edges.begin(), out.edges.end());
    out.edges.erase(std::unique(out.edges.begin(), out.edges.end()), out.edges.end());
    return out;
}

struct RewirePlan {
    RewireMode mode = RewireMode::none;
    double epsilon = 0.0;
    std::vector<Edge> pruned;
    std::vector<Edge> added;
    ExtremeNodes extremes;
    bool constant_signal = false;
    Graph result;  ///< rewired graph, self-loop on every node
};

/// Prune, then add (heterophily_prune_and_add only), then self-loops.
inline RewirePlan rewire(const Graph& g, std::span<const double> phi1, RewireMode mode, double epsilon) {
    if (phi1.size() != g.n()) throw std::invalid_argument("rewire: signal size does not match graph");
    RewirePlan plan;
    plan.mode = mode;
    plan.epsilon = epsilon;
    plan.extremes = extreme_nodes(phi1);

    switch (mode) {
        case RewireMode::none: break;
        case RewireMode::homophily_prune: plan.pruned = prune_edges(g, phi1, epsilon, PruneRule::homophily); break;
        case RewireMode::heterophily_prune:
        case RewireMode::heterophily_prune_and_add:
            plan.pruned = prune_edges(g, phi1, epsilon, PruneRule::heterophily);
            break;
    }
    if (mode == RewireMode::heterophily_prune_and_add) {
        auto added = add_edges(g, phi1);
        plan.added = std::move(added.edges);
        plan.constant_signal = added.constant_signal;
    }

    std::vector<Edge> kept;
    kept.reserve(g.edge_count() + plan.added.size());
    std::set_difference(g.edges().begin(), g.edges().end(), plan.pruned.begin(), plan.pruned.end(),
                        std::back_inserter(kept));
    kept.insert(kept.end(), plan.added.begin(), plan.added.end());
    std::sort(kept.begin(), kept.end());
    plan.result = Graph::from_normalized(g.n(), std::move(kept), std::vector<std::uint8_t>(g.n(), 1));
    return plan;
}

/// Uses the bundle's phi1; the bundle must be the random-walk member.
inline RewirePlan rewire(const Graph& g, const SpectralBundle& bundle, RewireMode mode, double epsilon) {
    if (bundle.n() != g.n()) throw std::invalid_argument("rewire: bundle and graph sizes differ");
    if (mode != RewireMode::none && bundle.params.alpha != 1.0)
        throw std::invalid_argument("rewire: spectral distances are defined on the alpha = 1 member");
    return rewire(g, std::span<const double>(bundle.phi1), mode, epsilon);
}

}  // namespace dgat
