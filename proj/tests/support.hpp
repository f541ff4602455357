#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include <string>

#include <Eigen/Dense>

#include <dgat/graph.hpp>
#include <dgat/nn.hpp>
#include <dgat/rng.hpp>

namespace dgat::test_support {

inline Graph path_graph(std::size_t n) {
    std::vector<std::pair<node_t, node_t>> e;
    for (node_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
    return build_graph(n, e);
}

inline Graph cycle_graph(std::size_t n) {
    std::vector<std::pair<node_t, node_t>> e;
    for (node_t i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
    return build_graph(n, e);
}

/// Random spanning tree plus independent extra edges with probability p.
inline Graph random_connected_graph(std::size_t n, double p, Rng& rng) {
    std::vector<std::pair<node_t, node_t>> e;
    for (node_t i = 1; i < n; ++i) e.emplace_back(rng.below(i), i);
    for (node_t i = 0; i < n; ++i)
        for (node_t j = i + 1; j < n; ++j)
            if (rng.uniform() < p) e.emplace_back(i, j);
    return build_graph(n, e);
}

/// Ranks starting at 1, ties share their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> rank(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
        i = j + 1;
    }
    return rank;
}

/// Spearman rank correlation: Pearson correlation of the average ranks.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    const auto rx = average_ranks(x), ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

struct TensorCheck {
    std::string name;
    double relative_error = 0.0;  ///< ||fd - analytic|| / max(||fd||, ||analytic||)
    double analytic_norm = 0.0;
    std::size_t entries = 0;
    std::size_t reduced_step_entries = 0;  ///< entries whose stencil crossed an activation branch point
};

/// A small labelled instance for gradient checks: random connected graph,
/// Gaussian node features and edge features, every other node in the loss.
struct GradcheckInstance {
    AttentionGraph graph;
    Eigen::MatrixXd x;
    std::vector<std::size_t> labels;
    std::vector<node_t> train;
};

inline GradcheckInstance make_gradcheck_instance(std::size_t n, std::size_t input_dim, std::size_t classes,
                                                 std::uint64_t seed) {
    Rng rng(seed);
    Graph g = add_self_loops(random_connected_graph(n, 0.15, rng));
    Eigen::MatrixXd f(static_cast<Eigen::Index>(g.slot_count()), 2);
    for (Eigen::Index k = 0; k < f.size(); ++k) f.data()[k] = rng.normal();
    GradcheckInstance inst{AttentionGraph(g, f), Eigen::MatrixXd(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(input_dim)), {}, {}};
    for (Eigen::Index k = 0; k < inst.x.size(); ++k) inst.x.data()[k] = rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
        inst.labels.push_back(rng.below(classes));
        if (i % 2 == 0) inst.train.push_back(i);
    }
    return inst;
}

/**
 * Central differences with step h on every parameter entry, compared per
 * tensor. The loss is only piecewise smooth: when the stencil of an entry
 * moves an attention pre-activation (LeakyReLU) or a hidden activation input
 * (ELU) across zero, the entry is redone with the step halved until both
 * sides stay on the same branch.
 */
inline std::vector<TensorCheck> gradient_check(Model model, const GradcheckInstance& inst, double h = 1e-3,
                                               Rng* dropout_seed_source = nullptr, std::uint64_t dropout_seed = 0) {
    auto run = [&](const Model& m, ForwardCache* cache) {
        if (dropout_seed_source == nullptr) return forward(m, inst.graph, inst.x, nullptr, cache);
        Rng rng(dropout_seed);
        return forward(m, inst.graph, inst.x, &rng, cache);
    };
    auto branches = [&](const ForwardCache& c) {
        std::vector<bool> pos;
        for (std::size_t l = 0; l < c.layers.size(); ++l) {
            const auto& lc = c.layers[l];
            for (Eigen::Index k = 0; k < lc.pre.size(); ++k) pos.push_back(lc.pre.data()[k] > 0.0);
            if (!model.config.is_hidden(l)) continue;
            for (Eigen::Index k = 0; k < lc.agg.size(); ++k) pos.push_back(lc.agg.data()[k] > 0.0);
            for (Eigen::Index k = 0; k < lc.z.size(); ++k) pos.push_back(lc.z.data()[k] > 0.0);
        }
        return pos;
    };
    ForwardCache cache;
    const Eigen::MatrixXd logits = run(model, &cache);
    const auto base_branches = branches(cache);
    const ModelParams analytic =
        backward(model, inst.graph, cache, cross_entropy_grad(logits, inst.labels, inst.train));
    const auto names = model.params.names();
    const auto grads = analytic.tensors();
    auto params = model.params.tensors();
    std::vector<TensorCheck> out;
    for (std::size_t t = 0; t < params.size(); ++t) {
        Eigen::MatrixXd& p = *params[t];
        Eigen::MatrixXd fd(p.rows(), p.cols());
        std::size_t reduced = 0;
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            const double keep = p.data()[k];
            for (double step = h;; step *= 0.5) {
                ForwardCache cu, cd;
                p.data()[k] = keep + step;
                const double up = cross_entropy(run(model, &cu), inst.labels, inst.train);
                p.data()[k] = keep - step;
                const double down = cross_entropy(run(model, &cd), inst.labels, inst.train);
                p.data()[k] = keep;
                fd.data()[k] = (up - down) / (2.0 * step);
                if ((branches(cu) == base_branches && branches(cd) == base_branches) || step < 1e-9) break;
                if (step == h) ++reduced;
            }
        }
        const double scale = std::max(fd.norm(), grads[t]->norm());
        out.push_back({names[t], scale > 0.0 ? (fd - *grads[t]).norm() / scale : 0.0, grads[t]->norm(),
                       static_cast<std::size_t>(p.size()), reduced});
    }
    return out;
}

}  // namespace dgat::test_support
