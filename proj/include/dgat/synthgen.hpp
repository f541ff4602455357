#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "graph.hpp"
#include "rng.hpp"

namespace dgat {

struct SynthConfig {
    std::size_t n = 400;
    std::size_t classes = 5;
    double mu = 0.5;
    std::size_t edges_per_node = 2;
    std::size_t feature_dim = 2;
    double feature_std = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (classes < 2) throw std::invalid_argument("SynthConfig: need at least two classes");
        if (n < classes || n % classes != 0)
            throw std::invalid_argument("SynthConfig: n must be a positive multiple of the class count");
        if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("SynthConfig: mu must lie in [0, 1]");
        if (edges_per_node == 0) throw std::invalid_argument("SynthConfig: edges_per_node must be positive");
        if (feature_dim < 2) throw std::invalid_argument("SynthConfig: feature_dim must be at least 2");
        if (!(feature_std > 0.0)) throw std::invalid_argument("SynthConfig: feature_std must be positive");
    }
};

enum class SplitPart : std::uint8_t { train, val, test };

struct Split {
    std::vector<node_t> train, val, test;

    std::vector<SplitPart> membership(std::size_t n) const {
        std::vector<SplitPart> m(n, SplitPart::test);
        for (auto i : train) m[i] = SplitPart::train;
        for (auto i : val) m[i] = SplitPart::val;
        return m;
    }

    const std::vector<node_t>& part(SplitPart p) const {
        switch (p) {
            case SplitPart::train: return train;
            case SplitPart::val: return val;
            case SplitPart::test: return test;
        }
        return test;
    }
};

struct NodeDataset {
    Graph graph;
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;
    Eigen::MatrixXd features;  ///< N x d
    Split split;

    // Generation metadata; zero for datasets loaded from elsewhere.
    std::size_t fallback_edges = 0;
};

/// Distance between two classes placed on a circle of c classes.
inline std::size_t class_distance(std::size_t a, std::size_t b, std::size_t c) {
    const std::size_t d = a > b ? a - b : b - a;
    return std::min(d, c - d);
}

/// w_d for d = 1..floor(c/2), proportional to exp(-d), summing to one.
/// Entry k of the result is w_{k+1}.
inline std::vector<double> class_distance_weights(std::size_t c) {
    if (c < 2) throw std::invalid_argument("class_distance_weights: need at least two classes");
    const std::size_t dmax = c / 2;
    std::vector<double> w(dmax);
    double total = 0.0;
    for (std::size_t d = 1; d <= dmax; ++d) total += (w[d - 1] = std::exp(-static_cast<double>(d)));
    for (auto& x : w) x /= total;
    return w;
}

/// Seeded shuffle into train/val/test with the given ratios (the remainder goes to test).
inline Split split_nodes(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed) {
    if (n < 5) throw std::invalid_argument("split_nodes: need at least 5 nodes");
    std::vector<node_t> order(n);
    for (node_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
    if (n_train + n_val > n) throw std::invalid_argument("split_nodes: ratios exceed one");
    Split s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

inline Split split_nodes(std::size_t n, std::uint64_t seed) { return split_nodes(n, {0.6, 0.2, 0.2}, seed); }

/**
 * Unnormalized attachment weights of new node i over the existing nodes
 * 0..i-1: d_j * mu for a same-class target, d_j * (1 - mu) * w_dist otherwise.
 */
inline void attachment_weights(std::span<const std::size_t> labels, std::span<const double> deg, node_t i, double mu,
                               std::size_t c, std::span<const double> class_weights, std::vector<double>& out) {
    out.assign(i, 0.0);
    for (node_t j = 0; j < i; ++j) {
        if (labels[j] == labels[i])
            out[j] = deg[j] * mu;
        else
            out[j] = deg[j] * (1.0 - mu) * class_weights[class_distance(labels[i], labels[j], c) - 1];
    }
}

/// Index drawn with probability proportional to its weight; empty when all weights are zero.
inline std::optional<node_t> sample_weighted(std::span<const double> weight, Rng& rng) {
    double total = 0.0;
    for (double x : weight) total += x;
    if (!(total > 0.0)) return std::nullopt;
    double r = rng.uniform() * total;
    node_t pick = weight.size() - 1;
    for (node_t j = 0; j < weight.size(); ++j) {
        if (weight[j] <= 0.0) continue;
        if (r < weight[j]) {
            pick = j;
            break;
        }
        r -= weight[j];
    }
    while (weight[pick] <= 0.0) --pick;  // rounding tail lands on the last positive weight
    return pick;
}

/**
 * Grows a graph one node at a time.
 *
 * Starts from a clique holding one node per class. Each later node takes the
 * next label from a seeded shuffle of the remaining balanced label pool, then
 * draws edges_per_node distinct existing targets with probability
 * proportional to d_j * mu (same class) or d_j * (1 - mu) * w_{dist} (other
 * class), renormalized after every draw. If every remaining weight is zero
 * the draw falls back to a uniform choice and is counted in fallback_edges.
 */
inline NodeDataset generate(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.n, c = cfg.classes;
    Rng rng(derive_seed(cfg.seed, 0));
    const auto w = class_distance_weights(c);

    std::vector<std::size_t> labels(n);
    for (std::size_t k = 0; k < c; ++k) labels[k] = k;
    {
        std::vector<std::size_t> pool;
        pool.reserve(n - c);
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t r = 1; r < n / c; ++r) pool.push_back(k);
        rng.shuffle(pool);
        std::copy(pool.begin(), pool.end(), labels.begin() + static_cast<std::ptrdiff_t>(c));
    }

    std::vector<std::pair<node_t, node_t>> edges;
    std::vector<double> deg(n, 0.0);
    for (node_t a = 0; a < c; ++a)
        for (node_t b = a + 1; b < c; ++b) {
            edges.emplace_back(a, b);
            deg[a] += 1.0;
            deg[b] += 1.0;
        }

    NodeDataset ds;
    std::vector<double> weight;
    std::vector<node_t> chosen;
    for (node_t i = c; i < n; ++i) {
        attachment_weights(labels, deg, i, cfg.mu, c, w, weight);
        chosen.clear();
        const std::size_t draws = std::min(cfg.edges_per_node, static_cast<std::size_t>(i));
        for (std::size_t k = 0; k < draws; ++k) {
            auto pick = sample_weighted(weight, rng);
            if (!pick) {
                std::vector<node_t> free;
                for (node_t j = 0; j < i; ++j)
                    if (std::find(chosen.begin(), chosen.end(), j) == chosen.end()) free.push_back(j);
                pick = free[rng.below(free.size())];
                ++ds.fallback_edges;
            }
            chosen.push_back(*pick);
            weight[*pick] = 0.0;
        }
        for (node_t j : chosen) {
            edges.emplace_back(j, i);
            deg[j] += 1.0;
            deg[i] += 1.0;
        }
    }

    ds.graph = build_graph(n, edges);
    ds.labels = std::move(labels);
    ds.num_classes = c;

    Rng feat_rng(derive_seed(cfg.seed, 1));
    ds.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.feature_dim));
    for (node_t i = 0; i < n; ++i) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(ds.labels[i]) / static_cast<double>(c);
        const auto r = static_cast<Eigen::Index>(i);
        for (Eigen::Index k = 0; k < ds.features.cols(); ++k) {
            const double mean = k == 0 ? std::cos(angle) : k == 1 ? std::sin(angle) : 0.0;
            ds.features(r, k) = feat_rng.normal(mean, cfg.feature_std);
        }
    }
    ds.split = split_nodes(n, derive_seed(cfg.seed, 2));
    return ds;
}

}  // namespace dgat
