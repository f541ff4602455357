#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "graph.hpp"
#include "nn.hpp"
#include "rewire.hpp"
#include "rng.hpp"
#include "spectral.hpp"
#include "synthgen.hpp"

namespace dgat {

/// How the attention graph and its edge features are derived from the input graph.
struct PipelineConfig {
    AttentionKind kind = AttentionKind::dgat;
    double gamma = 1.0;
    double alpha = 1.0;
    RewireMode rewire_mode = RewireMode::none;
    double epsilon = 0.0;
    double eps0 = 1e-8;
};

struct PreparedGraph {
    AttentionGraph attention;
    std::optional<RewirePlan> plan;  ///< empty for gat
    bool lambda1_degenerate = false;
};

/**
 * gat: the input graph with self-loops, zero edge features.
 *
 * dgat: phi1 of the alpha = 1 member at gamma drives rewiring; the edge
 * features use phi1 of the (alpha, gamma) member, restricted to the rewired
 * graph. The eigenvector is computed once on the input graph.
 */
inline PreparedGraph prepare_graph(const Graph& g, const PipelineConfig& cfg, const SpectralOptions& opts = {}) {
    PreparedGraph out;
    if (cfg.kind == AttentionKind::gat) {
        out.attention = AttentionGraph::without_features(g);
        return out;
    }
    const Graph base = strip_self_loops(g);
    const SpectralBundle rw = eigendecompose(base, {cfg.gamma, 1.0}, opts);
    out.lambda1_degenerate = rw.lambda1_degenerate;
    RewirePlan plan = rewire(base, rw, cfg.rewire_mode, cfg.epsilon);

    std::vector<double> phi = rw.phi1;
    if (cfg.alpha != 1.0) {
        const SpectralBundle other = eigendecompose(base, {cfg.gamma, cfg.alpha}, opts);
        phi = other.phi1;
    }
    const DirectionalField field = directional_field(plan.result, phi, cfg.eps0);
    out.attention = AttentionGraph(plan.result, edge_features(plan.result, field));
    out.plan = std::move(plan);
    return out;
}

struct TrainConfig {
    AttentionKind kind = AttentionKind::dgat;
    Aggregation aggregation = Aggregation::plain;
    double learning_rate = 0.01;
    double weight_decay = 0.001;
    double dropout = 0.1;
    std::size_t steps = 1000;
    std::size_t layers = 2;
    std::size_t heads = 8;
    std::size_t hidden_per_head = 8;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be non-negative");
        if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight decay must be non-negative");
        if (steps == 0) throw std::invalid_argument("TrainConfig: steps must be positive");
    }

    ModelConfig model_config(std::size_t input_dim, std::size_t num_classes) const {
        ModelConfig mc;
        mc.kind = kind;
        mc.aggregation = aggregation;
        mc.input_dim = input_dim;
        mc.num_classes = num_classes;
        mc.layers = layers;
        mc.heads = heads;
        mc.hidden = hidden_per_head;
        mc.dropout = dropout;
        return mc;
    }
};

/// Adam with decoupled weight decay.
class Adam {
public:
    Adam(const ModelParams& like, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : m_(like.zeros_like()), v_(like.zeros_like()), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(ModelParams& params, const ModelParams& grads) {
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        auto ps = params.tensors();
        auto gs = grads.tensors();
        auto ms = m_.tensors();
        auto vs = v_.tensors();
        for (std::size_t k = 0; k < ps.size(); ++k) {
            Eigen::MatrixXd& p = *ps[k];
            const Eigen::MatrixXd& g = *gs[k];
            *ms[k] = b1_ * *ms[k] + (1.0 - b1_) * g;
            *vs[k] = b2_ * *vs[k] + (1.0 - b2_) * g.cwiseProduct(g);
            if (wd_ > 0.0) p -= (lr_ * wd_) * p;
            p.array() -= lr_ * (ms[k]->array() / c1) / ((vs[k]->array() / c2).sqrt() + eps_);
        }
    }

    std::size_t step_count() const { return t_; }
    const ModelParams& first_moment() const { return m_; }
    const ModelParams& second_moment() const { return v_; }

private:
    ModelParams m_, v_;
    double lr_, wd_, b1_, b2_, eps_;
    std::size_t t_ = 0;
};

struct StepRecord {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    Model best;   ///< parameters at the best validation step
    Model last;
    std::vector<StepRecord> trace;
    std::size_t best_step = 0;  ///< 1-based; 0 means the initial parameters
    double best_val_accuracy = 0.0;
    double test_accuracy = 0.0;  ///< of `best`
};

/**
 * Full-graph training. Each step runs a dropout forward pass on the training
 * nodes, an Adam update, then a clean evaluation pass. The checkpoint with
 * the highest validation accuracy is kept (ties: lower validation loss,
 * then the earlier step).
 */
inline TrainResult train(const NodeDataset& ds, const AttentionGraph& ag, const TrainConfig& cfg) {
    cfg.validate();
    if (ds.split.train.empty()) throw std::invalid_argument("train: empty training split");
    if (ag.graph.n() != ds.graph.n()) throw std::invalid_argument("train: attention graph and dataset disagree on node count");
    const ModelConfig mc = cfg.model_config(static_cast<std::size_t>(ds.features.cols()), ds.num_classes);
    Model model = init_model(mc, derive_seed(cfg.seed, 10));
    Rng drop_rng(derive_seed(cfg.seed, 11));
    Adam adam(model.params, cfg.learning_rate, cfg.weight_decay);

    const auto& val_nodes = ds.split.val.empty() ? ds.split.train : ds.split.val;

    TrainResult res;
    auto evaluate_clean = [&](const Model& m, double& loss, double& acc) {
        Eigen::MatrixXd logits = forward(m, ag, ds.features);
        loss = cross_entropy(logits, ds.labels, val_nodes);
        acc = accuracy(logits, ds.labels, val_nodes);
    };

    double best_loss = 0.0;
    evaluate_clean(model, best_loss, res.best_val_accuracy);
    res.best = model;

    ForwardCache cache;
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        Eigen::MatrixXd logits = forward(model, ag, ds.features, &drop_rng, &cache);
        const double loss = cross_entropy(logits, ds.labels, ds.split.train);
        if (!std::isfinite(loss)) throw numeric_error("train: non-finite loss at step " + std::to_string(step));
        ModelParams grads = backward(model, ag, cache, cross_entropy_grad(logits, ds.labels, ds.split.train));
        adam.step(model.params, grads);

        StepRecord rec;
        rec.train_loss = loss;
        evaluate_clean(model, rec.val_loss, rec.val_accuracy);
        res.trace.push_back(rec);
        if (rec.val_accuracy > res.best_val_accuracy ||
            (rec.val_accuracy == res.best_val_accuracy && rec.val_loss < best_loss)) {
            res.best_val_accuracy = rec.val_accuracy;
            best_loss = rec.val_loss;
            res.best_step = step;
            res.best = model;
        }
    }
    res.last = model;
    res.test_accuracy = accuracy(forward(res.best, ag, ds.features), ds.labels, ds.split.test);
    return res;
}

inline double evaluate(const Model& model, const NodeDataset& ds, const AttentionGraph& ag, SplitPart part) {
    return accuracy(forward(model, ag, ds.features), ds.labels, ds.split.part(part));
}

}  // namespace dgat
