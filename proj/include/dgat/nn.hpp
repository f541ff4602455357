#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "graph.hpp"
#include "rng.hpp"
#include "spectral.hpp"

namespace dgat {

enum class AttentionKind { gat, dgat };
enum class Aggregation { plain, sep };

inline std::string_view to_string(AttentionKind k) { return k == AttentionKind::gat ? "gat" : "dgat"; }
inline std::string_view to_string(Aggregation a) { return a == Aggregation::plain ? "plain" : "sep"; }

inline AttentionKind parse_attention_kind(std::string_view s) {
    if (s == "gat") return AttentionKind::gat;
    if (s == "dgat") return AttentionKind::dgat;
    throw std::invalid_argument("unknown attention mode '" + std::string(s) + "'");
}

inline Aggregation parse_aggregation(std::string_view s) {
    if (s == "plain") return Aggregation::plain;
    if (s == "sep") return Aggregation::sep;
    throw std::invalid_argument("unknown aggregation '" + std::string(s) + "'");
}

/// Layer shapes and the non-learned knobs of the attention network.
struct ModelConfig {
    AttentionKind kind = AttentionKind::dgat;
    Aggregation aggregation = Aggregation::plain;
    std::size_t input_dim = 2;
    std::size_t num_classes = 2;
    std::size_t layers = 2;
    std::size_t heads = 8;
    std::size_t hidden = 8;         ///< per head
    std::size_t edge_proj_dim = 2;  ///< rows of W_e
    double dropout = 0.1;
    double leaky_slope = 0.2;

    void validate() const {
        if (input_dim == 0 || num_classes == 0 || layers == 0 || heads == 0 || hidden == 0 || edge_proj_dim == 0)
            throw std::invalid_argument("ModelConfig: every dimension must be positive");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("ModelConfig: dropout must lie in [0, 1)");
    }

    std::size_t layer_input_dim(std::size_t l) const { return l == 0 ? input_dim : heads * hidden; }
    std::size_t layer_output_dim(std::size_t l) const { return l + 1 == layers ? num_classes : heads * hidden; }
    std::size_t concat_dim() const { return heads * hidden * (aggregation == Aggregation::sep ? 2 : 1); }
    bool is_hidden(std::size_t l) const { return l + 1 < layers; }
};

/// Per-head weights: W_n (hidden x d_in), W_e (edge_proj_dim x 2),
/// a (2*hidden + edge_proj_dim, stored as a column).
struct HeadParams {
    Eigen::MatrixXd w_n;
    Eigen::MatrixXd w_e;
    Eigen::MatrixXd a;
};

struct LayerParams {
    std::vector<HeadParams> heads;
    Eigen::MatrixXd w_out;  ///< d_out x concat_dim
};

struct ModelParams {
    std::vector<LayerParams> layers;

    std::vector<Eigen::MatrixXd*> tensors() {
        std::vector<Eigen::MatrixXd*> out;
        for (auto& l : layers) {
            for (auto& h : l.heads) {
                out.push_back(&h.w_n);
                out.push_back(&h.w_e);
                out.push_back(&h.a);
            }
            out.push_back(&l.w_out);
        }
        return out;
    }

    std::vector<const Eigen::MatrixXd*> tensors() const {
        std::vector<const Eigen::MatrixXd*> out;
        for (auto* t : const_cast<ModelParams*>(this)->tensors()) out.push_back(t);
        return out;
    }

    /// Names parallel to tensors(), e.g. "layer0.head1.w_e".
    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string lp = "layer" + std::to_string(l);
            for (std::size_t m = 0; m < layers[l].heads.size(); ++m) {
                const std::string hp = lp + ".head" + std::to_string(m);
                out.push_back(hp + ".w_n");
                out.push_back(hp + ".w_e");
                out.push_back(hp + ".a");
            }
            out.push_back(lp + ".w_out");
        }
        return out;
    }

    ModelParams zeros_like() const {
        ModelParams z = *this;
        for (auto* t : z.tensors()) t->setZero();
        return z;
    }
};

struct Model {
    ModelConfig config;
    ModelParams params;
};

namespace detail {

inline Eigen::MatrixXd glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-limit, limit);
    return m;
}

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

}  // namespace detail

/// Glorot-uniform initialization. Every tensor, W_e and the edge block of a
/// included, is drawn in a fixed order regardless of the attention kind, so
/// gat and dgat models built from one seed share all common weights.
inline Model init_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    Model model{cfg, {}};
    const auto h = static_cast<Eigen::Index>(cfg.hidden);
    const auto de = static_cast<Eigen::Index>(cfg.edge_proj_dim);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        LayerParams lp;
        for (std::size_t m = 0; m < cfg.heads; ++m) {
            HeadParams hp;
            hp.w_n = detail::glorot(h, static_cast<Eigen::Index>(cfg.layer_input_dim(l)), rng);
            hp.w_e = detail::glorot(de, 2, rng);
            hp.a = detail::glorot(2 * h + de, 1, rng);
            lp.heads.push_back(std::move(hp));
        }
        lp.w_out = detail::glorot(static_cast<Eigen::Index>(cfg.layer_output_dim(l)),
                                  static_cast<Eigen::Index>(cfg.concat_dim()), rng);
        model.params.layers.push_back(std::move(lp));
    }
    return model;
}

/**
 * The graph the attention runs over: CSR adjacency with a self-loop on every
 * node, plus one 2-vector edge feature per CSR slot.
 */
struct AttentionGraph {
    Graph graph;
    Eigen::MatrixXd edge_features;  ///< slot_count x 2
    std::vector<node_t> slot_source;

    AttentionGraph() = default;
    AttentionGraph(Graph g, Eigen::MatrixXd feats) : graph(std::move(g)), edge_features(std::move(feats)) {
        if (static_cast<std::size_t>(edge_features.rows()) != graph.slot_count() || edge_features.cols() != 2)
            throw std::invalid_argument("AttentionGraph: edge feature table must be slot_count x 2");
        slot_source.resize(graph.slot_count());
        for (node_t i = 0; i < graph.n(); ++i) {
            if (graph.degree(i) == 0)
                throw std::invalid_argument("AttentionGraph: node " + std::to_string(i) + " has an empty neighbourhood");
            for (std::size_t s = graph.csr_offsets()[i]; s < graph.csr_offsets()[i + 1]; ++s) slot_source[s] = i;
        }
    }

    /// Plain attention graph: self-loops added, all edge features zero.
    static AttentionGraph without_features(const Graph& g) {
        Graph looped = add_self_loops(g);
        Eigen::MatrixXd f = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(looped.slot_count()), 2);
        return {std::move(looped), std::move(f)};
    }
};

/// [B_av(i,j), B_dx(i,j)] for every CSR slot of `rewired`; a self-loop slot
/// gets [0, B_dx(i,i)]. The field must have been built on the same graph.
inline Eigen::MatrixXd edge_features(const Graph& rewired, const DirectionalField& field) {
    Eigen::MatrixXd f(static_cast<Eigen::Index>(rewired.slot_count()), 2);
    for (node_t i = 0; i < rewired.n(); ++i) {
        for (std::size_t s = rewired.csr_offsets()[i]; s < rewired.csr_offsets()[i + 1]; ++s) {
            const node_t j = rewired.csr_targets()[s];
            const auto row = static_cast<Eigen::Index>(s);
            if (i >= field.graph.n() || j >= field.graph.n())
                throw std::invalid_argument("edge_features: field covers fewer nodes than the graph");
            if (i == j) {
                f(row, 0) = 0.0;
                f(row, 1) = field.b_dx_diag[i];
                continue;
            }
            const auto fs = field.graph.slot_of(i, j);
            if (fs == field.graph.slot_count())
                throw std::invalid_argument("edge_features: edge (" + std::to_string(i) + ", " + std::to_string(j) +
                                            ") is absent from the directional field");
            f(row, 0) = field.b_av[fs];
            f(row, 1) = field.b_dx_offdiag[fs];
        }
    }
    return f;
}

/// Per-slot pre-activation a^T [W_n h_i || W_n h_j || W_e f_ij] given z = h W_n^T.
/// The edge block is skipped entirely in gat mode.
inline Eigen::VectorXd attention_preactivation(const AttentionGraph& ag, const Eigen::MatrixXd& z,
                                               const Eigen::MatrixXd& projected_edges, const HeadParams& hp,
                                               AttentionKind kind) {
    const Eigen::Index h = z.cols();
    const Eigen::VectorXd src = z * hp.a.topRows(h);
    const Eigen::VectorXd dst = z * hp.a.middleRows(h, h);
    const auto& tgt = ag.graph.csr_targets();
    Eigen::VectorXd pre(static_cast<Eigen::Index>(tgt.size()));
    if (kind == AttentionKind::gat) {
        for (std::size_t s = 0; s < tgt.size(); ++s)
            pre[static_cast<Eigen::Index>(s)] = src[static_cast<Eigen::Index>(ag.slot_source[s])] + dst[static_cast<Eigen::Index>(tgt[s])];
        return pre;
    }
    const auto ae = hp.a.bottomRows(hp.a.rows() - 2 * h);
    for (std::size_t s = 0; s < tgt.size(); ++s) {
        const auto row = static_cast<Eigen::Index>(s);
        double v = src[static_cast<Eigen::Index>(ag.slot_source[s])] + dst[static_cast<Eigen::Index>(tgt[s])];
        v += projected_edges.row(row).dot(ae.col(0).transpose());
        pre[row] = v;
    }
    return pre;
}

inline double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }

/// Raw scores r_ij = LeakyReLU(a^T [W_n h_i || W_n h_j || W_e f_ij]) per CSR slot.
inline Eigen::VectorXd attention_scores(const AttentionGraph& ag, const Eigen::MatrixXd& h_prev, const HeadParams& hp,
                                        AttentionKind kind, double slope = 0.2) {
    const Eigen::MatrixXd z = h_prev * hp.w_n.transpose();
    const Eigen::MatrixXd pe = ag.edge_features * hp.w_e.transpose();
    Eigen::VectorXd r = attention_preactivation(ag, z, pe, hp, kind);
    for (Eigen::Index s = 0; s < r.size(); ++s) r[s] = leaky_relu(r[s], slope);
    return r;
}

/// Softmax of the scores over each node's CSR row (max-subtracted).
inline Eigen::VectorXd masked_softmax(const Graph& g, const Eigen::VectorXd& scores) {
    if (static_cast<std::size_t>(scores.size()) != g.slot_count())
        throw std::invalid_argument("masked_softmax: one score per adjacency slot expected");
    Eigen::VectorXd alpha(scores.size());
    const auto& off = g.csr_offsets();
    for (node_t i = 0; i < g.n(); ++i) {
        const auto b = static_cast<Eigen::Index>(off[i]), e = static_cast<Eigen::Index>(off[i + 1]);
        if (b == e) continue;
        const double mx = scores.segment(b, e - b).maxCoeff();
        double total = 0.0;
        for (Eigen::Index s = b; s < e; ++s) total += (alpha[s] = std::exp(scores[s] - mx));
        for (Eigen::Index s = b; s < e; ++s) alpha[s] /= total;
    }
    return alpha;
}

namespace detail {

/// out_i = sum_{slots s of i} coeff_s * z_{target(s)}
inline Eigen::MatrixXd aggregate(const AttentionGraph& ag, const Eigen::VectorXd& coeff, const Eigen::MatrixXd& z) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ag.graph.n()), z.cols());
    const auto& tgt = ag.graph.csr_targets();
    for (std::size_t s = 0; s < tgt.size(); ++s)
        out.row(static_cast<Eigen::Index>(ag.slot_source[s])) +=
            coeff[static_cast<Eigen::Index>(s)] * z.row(static_cast<Eigen::Index>(tgt[s]));
    return out;
}

inline Eigen::MatrixXd activate(const Eigen::MatrixXd& x, bool hidden) {
    return hidden ? x.unaryExpr([](double v) { return elu(v); }).eval() : x;
}

}  // namespace detail

/**
 * One attention layer given precomputed attention coefficients per head.
 * Each head aggregates W_n h over the neighbourhood (self included), hidden
 * layers apply ELU per head, heads are concatenated (own ELU(W_n h) block
 * first in sep mode) and projected by W_out.
 */
inline Eigen::MatrixXd layer_forward(const AttentionGraph& ag, const Eigen::MatrixXd& h_prev, const LayerParams& lp,
                                     std::span<const Eigen::VectorXd> coefficients, Aggregation aggregation,
                                     bool hidden) {
    const std::size_t heads = lp.heads.size();
    if (coefficients.size() != heads) throw std::invalid_argument("layer_forward: one coefficient vector per head");
    const Eigen::Index hdim = lp.heads.front().w_n.rows();
    const Eigen::Index block = static_cast<Eigen::Index>(heads) * hdim;
    const bool sep = aggregation == Aggregation::sep;
    Eigen::MatrixXd concat(h_prev.rows(), sep ? 2 * block : block);
    for (std::size_t m = 0; m < heads; ++m) {
        const Eigen::MatrixXd z = h_prev * lp.heads[m].w_n.transpose();
        const Eigen::MatrixXd agg = detail::aggregate(ag, coefficients[m], z);
        const auto col = static_cast<Eigen::Index>(m) * hdim;
        if (sep) {
            concat.middleCols(col, hdim) = detail::activate(z, hidden);
            concat.middleCols(block + col, hdim) = detail::activate(agg, hidden);
        } else {
            concat.middleCols(col, hdim) = detail::activate(agg, hidden);
        }
    }
    return concat * lp.w_out.transpose();
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/**
 * Everything the reverse pass needs from one layer. Heads are stacked:
 * column block m*hidden..(m+1)*hidden of z/agg belongs to head m, and column m
 * of the per-slot tables belongs to head m.
 */
struct LayerCache {
    RowMatrix x_used;      ///< N x d_in after input dropout
    RowMatrix in_scale;    ///< dropout multipliers, empty when off
    RowMatrix z;           ///< N x heads*hidden
    RowMatrix projected;   ///< slots x heads*edge_proj_dim (dgat only)
    RowMatrix pre;         ///< slots x heads, before LeakyReLU
    RowMatrix alpha;       ///< slots x heads
    RowMatrix alpha_used;  ///< after attention dropout
    RowMatrix att_scale;   ///< empty when off
    RowMatrix agg;         ///< N x heads*hidden, before activation
    RowMatrix concat;
};

struct ForwardCache {
    std::vector<LayerCache> layers;
};

inline RowMatrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    RowMatrix m(rows, cols);
    const double keep = 1.0 / (1.0 - p);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform() < p ? 0.0 : keep;
    return m;
}

namespace detail {

inline Eigen::MatrixXd stack_node_weights(const LayerParams& lp) {
    const Eigen::Index h = lp.heads.front().w_n.rows();
    Eigen::MatrixXd w(h * static_cast<Eigen::Index>(lp.heads.size()), lp.heads.front().w_n.cols());
    for (std::size_t m = 0; m < lp.heads.size(); ++m) w.middleRows(static_cast<Eigen::Index>(m) * h, h) = lp.heads[m].w_n;
    return w;
}

inline Eigen::MatrixXd stack_edge_weights(const LayerParams& lp) {
    const Eigen::Index de = lp.heads.front().w_e.rows();
    Eigen::MatrixXd w(de * static_cast<Eigen::Index>(lp.heads.size()), 2);
    for (std::size_t m = 0; m < lp.heads.size(); ++m) w.middleRows(static_cast<Eigen::Index>(m) * de, de) = lp.heads[m].w_e;
    return w;
}

}  // namespace detail

/// Full forward pass returning N x C logits. Dropout is applied only when
/// `rng` is non-null and the model's dropout rate is positive.
inline Eigen::MatrixXd forward(const Model& model, const AttentionGraph& ag, const Eigen::MatrixXd& x, Rng* rng = nullptr,
                               ForwardCache* cache = nullptr) {
    const auto& cfg = model.config;
    if (static_cast<std::size_t>(x.rows()) != ag.graph.n() || static_cast<std::size_t>(x.cols()) != cfg.input_dim)
        throw std::invalid_argument("forward: feature matrix shape does not match the model and graph");
    const bool drop = rng != nullptr && cfg.dropout > 0.0;
    const bool sep = cfg.aggregation == Aggregation::sep;
    const bool dgat = cfg.kind == AttentionKind::dgat;
    const auto hdim = static_cast<Eigen::Index>(cfg.hidden);
    const auto heads = static_cast<Eigen::Index>(cfg.heads);
    const auto de = static_cast<Eigen::Index>(cfg.edge_proj_dim);
    const Eigen::Index block = heads * hdim;
    const auto n = static_cast<Eigen::Index>(ag.graph.n());
    const auto& tgt = ag.graph.csr_targets();
    const auto& off = ag.graph.csr_offsets();
    const auto slots = static_cast<Eigen::Index>(tgt.size());
    if (cache) cache->layers.assign(cfg.layers, {});

    RowMatrix h = x;
    LayerCache local;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const auto& lp = model.params.layers[l];
        const bool hidden = cfg.is_hidden(l);
        LayerCache& lc = cache ? cache->layers[l] : local;
        if (drop) {
            lc.in_scale = dropout_mask(h.rows(), h.cols(), cfg.dropout, *rng);
            lc.x_used = h.cwiseProduct(lc.in_scale);
        } else {
            lc.in_scale.resize(0, 0);
            lc.x_used = h;
        }
        lc.z.noalias() = lc.x_used * detail::stack_node_weights(lp).transpose();
        if (dgat) lc.projected.noalias() = ag.edge_features * detail::stack_edge_weights(lp).transpose();

        RowMatrix src(n, heads), dst(n, heads);
        for (Eigen::Index m = 0; m < heads; ++m) {
            const auto& a = lp.heads[static_cast<std::size_t>(m)].a;
            src.col(m).noalias() = lc.z.middleCols(m * hdim, hdim) * a.topRows(hdim);
            dst.col(m).noalias() = lc.z.middleCols(m * hdim, hdim) * a.middleRows(hdim, hdim);
        }

        lc.pre.resize(slots, heads);
        for (Eigen::Index s = 0; s < slots; ++s) {
            const auto i = static_cast<Eigen::Index>(ag.slot_source[static_cast<std::size_t>(s)]);
            const auto j = static_cast<Eigen::Index>(tgt[static_cast<std::size_t>(s)]);
            for (Eigen::Index m = 0; m < heads; ++m) {
                double v = src(i, m) + dst(j, m);
                if (dgat) {
                    const auto& a = lp.heads[static_cast<std::size_t>(m)].a;
                    double e = 0.0;
                    for (Eigen::Index k = 0; k < de; ++k) e += lc.projected(s, m * de + k) * a(2 * hdim + k, 0);
                    v += e;
                }
                lc.pre(s, m) = v;
            }
        }

        lc.alpha.resize(slots, heads);
        for (node_t i = 0; i < ag.graph.n(); ++i) {
            const auto b = static_cast<Eigen::Index>(off[i]), e = static_cast<Eigen::Index>(off[i + 1]);
            for (Eigen::Index m = 0; m < heads; ++m) {
                double mx = -std::numeric_limits<double>::infinity();
                for (Eigen::Index s = b; s < e; ++s) mx = std::max(mx, leaky_relu(lc.pre(s, m), cfg.leaky_slope));
                double total = 0.0;
                for (Eigen::Index s = b; s < e; ++s)
                    total += (lc.alpha(s, m) = std::exp(leaky_relu(lc.pre(s, m), cfg.leaky_slope) - mx));
                for (Eigen::Index s = b; s < e; ++s) lc.alpha(s, m) /= total;
            }
        }
        if (drop) {
            lc.att_scale = dropout_mask(slots, heads, cfg.dropout, *rng);
            lc.alpha_used = lc.alpha.cwiseProduct(lc.att_scale);
        } else {
            lc.att_scale.resize(0, 0);
            lc.alpha_used = lc.alpha;
        }

        lc.agg = RowMatrix::Zero(n, block);
        for (Eigen::Index s = 0; s < slots; ++s) {
            const auto i = static_cast<Eigen::Index>(ag.slot_source[static_cast<std::size_t>(s)]);
            const auto j = static_cast<Eigen::Index>(tgt[static_cast<std::size_t>(s)]);
            double* out = lc.agg.row(i).data();
            const double* zin = lc.z.row(j).data();
            for (Eigen::Index m = 0; m < heads; ++m) {
                const double c = lc.alpha_used(s, m);
                for (Eigen::Index k = m * hdim; k < (m + 1) * hdim; ++k) out[k] += c * zin[k];
            }
        }

        lc.concat.resize(n, sep ? 2 * block : block);
        if (sep) {
            lc.concat.leftCols(block) = detail::activate(lc.z, hidden);
            lc.concat.rightCols(block) = detail::activate(lc.agg, hidden);
        } else {
            lc.concat = detail::activate(lc.agg, hidden);
        }
        h.noalias() = lc.concat * lp.w_out.transpose();
    }
    return h;
}

/// Mean cross-entropy of row-softmax(logits) over the given nodes.
inline double cross_entropy(const Eigen::MatrixXd& logits, std::span<const std::size_t> labels,
                            std::span<const node_t> nodes) {
    if (nodes.empty()) throw std::invalid_argument("cross_entropy: empty node mask");
    double acc = 0.0;
    for (node_t i : nodes) {
        const auto r = static_cast<Eigen::Index>(i);
        const double mx = logits.row(r).maxCoeff();
        const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
        acc += lse - logits(r, static_cast<Eigen::Index>(labels[i]));
    }
    return acc / static_cast<double>(nodes.size());
}

/// d loss / d logits: (softmax - onehot) / |nodes| on the masked rows, zero elsewhere.
inline Eigen::MatrixXd cross_entropy_grad(const Eigen::MatrixXd& logits, std::span<const std::size_t> labels,
                                          std::span<const node_t> nodes) {
    if (nodes.empty()) throw std::invalid_argument("cross_entropy_grad: empty node mask");
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
    const double scale = 1.0 / static_cast<double>(nodes.size());
    for (node_t i : nodes) {
        const auto r = static_cast<Eigen::Index>(i);
        Eigen::RowVectorXd y = (logits.row(r).array() - logits.row(r).maxCoeff()).exp();
        y /= y.sum();
        y[static_cast<Eigen::Index>(labels[i])] -= 1.0;
        g.row(r) = y * scale;
    }
    return g;
}

/// Reverse pass through a cached forward. Returns gradients shaped like the parameters.
inline ModelParams backward(const Model& model, const AttentionGraph& ag, const ForwardCache& cache,
                            const Eigen::MatrixXd& dlogits) {
    const auto& cfg = model.config;
    if (cache.layers.size() != cfg.layers) throw std::invalid_argument("backward: cache does not match the model");
    ModelParams grads = model.params.zeros_like();
    const bool sep = cfg.aggregation == Aggregation::sep;
    const bool dgat = cfg.kind == AttentionKind::dgat;
    const auto hdim = static_cast<Eigen::Index>(cfg.hidden);
    const auto heads = static_cast<Eigen::Index>(cfg.heads);
    const auto de = static_cast<Eigen::Index>(cfg.edge_proj_dim);
    const Eigen::Index block = heads * hdim;
    const auto& tgt = ag.graph.csr_targets();
    const auto& off = ag.graph.csr_offsets();
    const auto n = static_cast<Eigen::Index>(ag.graph.n());
    const auto slots = static_cast<Eigen::Index>(tgt.size());

    RowMatrix dh = dlogits;
    for (std::size_t li = cfg.layers; li-- > 0;) {
        const auto& lp = model.params.layers[li];
        const auto& lc = cache.layers[li];
        auto& lg = grads.layers[li];
        const bool hidden = cfg.is_hidden(li);

        lg.w_out.noalias() = dh.transpose() * lc.concat;
        RowMatrix dconcat = dh * lp.w_out;

        RowMatrix dagg = sep ? RowMatrix(dconcat.rightCols(block)) : dconcat;
        if (hidden) dagg = dagg.cwiseProduct(lc.agg.unaryExpr([](double v) { return detail::elu_grad(v); }));
        RowMatrix dz = RowMatrix::Zero(n, block);
        if (sep) {
            dz = dconcat.leftCols(block);
            if (hidden) dz = dz.cwiseProduct(lc.z.unaryExpr([](double v) { return detail::elu_grad(v); }));
        }

        RowMatrix dalpha(slots, heads);
        for (Eigen::Index s = 0; s < slots; ++s) {
            const auto i = static_cast<Eigen::Index>(ag.slot_source[static_cast<std::size_t>(s)]);
            const auto j = static_cast<Eigen::Index>(tgt[static_cast<std::size_t>(s)]);
            const double* gi = dagg.row(i).data();
            const double* zj = lc.z.row(j).data();
            double* dzj = dz.row(j).data();
            for (Eigen::Index m = 0; m < heads; ++m) {
                const double c = lc.alpha_used(s, m);
                double dot = 0.0;
                for (Eigen::Index k = m * hdim; k < (m + 1) * hdim; ++k) {
                    dzj[k] += c * gi[k];
                    dot += gi[k] * zj[k];
                }
                dalpha(s, m) = dot;
            }
        }
        if (lc.att_scale.size() > 0) dalpha = dalpha.cwiseProduct(lc.att_scale);

        RowMatrix dpre(slots, heads);
        RowMatrix src_sum = RowMatrix::Zero(n, heads), dst_sum = RowMatrix::Zero(n, heads);
        for (node_t i = 0; i < ag.graph.n(); ++i) {
            const auto b = static_cast<Eigen::Index>(off[i]), e = static_cast<Eigen::Index>(off[i + 1]);
            const auto ii = static_cast<Eigen::Index>(i);
            for (Eigen::Index m = 0; m < heads; ++m) {
                double dot = 0.0;
                for (Eigen::Index s = b; s < e; ++s) dot += lc.alpha(s, m) * dalpha(s, m);
                for (Eigen::Index s = b; s < e; ++s) {
                    const double dr = lc.alpha(s, m) * (dalpha(s, m) - dot);
                    const double dp = dr * (lc.pre(s, m) > 0.0 ? 1.0 : cfg.leaky_slope);
                    dpre(s, m) = dp;
                    src_sum(ii, m) += dp;
                    dst_sum(static_cast<Eigen::Index>(tgt[static_cast<std::size_t>(s)]), m) += dp;
                }
            }
        }

        for (Eigen::Index m = 0; m < heads; ++m) {
            const auto& hp = lp.heads[static_cast<std::size_t>(m)];
            auto& hg = lg.heads[static_cast<std::size_t>(m)];
            auto zm = lc.z.middleCols(m * hdim, hdim);
            hg.a.topRows(hdim).noalias() = zm.transpose() * src_sum.col(m);
            hg.a.middleRows(hdim, hdim).noalias() = zm.transpose() * dst_sum.col(m);
            dz.middleCols(m * hdim, hdim).noalias() += src_sum.col(m) * hp.a.topRows(hdim).transpose();
            dz.middleCols(m * hdim, hdim).noalias() += dst_sum.col(m) * hp.a.middleRows(hdim, hdim).transpose();
            if (dgat) {
                const auto ae = hp.a.bottomRows(de);
                hg.a.bottomRows(de).noalias() = lc.projected.middleCols(m * de, de).transpose() * dpre.col(m);
                const Eigen::MatrixXd dproj = dpre.col(m) * ae.transpose();  // slots x de
                hg.w_e.noalias() = dproj.transpose() * ag.edge_features;
            }
        }

        const Eigen::MatrixXd dwn = dz.transpose() * lc.x_used;  // heads*hidden x d_in
        for (Eigen::Index m = 0; m < heads; ++m) lg.heads[static_cast<std::size_t>(m)].w_n = dwn.middleRows(m * hdim, hdim);
        if (li > 0) {
            RowMatrix dx = dz * detail::stack_node_weights(lp);
            dh = lc.in_scale.size() > 0 ? RowMatrix(dx.cwiseProduct(lc.in_scale)) : dx;
        }
    }
    return grads;
}

/// Fraction of `nodes` whose argmax logit matches the label.
inline double accuracy(const Eigen::MatrixXd& logits, std::span<const std::size_t> labels, std::span<const node_t> nodes) {
    if (nodes.empty()) return 0.0;
    std::size_t hit = 0;
    for (node_t i : nodes) {
        Eigen::Index best = 0;
        logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
        if (static_cast<std::size_t>(best) == labels[i]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(nodes.size());
}

}  // namespace dgat
