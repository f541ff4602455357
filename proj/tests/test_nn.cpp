#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>

#include <dgat/nn.hpp>
#include <dgat/spectral.hpp>

#include "support.hpp"

using namespace dgat;
using test_support::path_graph;

namespace {

ModelConfig tiny_config(AttentionKind kind, std::size_t in, std::size_t hidden, std::size_t classes, std::size_t layers,
                        std::size_t heads) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.input_dim = in;
    cfg.hidden = hidden;
    cfg.num_classes = classes;
    cfg.layers = layers;
    cfg.heads = heads;
    cfg.dropout = 0.0;
    return cfg;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.normal();
    return m;
}

AttentionGraph with_random_features(const Graph& g, Rng& rng) {
    Graph looped = add_self_loops(g);
    return {looped, random_matrix(static_cast<Eigen::Index>(looped.slot_count()), 2, rng)};
}

/// One layer written against dense adjacency and per-pair feature lookups.
Eigen::MatrixXd dense_layer(const AttentionGraph& ag, const Eigen::MatrixXd& h, const LayerParams& lp,
                            const ModelConfig& cfg, bool hidden) {
    const auto n = static_cast<Eigen::Index>(ag.graph.n());
    const auto hd = static_cast<Eigen::Index>(cfg.hidden);
    const bool sep = cfg.aggregation == Aggregation::sep;
    Eigen::MatrixXd own(n, 0), mixed(n, 0);
    auto act = [&](double v) { return hidden ? (v > 0 ? v : std::exp(v) - 1.0) : v; };
    for (const auto& hp : lp.heads) {
        const Eigen::MatrixXd z = h * hp.w_n.transpose();
        Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(n, hd);
        for (Eigen::Index i = 0; i < n; ++i) {
            std::vector<double> score(static_cast<std::size_t>(n), 0.0);
            double total = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                const auto s = ag.graph.slot_of(static_cast<node_t>(i), static_cast<node_t>(j));
                if (s == ag.graph.slot_count()) continue;
                Eigen::VectorXd cat(2 * hd + hp.w_e.rows());
                cat << z.row(i).transpose(), z.row(j).transpose(),
                    hp.w_e * ag.edge_features.row(static_cast<Eigen::Index>(s)).transpose();
                if (cfg.kind == AttentionKind::gat) cat.tail(hp.w_e.rows()).setZero();
                double e = hp.a.col(0).dot(cat);
                e = e > 0 ? e : cfg.leaky_slope * e;
                score[static_cast<std::size_t>(j)] = std::exp(e);
                total += std::exp(e);
            }
            for (Eigen::Index j = 0; j < n; ++j) agg.row(i) += score[static_cast<std::size_t>(j)] / total * z.row(j);
        }
        Eigen::MatrixXd o(n, own.cols() + hd), m(n, mixed.cols() + hd);
        o << own, z.unaryExpr(act);
        m << mixed, agg.unaryExpr(act);
        own = o;
        mixed = m;
    }
    Eigen::MatrixXd concat(n, sep ? 2 * mixed.cols() : mixed.cols());
    if (sep)
        concat << own, mixed;
    else
        concat = mixed;
    return concat * lp.w_out.transpose();
}

}  // namespace

TEST(EdgeFeatures, PathTwoHandValues) {
    auto field = directional_field(path_graph(2), std::vector<double>{0.0, 1.0}, 0.0);
    Graph g = add_self_loops(path_graph(2));
    Eigen::MatrixXd f = edge_features(g, field);
    auto row = [&](node_t i, node_t j) { return f.row(static_cast<Eigen::Index>(g.slot_of(i, j))); };
    EXPECT_EQ(row(0, 1)(0), 1.0);
    EXPECT_EQ(row(0, 1)(1), 1.0);
    EXPECT_EQ(row(1, 0)(0), 1.0);
    EXPECT_EQ(row(1, 0)(1), -1.0);
    EXPECT_EQ(row(0, 0)(0), 0.0);
    EXPECT_EQ(row(0, 0)(1), -1.0);
    EXPECT_EQ(row(1, 1)(0), 0.0);
    EXPECT_EQ(row(1, 1)(1), 1.0);
}

TEST(EdgeFeatures, ConstantSignalAndMissingEdge) {
    Graph p3 = path_graph(3);
    auto field = directional_field(p3, std::vector<double>{4.0, 4.0, 4.0});
    EXPECT_TRUE((edge_features(add_self_loops(p3), field).array() == 0.0).all());
    Graph extra = build_graph(3, {{0, 1}, {1, 2}, {0, 2}});
    EXPECT_THROW(edge_features(extra, field), std::invalid_argument);
}

TEST(AttentionScores, TwoNodeHandValue) {
    HeadParams hp{Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 2), Eigen::MatrixXd::Ones(3, 1)};
    Graph g = add_self_loops(path_graph(2));
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(4, 2);
    f.row(static_cast<Eigen::Index>(g.slot_of(0, 1))) << 0.5, 0.25;
    AttentionGraph ag(g, f);
    Eigen::MatrixXd h(2, 1);
    h << 1.0, -2.0;
    const auto s01 = static_cast<Eigen::Index>(g.slot_of(0, 1));
    const auto s00 = static_cast<Eigen::Index>(g.slot_of(0, 0));
    // gat: LeakyReLU(1 - 2) = -0.2; dgat adds W_e f = 0.75: LeakyReLU(-0.25) = -0.05.
    EXPECT_DOUBLE_EQ(attention_scores(ag, h, hp, AttentionKind::gat)[s01], -0.2);
    EXPECT_DOUBLE_EQ(attention_scores(ag, h, hp, AttentionKind::dgat)[s01], -0.05);
    EXPECT_DOUBLE_EQ(attention_scores(ag, h, hp, AttentionKind::dgat)[s00], 2.0);
    hp.a.setZero();
    EXPECT_TRUE((attention_scores(ag, h, hp, AttentionKind::dgat).array() == 0.0).all());
}

TEST(MaskedSoftmax, Examples) {
    Graph star = add_self_loops(build_graph(3, {{0, 1}, {0, 2}}));
    Eigen::VectorXd scores = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(star.slot_count()));
    scores[static_cast<Eigen::Index>(star.slot_of(0, 1))] = std::log(2.0);
    scores[static_cast<Eigen::Index>(star.slot_of(0, 2))] = std::log(4.0);
    auto alpha = masked_softmax(star, scores);
    EXPECT_NEAR(alpha[static_cast<Eigen::Index>(star.slot_of(0, 0))], 1.0 / 7.0, 1e-15);
    EXPECT_NEAR(alpha[static_cast<Eigen::Index>(star.slot_of(0, 1))], 2.0 / 7.0, 1e-15);
    EXPECT_NEAR(alpha[static_cast<Eigen::Index>(star.slot_of(0, 2))], 4.0 / 7.0, 1e-15);
    EXPECT_EQ(alpha[static_cast<Eigen::Index>(star.slot_of(1, 0))], 0.5);

    Graph lonely = add_self_loops(build_graph(2, {}));
    EXPECT_EQ(masked_softmax(lonely, Eigen::VectorXd::Constant(2, 123.0))[0], 1.0);
    EXPECT_THROW(masked_softmax(lonely, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST(LayerForward, SelfLoopsOnlyIsIdentity) {
    Rng rng(1);
    AttentionGraph ag = AttentionGraph::without_features(build_graph(4, {}));
    LayerParams lp;
    lp.heads.push_back({Eigen::MatrixXd::Identity(3, 3), Eigen::MatrixXd::Zero(2, 2), random_matrix(8, 1, rng)});
    lp.w_out = Eigen::MatrixXd::Identity(3, 3);
    Eigen::MatrixXd h = random_matrix(4, 3, rng);
    std::vector<Eigen::VectorXd> coeff{masked_softmax(ag.graph, attention_scores(ag, h, lp.heads[0], AttentionKind::gat))};
    EXPECT_TRUE((layer_forward(ag, h, lp, coeff, Aggregation::plain, false).array() == h.array()).all());
}

TEST(LayerForward, UniformCoefficientsGiveNeighbourhoodMean) {
    Rng rng(2);
    AttentionGraph ag = AttentionGraph::without_features(path_graph(3));
    LayerParams lp;
    lp.heads.push_back({Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(6, 1)});
    lp.w_out = Eigen::MatrixXd::Identity(2, 2);
    Eigen::MatrixXd h = random_matrix(3, 2, rng);
    Eigen::VectorXd coeff(static_cast<Eigen::Index>(ag.graph.slot_count()));
    for (node_t i = 0; i < 3; ++i)
        for (node_t j : ag.graph.neighbors(i))
            coeff[static_cast<Eigen::Index>(ag.graph.slot_of(i, j))] = 1.0 / static_cast<double>(ag.graph.degree(i));
    Eigen::MatrixXd out = layer_forward(ag, h, lp, std::vector<Eigen::VectorXd>{coeff}, Aggregation::plain, false);
    EXPECT_TRUE(out.row(0).isApprox((h.row(0) + h.row(1)) / 2.0, 1e-15));
    EXPECT_TRUE(out.row(1).isApprox((h.row(0) + h.row(1) + h.row(2)) / 3.0, 1e-15));
    // a = 0 gives uniform softmax, so the learned path agrees.
    std::vector<Eigen::VectorXd> learned{masked_softmax(ag.graph, attention_scores(ag, h, lp.heads[0], AttentionKind::gat))};
    EXPECT_TRUE(layer_forward(ag, h, lp, learned, Aggregation::plain, false).isApprox(out, 1e-14));
}

TEST(Forward, MatchesDenseOracleOnThreeNodes) {
    Rng rng(3);
    AttentionGraph ag = with_random_features(path_graph(3), rng);
    for (auto kind : {AttentionKind::gat, AttentionKind::dgat}) {
        for (auto agg : {Aggregation::plain, Aggregation::sep}) {
            ModelConfig cfg = tiny_config(kind, 2, 2, 2, 2, 2);
            cfg.aggregation = agg;
            Model model = init_model(cfg, 5);
            Eigen::MatrixXd x = random_matrix(3, 2, rng);
            Eigen::MatrixXd h1 = dense_layer(ag, x, model.params.layers[0], cfg, true);
            Eigen::MatrixXd expected = dense_layer(ag, h1, model.params.layers[1], cfg, false);
            EXPECT_TRUE(forward(model, ag, x).isApprox(expected, 1e-12)) << to_string(kind) << " " << to_string(agg);
        }
    }
}

TEST(Forward, MatchesPerHeadReferencePath) {
    Rng rng(4);
    AttentionGraph ag = with_random_features(test_support::random_connected_graph(20, 0.15, rng), rng);
    for (auto kind : {AttentionKind::gat, AttentionKind::dgat}) {
        for (auto agg : {Aggregation::plain, Aggregation::sep}) {
            ModelConfig cfg = tiny_config(kind, 3, 4, 3, 2, 3);
            cfg.aggregation = agg;
            Model model = init_model(cfg, 6);
            const Eigen::MatrixXd x = random_matrix(20, 3, rng);
            Eigen::MatrixXd h = x;
            for (std::size_t l = 0; l < cfg.layers; ++l) {
                const auto& lp = model.params.layers[l];
                std::vector<Eigen::VectorXd> coeff;
                for (const auto& hp : lp.heads) coeff.push_back(masked_softmax(ag.graph, attention_scores(ag, h, hp, kind)));
                h = layer_forward(ag, h, lp, coeff, agg, cfg.is_hidden(l));
            }
            EXPECT_TRUE(forward(model, ag, x).isApprox(h, 1e-12)) << to_string(kind) << " " << to_string(agg);
        }
    }
}

TEST(Forward, AttentionRowsAreProbabilityVectors) {
    Rng rng(8);
    AttentionGraph ag = with_random_features(test_support::random_connected_graph(30, 0.1, rng), rng);
    Model model = init_model(tiny_config(AttentionKind::dgat, 2, 4, 3, 2, 2), 9);
    ForwardCache cache;
    forward(model, ag, random_matrix(30, 2, rng), nullptr, &cache);
    for (const auto& lc : cache.layers) {
        EXPECT_TRUE((lc.alpha.array() >= 0.0).all());
        for (node_t i = 0; i < ag.graph.n(); ++i) {
            const auto b = static_cast<Eigen::Index>(ag.graph.csr_offsets()[i]);
            const auto e = static_cast<Eigen::Index>(ag.graph.csr_offsets()[i + 1]);
            for (Eigen::Index m = 0; m < lc.alpha.cols(); ++m) EXPECT_NEAR(lc.alpha.col(m).segment(b, e - b).sum(), 1.0, 1e-10);
        }
    }
}

TEST(Forward, ZeroEdgeWeightsReproduceGatBitwise) {
    Rng rng(10);
    AttentionGraph ag = with_random_features(test_support::random_connected_graph(25, 0.1, rng), rng);
    const Eigen::MatrixXd x = random_matrix(25, 2, rng);
    for (auto agg : {Aggregation::plain, Aggregation::sep}) {
        ModelConfig dc = tiny_config(AttentionKind::dgat, 2, 8, 5, 2, 8);
        dc.aggregation = agg;
        ModelConfig gc = dc;
        gc.kind = AttentionKind::gat;
        Model d = init_model(dc, 11), g = init_model(gc, 11);
        for (auto& l : d.params.layers)
            for (auto& h : l.heads) h.w_e.setZero();
        const Eigen::MatrixXd od = forward(d, ag, x), og = forward(g, ag, x);
        EXPECT_EQ(std::memcmp(od.data(), og.data(), sizeof(double) * static_cast<std::size_t>(od.size())), 0);
    }
}

TEST(Forward, PermutationEquivariant) {
    Rng rng(12);
    const std::size_t n = 20;
    Graph g = test_support::random_connected_graph(n, 0.15, rng);
    AttentionGraph ag = with_random_features(g, rng);
    std::vector<node_t> perm(n);
    std::iota(perm.begin(), perm.end(), node_t{0});
    rng.shuffle(perm);
    std::vector<std::pair<node_t, node_t>> pe;
    for (const auto& e : g.edges()) pe.emplace_back(perm[e.u], perm[e.v]);
    Graph pg = add_self_loops(build_graph(n, pe));
    Eigen::MatrixXd pf(static_cast<Eigen::Index>(pg.slot_count()), 2);
    for (node_t i = 0; i < n; ++i)
        for (node_t j : ag.graph.neighbors(i))
            pf.row(static_cast<Eigen::Index>(pg.slot_of(perm[i], perm[j]))) =
                ag.edge_features.row(static_cast<Eigen::Index>(ag.graph.slot_of(i, j)));
    AttentionGraph pag(pg, pf);

    Model model = init_model(tiny_config(AttentionKind::dgat, 3, 4, 3, 2, 2), 13);
    const Eigen::MatrixXd x = random_matrix(static_cast<Eigen::Index>(n), 3, rng);
    Eigen::MatrixXd px(x.rows(), x.cols());
    for (node_t i = 0; i < n; ++i) px.row(static_cast<Eigen::Index>(perm[i])) = x.row(static_cast<Eigen::Index>(i));
    const Eigen::MatrixXd out = forward(model, ag, x), pout = forward(model, pag, px);
    for (node_t i = 0; i < n; ++i)
        EXPECT_TRUE(pout.row(static_cast<Eigen::Index>(perm[i])).isApprox(out.row(static_cast<Eigen::Index>(i)), 1e-12));
}

TEST(Backward, EdgeWeightsGetNoGradientWithoutEdgeFeatures) {
    Rng rng(14);
    AttentionGraph ag = AttentionGraph::without_features(test_support::random_connected_graph(15, 0.2, rng));
    Model model = init_model(tiny_config(AttentionKind::dgat, 2, 3, 3, 2, 2), 15);
    const Eigen::MatrixXd x = random_matrix(15, 2, rng);
    ForwardCache cache;
    Eigen::MatrixXd logits = forward(model, ag, x, nullptr, &cache);
    std::vector<std::size_t> labels(15);
    for (std::size_t i = 0; i < 15; ++i) labels[i] = i % 3;
    std::vector<node_t> train{0, 1, 2, 3, 4, 5, 6, 7};
    ModelParams g = backward(model, ag, cache, cross_entropy_grad(logits, labels, train));
    for (const auto& l : g.layers)
        for (const auto& h : l.heads) {
            EXPECT_TRUE((h.w_e.array() == 0.0).all());
            EXPECT_TRUE((h.a.bottomRows(h.w_e.rows()).array() == 0.0).all());
            EXPECT_GT(h.w_n.norm(), 0.0);
        }
}

TEST(Loss, UniformLogitsGiveLogC) {
    for (std::size_t c : {2u, 5u, 7u}) {
        Eigen::MatrixXd logits = Eigen::MatrixXd::Constant(4, static_cast<Eigen::Index>(c), 3.5);
        std::vector<std::size_t> labels{0, 1, 1, 0};
        std::vector<node_t> nodes{0, 1, 3};
        EXPECT_NEAR(cross_entropy(logits, labels, nodes), std::log(static_cast<double>(c)), 1e-12);
    }
}

TEST(Loss, SaturatedCorrectLogitsVanish) {
    Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(3, 3);
    std::vector<std::size_t> labels{2, 0, 1};
    for (Eigen::Index i = 0; i < 3; ++i) logits(i, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])) = 40.0;
    std::vector<node_t> nodes{0, 1, 2};
    EXPECT_LT(cross_entropy(logits, labels, nodes), 1e-6);
    EXPECT_THROW(cross_entropy(logits, labels, {}), std::invalid_argument);
}

TEST(Loss, MatchesDirectSummationAndGradientIdentity) {
    Rng rng(16);
    Eigen::MatrixXd logits = random_matrix(6, 4, rng);
    std::vector<std::size_t> labels{3, 0, 2, 1, 1, 0};
    std::vector<node_t> nodes{0, 2, 3, 5};
    double direct = 0.0;
    Eigen::MatrixXd expected_grad = Eigen::MatrixXd::Zero(6, 4);
    for (node_t i : nodes) {
        const auto r = static_cast<Eigen::Index>(i);
        const Eigen::RowVectorXd y = logits.row(r).array().exp() / logits.row(r).array().exp().sum();
        direct -= std::log(y[static_cast<Eigen::Index>(labels[i])]);
        Eigen::RowVectorXd z = Eigen::RowVectorXd::Zero(4);
        z[static_cast<Eigen::Index>(labels[i])] = 1.0;
        expected_grad.row(r) = (y - z) / 4.0;
    }
    EXPECT_NEAR(cross_entropy(logits, labels, nodes), direct / 4.0, 1e-14);
    const Eigen::MatrixXd grad = cross_entropy_grad(logits, labels, nodes);
    EXPECT_LT((grad - expected_grad).cwiseAbs().maxCoeff(), 1e-10);
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < logits.size(); ++k) {
        Eigen::MatrixXd up = logits, down = logits;
        up.data()[k] += h;
        down.data()[k] -= h;
        const double fd = (cross_entropy(up, labels, nodes) - cross_entropy(down, labels, nodes)) / (2 * h);
        EXPECT_NEAR(fd, grad.data()[k], 1e-8);
    }
}

TEST(Accuracy, PerfectAndConstantPredictors) {
    std::vector<std::size_t> labels(50);
    for (std::size_t i = 0; i < 50; ++i) labels[i] = i % 5;
    std::vector<node_t> nodes(50);
    std::iota(nodes.begin(), nodes.end(), node_t{0});
    Eigen::MatrixXd perfect = Eigen::MatrixXd::Zero(50, 5), constant = Eigen::MatrixXd::Zero(50, 5);
    for (Eigen::Index i = 0; i < 50; ++i) {
        perfect(i, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])) = 1.0;
        constant(i, 3) = 1.0;
    }
    EXPECT_EQ(accuracy(perfect, labels, nodes), 1.0);
    EXPECT_DOUBLE_EQ(accuracy(constant, labels, nodes), 0.2);
}

TEST(ModelConfig, NamesAndValidation) {
    EXPECT_EQ(parse_attention_kind("gat"), AttentionKind::gat);
    EXPECT_EQ(parse_aggregation(to_string(Aggregation::sep)), Aggregation::sep);
    EXPECT_THROW(parse_attention_kind("gcn"), std::invalid_argument);
    ModelConfig cfg;
    cfg.dropout = 1.0;
    EXPECT_THROW(init_model(cfg, 0), std::invalid_argument);
    Model m = init_model(tiny_config(AttentionKind::dgat, 2, 3, 4, 2, 2), 0);
    EXPECT_EQ(m.params.names().front(), "layer0.head0.w_n");
    EXPECT_EQ(m.params.names().size(), m.params.tensors().size());
    EXPECT_EQ(m.params.layers[1].w_out.rows(), 4);
}
