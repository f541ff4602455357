#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "graph.hpp"

namespace dgat {

/// Raised when an eigensolve fails or a numeric precondition cannot be met.
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// gamma in (0, 1], alpha in [0, 1].
struct LaplacianParams {
    double gamma = 1.0;
    double alpha = 1.0;

    void validate() const {
        if (!(gamma > 0.0 && gamma <= 1.0))
            throw std::invalid_argument("LaplacianParams: gamma must lie in (0, 1], got " + std::to_string(gamma));
        if (!(alpha >= 0.0 && alpha <= 1.0))
            throw std::invalid_argument("LaplacianParams: alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
};

struct SpectralOptions {
    /// Dense matrices beyond this many rows are refused.
    std::size_t max_dense_nodes = 20000;
    /// Eigenvalues below this are treated as the trivial zero mode.
    double zero_threshold = 1e-8;
    /// Absolute residual above which a solve is reported as failed.
    double residual_tolerance = 1e-6;
};

namespace detail {

inline void require_spectral_input(const Graph& g, const SpectralOptions& opts, const char* where) {
    if (g.n() > opts.max_dense_nodes)
        throw std::invalid_argument(std::string(where) + ": graph has " + std::to_string(g.n()) +
                                    " nodes, above the dense limit of " + std::to_string(opts.max_dense_nodes));
    for (node_t i = 0; i < g.n(); ++i)
        if (g.degree(i) == 0 && g.n() > 1)
            throw graph_error(std::string(where) + ": node " + std::to_string(i) + " is isolated");
    if (!connectivity(g).connected()) throw graph_error(std::string(where) + ": graph is not connected");
}

/// Diagonal of gamma*D + (1-gamma)*I.
inline Eigen::VectorXd shifted_degrees(const Graph& g, double gamma) {
    Eigen::VectorXd s(static_cast<Eigen::Index>(g.n()));
    for (node_t i = 0; i < g.n(); ++i)
        s[static_cast<Eigen::Index>(i)] = gamma * static_cast<double>(g.degree(i)) + (1.0 - gamma);
    return s;
}

inline Eigen::MatrixXd dense_adjacency(const Graph& g) {
    const auto n = static_cast<Eigen::Index>(g.n());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (node_t i = 0; i < g.n(); ++i)
        for (node_t j : g.neighbors(i)) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
    return a;
}

}  // namespace detail

/// Combinatorial Laplacian D - A.
inline Eigen::MatrixXd combinatorial_laplacian(const Graph& g) {
    Eigen::MatrixXd a = detail::dense_adjacency(g);
    Eigen::VectorXd d = a.rowwise().sum();
    Eigen::MatrixXd l = -a;
    l.diagonal() += d;
    return l;
}

/**
 * gamma * S^{-alpha} L S^{alpha-1} with S = gamma*D + (1-gamma)*I.
 *
 * alpha = 1, gamma = 1 gives D^{-1} L; alpha = 1/2, gamma = 1 gives the
 * symmetric normalized Laplacian.
 */
inline Eigen::MatrixXd parameterized_laplacian(const Graph& g, const LaplacianParams& p,
                                               const SpectralOptions& opts = {}) {
    p.validate();
    detail::require_spectral_input(g, opts, "parameterized_laplacian");
    const Eigen::VectorXd s = detail::shifted_degrees(g, p.gamma);
    const Eigen::ArrayXd left = s.array().pow(-p.alpha);
    const Eigen::ArrayXd right = s.array().pow(p.alpha - 1.0);
    Eigen::MatrixXd l = combinatorial_laplacian(g);
    return p.gamma * (left.matrix().asDiagonal() * l * right.matrix().asDiagonal());
}

/// I - L^(alpha,gamma). Entrywise non-negative; row-stochastic when alpha = 1.
inline Eigen::MatrixXd parameterized_adjacency(const Graph& g, const LaplacianParams& p,
                                               const SpectralOptions& opts = {}) {
    Eigen::MatrixXd m = -parameterized_laplacian(g, p, opts);
    m.diagonal().array() += 1.0;
    return m;
}

/**
 * Eigenpairs of the parameterized Laplacian family at a fixed gamma.
 *
 * The symmetric member (alpha = 1/2) is solved; eigenvectors of the alpha
 * member are its columns scaled by S^{1/2-alpha}. Every column is sign
 * canonicalized so that the largest-magnitude entry of the scaled vector is
 * positive (lowest index wins near-ties).
 */
struct SpectralBundle {
    LaplacianParams params;
    std::vector<double> eigenvalues;  ///< ascending
    Eigen::MatrixXd sym_eigvecs;      ///< orthonormal columns U
    Eigen::VectorXd scale_diag;       ///< S^{1/2-alpha}
    std::vector<double> phi1;         ///< eigenvector of the smallest positive eigenvalue
    bool lambda1_degenerate = false;  ///< lambda1 has multiplicity > 1 (phi1 is then one arbitrary choice)

    std::size_t n() const { return eigenvalues.size(); }

    /// k-th eigenvector of L^(alpha,gamma).
    Eigen::VectorXd eigenvector(std::size_t k) const {
        return scale_diag.cwiseProduct(sym_eigvecs.col(static_cast<Eigen::Index>(k)));
    }

    /// Entry i of the k-th eigenvector.
    double phi(std::size_t k, node_t i) const {
        const auto r = static_cast<Eigen::Index>(i);
        return scale_diag[r] * sym_eigvecs(r, static_cast<Eigen::Index>(k));
    }
};

/// Index of the canonical pivot: the lowest index whose magnitude is within a
/// relative 1e-9 of the maximum.
inline std::size_t sign_pivot(std::span<const double> v) {
    double mx = 0.0;
    for (double x : v) mx = std::max(mx, std::abs(x));
    for (std::size_t i = 0; i < v.size(); ++i)
        if (std::abs(v[i]) >= mx * (1.0 - 1e-9)) return i;
    return 0;
}

inline SpectralBundle eigendecompose(const Graph& g, const LaplacianParams& p, const SpectralOptions& opts = {}) {
    p.validate();
    detail::require_spectral_input(g, opts, "eigendecompose");
    if (g.n() < 2) throw graph_error("eigendecompose: need at least two nodes for a non-trivial eigenvector");

    const Eigen::VectorXd s = detail::shifted_degrees(g, p.gamma);
    const Eigen::VectorXd inv_sqrt = s.array().rsqrt().matrix();
    Eigen::MatrixXd sym = p.gamma * (inv_sqrt.asDiagonal() * combinatorial_laplacian(g) * inv_sqrt.asDiagonal());
    sym = 0.5 * (sym + sym.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) {
        const double resid = (sym * solver.eigenvectors() - solver.eigenvectors() * solver.eigenvalues().asDiagonal()).norm();
        throw numeric_error("eigendecompose: symmetric eigensolver did not converge (residual " + std::to_string(resid) + ")");
    }
    const Eigen::MatrixXd& u = solver.eigenvectors();
    const double resid = (sym * u - u * solver.eigenvalues().asDiagonal()).norm();
    if (!(resid <= opts.residual_tolerance * std::max(1.0, static_cast<double>(g.n()))))
        throw numeric_error("eigendecompose: residual " + std::to_string(resid) + " exceeds tolerance");

    SpectralBundle b;
    b.params = p;
    b.scale_diag = s.array().pow(0.5 - p.alpha).matrix();
    b.sym_eigvecs = u;
    b.eigenvalues.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + solver.eigenvalues().size());

    const auto n = static_cast<Eigen::Index>(g.n());
    std::vector<double> scaled(g.n());
    for (Eigen::Index k = 0; k < n; ++k) {
        for (Eigen::Index i = 0; i < n; ++i) scaled[static_cast<std::size_t>(i)] = b.scale_diag[i] * u(i, k);
        const auto pivot = sign_pivot(scaled);
        if (scaled[pivot] < 0.0) b.sym_eigvecs.col(k) *= -1.0;
    }

    if (b.eigenvalues[1] <= opts.zero_threshold)
        throw graph_error("eigendecompose: second eigenvalue is zero; graph is not connected");
    if (g.n() > 2 && b.eigenvalues[2] - b.eigenvalues[1] <= 1e-9 * std::max(1.0, b.eigenvalues[1]))
        b.lambda1_degenerate = true;

    Eigen::VectorXd v1 = b.eigenvector(1);
    b.phi1.assign(v1.data(), v1.data() + v1.size());
    return b;
}

/// ||(1/gamma) L^(alpha,gamma) - L||_F / ||L||_F for each gamma.
inline std::vector<double> limit_check_combinatorial(const Graph& g, double alpha, std::span<const double> gammas,
                                                     const SpectralOptions& opts = {}) {
    const Eigen::MatrixXd l = combinatorial_laplacian(g);
    const double ln = l.norm();
    if (ln == 0.0) throw graph_error("limit_check_combinatorial: graph has no edges");
    std::vector<double> errs;
    errs.reserve(gammas.size());
    for (double gamma : gammas) {
        Eigen::MatrixXd lp = parameterized_laplacian(g, {gamma, alpha}, opts);
        errs.push_back((lp / gamma - l).norm() / ln);
    }
    return errs;
}

namespace detail {

inline void require_random_walk(const SpectralBundle& b, const char* where) {
    if (b.params.alpha != 1.0)
        throw std::invalid_argument(std::string(where) + ": requires the random-walk member (alpha = 1), got alpha = " +
                                    std::to_string(b.params.alpha));
}

inline void require_node(const SpectralBundle& b, node_t i, const char* where) {
    if (i >= b.n()) throw std::out_of_range(std::string(where) + ": node " + std::to_string(i) + " out of range");
}

}  // namespace detail

/// Natural log of the diffusion distance. Stable for large t where the
/// plain value underflows; -inf when the two embeddings coincide.
inline double log_diffusion_distance(const SpectralBundle& b, node_t i, node_t j, double t) {
    detail::require_random_walk(b, "diffusion_distance");
    detail::require_node(b, i, "diffusion_distance");
    detail::require_node(b, j, "diffusion_distance");
    if (!(t > 0.0)) throw std::invalid_argument("diffusion_distance: t must be positive");
    if (i == j) return -std::numeric_limits<double>::infinity();

    const double lam1 = b.eigenvalues[1];
    double acc = 0.0;
    for (std::size_t k = 1; k < b.n(); ++k) {
        const double diff = b.phi(k, i) - b.phi(k, j);
        acc += std::exp(-2.0 * t * (b.eigenvalues[k] - lam1)) * diff * diff;
    }
    if (acc == 0.0) return -std::numeric_limits<double>::infinity();
    return -t * lam1 + 0.5 * std::log(acc);
}

/// sqrt(sum_{k>=1} exp(-2 t lambda_k) (phi_k(i) - phi_k(j))^2)
inline double diffusion_distance(const SpectralBundle& b, node_t i, node_t j, double t) {
    detail::require_random_walk(b, "diffusion_distance");
    detail::require_node(b, i, "diffusion_distance");
    detail::require_node(b, j, "diffusion_distance");
    if (!(t > 0.0)) throw std::invalid_argument("diffusion_distance: t must be positive");
    if (i == j) return 0.0;
    double acc = 0.0;
    for (std::size_t k = 1; k < b.n(); ++k) {
        const double diff = b.phi(k, i) - b.phi(k, j);
        acc += std::exp(-2.0 * t * b.eigenvalues[k]) * diff * diff;
    }
    return std::sqrt(acc);
}

/// |phi1(i) - phi1(j)|
inline double spectral_distance(const SpectralBundle& b, node_t i, node_t j) {
    detail::require_node(b, i, "spectral_distance");
    detail::require_node(b, j, "spectral_distance");
    return std::abs(b.phi1[i] - b.phi1[j]);
}

/**
 * Time bound after which moving from i to m shrinks the diffusion distance to j.
 *
 * `raw` is log(first-mode gap / higher-mode gap sum) / (2 (lambda1 - lambda2)).
 * `value` is raw clamped at zero, so t = floor(value) + 1 is a valid positive
 * diffusion time strictly above raw. `vacuous` marks a zero higher-mode sum,
 * where the bound holds for every t and value is 0.
 */
struct SurrogateBound {
    double raw = 0.0;
    double value = 0.0;
    bool vacuous = false;

    double time() const { return std::floor(value) + 1.0; }
};

inline SurrogateBound surrogate_constant(const SpectralBundle& b, node_t i, node_t j, node_t m) {
    detail::require_random_walk(b, "surrogate_constant");
    detail::require_node(b, i, "surrogate_constant");
    detail::require_node(b, j, "surrogate_constant");
    detail::require_node(b, m, "surrogate_constant");
    const double dmj = spectral_distance(b, m, j);
    const double dij = spectral_distance(b, i, j);
    if (!(dmj < dij))
        throw std::invalid_argument("surrogate_constant: requires d_s(m, j) < d_s(i, j), got " + std::to_string(dmj) +
                                    " >= " + std::to_string(dij));

    const double numer = dij * dij - dmj * dmj;
    double denom = 0.0;
    for (std::size_t k = 2; k < b.n(); ++k) {
        const double a = b.phi(k, m) - b.phi(k, j);
        const double c = b.phi(k, i) - b.phi(k, j);
        denom += std::abs(a * a - c * c);
    }

    SurrogateBound out;
    if (denom == 0.0) {
        out.vacuous = true;
        return out;
    }
    const double gap = b.eigenvalues[1] - (b.n() > 2 ? b.eigenvalues[2] : b.eigenvalues[1]);
    const double log_ratio = std::log(numer / denom);
    if (gap == 0.0) {
        if (log_ratio >= 0.0) {
            out.raw = -std::numeric_limits<double>::infinity();
            return out;
        }
        throw numeric_error("surrogate_constant: lambda1 == lambda2 and the first-mode gap does not dominate; no finite bound");
    }
    out.raw = log_ratio / (2.0 * gap);
    out.value = std::max(out.raw, 0.0);
    return out;
}

/**
 * Graph vector field of a node signal and the two directional matrices built
 * from its row-normalized form. All per-edge arrays are aligned with the CSR
 * slots of `graph`; self-loop slots carry a zero gradient.
 */
struct DirectionalField {
    Graph graph;
    std::vector<double> grad;          ///< phi_j - phi_i per slot
    std::vector<double> grad_rownorm;  ///< grad / (row L1 + eps0)
    std::vector<double> b_av;          ///< |grad_rownorm|
    std::vector<double> b_dx_offdiag;  ///< grad_rownorm, with 0 on self-loop slots
    std::vector<double> b_dx_diag;     ///< -row sum of grad_rownorm
    double eps0 = 1e-8;

    /// Directional-derivative entry (i, j), diagonal included.
    double b_dx(node_t i, node_t j) const {
        if (i == j) return b_dx_diag[i];
        const auto s = graph.slot_of(i, j);
        return s == graph.slot_count() ? 0.0 : b_dx_offdiag[s];
    }
};

inline DirectionalField directional_field(const Graph& g, std::span<const double> phi, double eps0 = 1e-8) {
    if (phi.size() != g.n())
        throw std::invalid_argument("directional_field: signal has " + std::to_string(phi.size()) + " entries for " +
                                    std::to_string(g.n()) + " nodes");
    if (!(eps0 >= 0.0)) throw std::invalid_argument("directional_field: eps0 must be non-negative");

    DirectionalField f;
    f.graph = g;
    f.eps0 = eps0;
    const std::size_t slots = g.slot_count();
    f.grad.assign(slots, 0.0);
    f.grad_rownorm.assign(slots, 0.0);
    f.b_av.assign(slots, 0.0);
    f.b_dx_offdiag.assign(slots, 0.0);
    f.b_dx_diag.assign(g.n(), 0.0);

    const auto& off = g.csr_offsets();
    const auto& tgt = g.csr_targets();
    for (node_t i = 0; i < g.n(); ++i) {
        double l1 = 0.0;
        for (std::size_t s = off[i]; s < off[i + 1]; ++s) {
            const node_t j = tgt[s];
            f.grad[s] = j == i ? 0.0 : phi[j] - phi[i];
            l1 += std::abs(f.grad[s]);
        }
        const double denom = l1 + eps0;
        double row_sum = 0.0;
        for (std::size_t s = off[i]; s < off[i + 1]; ++s) {
            const double v = denom > 0.0 ? f.grad[s] / denom : 0.0;
            f.grad_rownorm[s] = v;
            f.b_av[s] = std::abs(v);
            f.b_dx_offdiag[s] = v;
            row_sum += v;
        }
        f.b_dx_diag[i] = -row_sum;
    }
    return f;
}

}  // namespace dgat
