#ifndef QTAR_VB_HPP
#define QTAR_VB_HPP

#include <string>
#include <vector>

#include "qtar/ar_context.hpp"
#include "qtar/model.hpp"
#include "qtar/posterior.hpp"
#include "qtar/quadtree.hpp"

namespace qtar {

// Inverse of a symmetric positive-definite matrix via LLT. On failure the
// diagonal is jittered (1e-10 * trace/D, escalating x10, three attempts)
// before giving up with a NumericError. `what` names the matrix in errors.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const std::string& what);

// Split-prior vector over all nodes: g everywhere except forced leaves
// (L_max), which get 0.
std::vector<double> split_prior_vector(const TreeMax& tree, double g);

// Normalization recursion for tree distributions of the form
// p(T) propto prod_{internal} a_s * prod_{leaf} b_s, in log domain:
//   phi_s = b_s                           (s in L_max)
//   phi_s = b_s + a_s * prod_ch phi_ch    (s internal)
//   g'_s  = a_s * prod_ch phi_ch / phi_s  (0 on L_max)
// log_internal / log_leaf hold ln a_s / ln b_s per node.
void tree_weight_recursion(const TreeMax& tree,
                           const std::vector<double>& log_internal,
                           const std::vector<double>& log_leaf,
                           Eigen::VectorXd& log_phi, Eigen::VectorXd& g_prime);

// ln rho_{s,k} from sufficient statistics (no per-pixel work):
//   psi(alpha'_k) - psi(sum alpha') + n/2 (-ln 2pi + psi(a'_k) - ln b'_k)
//   - a'_k/(2 b'_k) * (sqnorm - 2 cross.mu' + mu'.gram.mu')
//   - 1/2 tr(gram * lambda'^-1)
double compute_ln_rho(const RegionStats& stats, int label, const PosteriorState& posterior);

// Fills ln_rho and resp for every node; resp rows are softmax(ln_rho).
void update_responsibilities(const std::vector<RegionStats>& stats_all,
                             PosteriorState& posterior, int threads = 1);

// Tree posterior (phi, g') from ln_rho plus leaf probabilities
// q(s in L_T) = (1-g'_s) * prod_{ancestors} g'.
void update_tree_posterior(PosteriorState& posterior, const TreeMax& tree,
                           const std::vector<double>& split_prior);

// Conjugate global updates: alpha', lambda', mu', a', b' with weights
// w_{s,k} = leaf_prob[s] * resp[s][k]; refreshes the cached inverses.
void update_global_posterior(const std::vector<RegionStats>& stats_all,
                             PosteriorState& posterior, const ModelConfig& config);

// One full cycle: responsibilities -> tree posterior -> global posterior.
void vb_sweep(const TreeMax& tree, const std::vector<RegionStats>& stats_all,
              PosteriorState& posterior, const ModelConfig& config, int threads = 1);

struct VbRun {
    int sweeps = 0;
    double last_delta = 0.0;
    bool converged = false;
};

// Repeats vb_sweep at a fixed image until the max-abs change over
// (resp, g_prime) drops below tol, capped at max_sweeps.
VbRun vb_iterate(const TreeMax& tree, const std::vector<RegionStats>& stats_all,
                 PosteriorState& posterior, const ModelConfig& config,
                 int max_sweeps = 500, double tol = 1e-8, int threads = 1);

// Early-stopping objective: the exact observation log-likelihood plus the
// expected AR log-likelihood under the current posterior,
//   sum_t ln N(v'_t | v_t, sigma^2)
//   + sum_s leaf_prob[s] sum_k resp[s][k]
//       * ( n_s/2 (-ln 2pi + psi(a'_k) - ln b'_k)
//           - a'_k/(2 b'_k) * resid_{s,k} - 1/2 tr(gram_s lambda'_k^-1) ).
// Prior and entropy terms of the bound (v-independent) are dropped. The
// psi/ln b' piece is also v-independent, but it moves with the posterior,
// and early stopping compares values across VB sweeps, so it is kept.
double surrogate_objective(const GrayImage& current, const GrayImage& observed,
                           const PosteriorState& posterior,
                           const std::vector<RegionStats>& stats_all,
                           const ModelConfig& config);

// Debug dump: per-label sections (alpha', a', b', mu', lambda' row-major)
// then per-node lines (g', leaf_prob, resp row), 17 significant digits.
void dump_posterior(const PosteriorState& posterior, const std::string& path);

}  // namespace qtar

#endif
