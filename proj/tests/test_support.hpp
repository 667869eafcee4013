#ifndef QTAR_TEST_SUPPORT_HPP
#define QTAR_TEST_SUPPORT_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "qtar/ar_context.hpp"
#include "qtar/image.hpp"
#include "qtar/model.hpp"
#include "qtar/posterior.hpp"
#include "qtar/quadtree.hpp"

// Test-side oracles. Everything here recomputes results from first
// principles with its own indexing and linear algebra routes, independent
// of the library paths it is used to check.
namespace qtar::testing {

GrayImage random_image(int height, int width, std::uint64_t seed, double lo = 0.0, double hi = 255.0);

// Four quadrants, each sampled in raster order from a distinct stable AR
// process over the D=10 template (pad 128).
GrayImage synthetic_quadrant_ar(int height, int width, std::uint64_t seed);

// Deterministic piecewise-smooth scene: gradients, a disk, a ramped
// rectangle and a sinusoidal texture patch.
GrayImage synthetic_scene(int height, int width);

// One rooted subtree of T_max: which nodes split and which are its leaves.
struct Subtree {
    std::vector<int> internals;
    std::vector<int> leaves;
};

// All rooted subtrees containing the root (exponential; depth <= 2 trees only).
std::vector<Subtree> enumerate_subtrees(const TreeMax& tree);

// log prod_{internals} a_s + log prod_{leaves} b_s for one subtree.
double subtree_log_weight(const Subtree& st, const std::vector<double>& log_a,
                          const std::vector<double>& log_b);

// Normalized probabilities of all subtrees under weights exp(log_a)/exp(log_b).
std::vector<double> brute_force_tree_distribution(const TreeMax& tree,
                                                  const std::vector<double>& log_a,
                                                  const std::vector<double>& log_b);

// Design matrix (rows = reference vectors) and target vector of a region,
// built by direct double loops.
void build_design(const GrayImage& image, const Region& region, const NeighborTemplate& tmpl,
                  Eigen::MatrixXd& design, Eigen::VectorXd& target);

// Textbook Normal-Gamma Bayesian linear regression posterior, solved with
// a QR route rather than Cholesky.
struct ConjugatePosterior {
    Eigen::MatrixXd lambda;
    Eigen::VectorXd mu;
    double a = 0.0;
    double b = 0.0;
};
ConjugatePosterior conjugate_regression(const Eigen::MatrixXd& design, const Eigen::VectorXd& target,
                                        const Eigen::MatrixXd& prior_lambda, const Eigen::VectorXd& prior_mu,
                                        double prior_a, double prior_b);

// Region statistics recomputed naively (explicit design matrix products).
RegionStats naive_region_stats(const GrayImage& image, const Region& region, const NeighborTemplate& tmpl);

// Scalar SSIM recomputed from the definition (11x11 Gaussian window,
// sigma 1.5, valid positions only), on already-clamped values.
double ssim_oracle(const GrayImage& reference, const GrayImage& candidate);

// Surrogate objective recomputed per pixel / per node from explicit design
// matrices instead of sufficient statistics.
double surrogate_oracle(const GrayImage& current, const GrayImage& observed,
                        const PosteriorState& posterior, const TreeMax& tree,
                        const ModelConfig& config);

}  // namespace qtar::testing

#endif
