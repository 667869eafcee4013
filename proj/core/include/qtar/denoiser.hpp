#ifndef QTAR_DENOISER_HPP
#define QTAR_DENOISER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "qtar/gradient.hpp"
#include "qtar/model.hpp"
#include "qtar/posterior.hpp"
#include "qtar/quadtree.hpp"

namespace qtar {

struct OptimizerConfig {
    double step_c0 = 0.1;   // step size: c0 * sigma / (1 + c1 * t)
    double step_c1 = 0.05;
    int max_iters = 150;
    int patience = 10;      // consecutive non-improving iterations before stopping
    int vb_sweeps_per_step = 1;
    std::uint64_t seed = 0;
    int threads = 1;

    // step_c0 = 0 is allowed: it freezes the image (VB still runs).
    void validate() const;
};

struct TracePoint {
    int iter = 0;
    double objective = 0.0;
    double step = 0.0;
};

struct DenoiseResult {
    GrayImage restored;          // best-objective iterate
    PosteriorState posterior;    // posterior at that iterate
    SegmentationMap segmentation;
    std::vector<TracePoint> trace;
    int iterations_run = 0;
    bool stopped_early = false;
    bool diverged = false;       // objective went non-finite; result holds the last finite iterate
};

// eta_t = c0 * sigma / (1 + c1 * t)
double step_size(int t, double sigma, const OptimizerConfig& config);

// Posterior initialization from a near-equal rectangular grid partition of
// the observed image: alpha' = alpha; per block k the conjugate-regression
// update on that block's statistics gives (lambda'_k, mu'_k, a'_k, b'_k).
// resp / g' / leaf_prob stay unset until the first q(z,T) update.
PosteriorState init_posterior(const GrayImage& observed, const TreeMax& tree, const ModelConfig& config);

// The alternating algorithm: v starts at the observed image; after the
// initial q(z,T) then q(theta,tau,pi) update, each iteration takes one
// gradient-ascent step, recomputes statistics and runs the configured VB
// sweeps, then logs the objective. Stops early after `patience` consecutive
// iterations without improving the running best; returns the best iterate.
DenoiseResult denoise(const GrayImage& observed, const ModelConfig& model, const OptimizerConfig& opt);

// Trace CSV: "iter,objective,step_size".
void save_trace_csv(const std::vector<TracePoint>& trace, const std::string& path);

}  // namespace qtar

#endif
