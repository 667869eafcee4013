#include "qtar/denoiser.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "qtar/numerics.hpp"
#include "qtar/vb.hpp"

namespace qtar {

void OptimizerConfig::validate() const {
    if (max_iters < 1) throw ValidationError("optimizer: max_iters must be >= 1");
    if (patience < 1) throw ValidationError("optimizer: patience must be >= 1");
    if (vb_sweeps_per_step < 1) throw ValidationError("optimizer: vb_sweeps_per_step must be >= 1");
    if (step_c0 < 0.0) throw ValidationError("optimizer: step_c0 must be >= 0");
    if (step_c1 < 0.0) throw ValidationError("optimizer: step_c1 must be >= 0");
    if (threads < 1) throw ValidationError("optimizer: threads must be >= 1");
}

double step_size(int t, double sigma, const OptimizerConfig& config) {
    return config.step_c0 * sigma / (1.0 + config.step_c1 * t);
}

namespace {

// Factor K into rows x cols with rows closest to sqrt(K) subject to the
// blocks being nonempty.
std::pair<int, int> grid_shape(int k, int h, int w) {
    const int root = static_cast<int>(std::floor(std::sqrt(static_cast<double>(k))));
    for (int delta = 0; delta <= root; ++delta) {
        for (const int r : {root - delta, root + delta}) {
            if (r < 1 || r > k || k % r != 0) continue;
            const int c = k / r;
            if (r <= h && c <= w) return {r, c};
        }
    }
    throw ValidationError("init: cannot partition a " + std::to_string(h) + "x" + std::to_string(w) +
                          " image into " + std::to_string(k) + " rectangular blocks");
}

}  // namespace

PosteriorState init_posterior(const GrayImage& observed, const TreeMax& tree, const ModelConfig& config) {
    config.validate();
    const int K = config.num_labels;
    const int D = config.dim();
    if (static_cast<long>(K) > observed.size()) {
        throw ValidationError("init: K exceeds the pixel count");
    }
    PosteriorState post = PosteriorState::sized(tree.node_count(), K, D);
    post.alpha_prime = config.alpha;

    const auto [rows, cols] = grid_shape(K, observed.height, observed.width);
    const int base_h = observed.height / rows;
    const int base_w = observed.width / cols;

    const Eigen::VectorXd lambda_mu = config.lambda * config.mu;
    const double mu_lambda_mu = config.mu.dot(lambda_mu);

    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int k = r * cols + c;
            Region block;
            block.top = r * base_h;
            block.left = c * base_w;
            block.height = (r == rows - 1) ? observed.height - block.top : base_h;
            block.width = (c == cols - 1) ? observed.width - block.left : base_w;
            const RegionStats st = region_stats(observed, block, config.tmpl);

            post.lambda_prime[static_cast<size_t>(k)] = config.lambda + st.gram;
            post.lambda_prime_inv[static_cast<size_t>(k)] =
                spd_inverse(post.lambda_prime[static_cast<size_t>(k)], "init lambda'[" + std::to_string(k) + "]");
            post.mu_prime[static_cast<size_t>(k)].noalias() =
                post.lambda_prime_inv[static_cast<size_t>(k)] * (lambda_mu + st.cross);
            post.a_prime[k] = config.a + 0.5 * st.n;
            const Eigen::VectorXd& mu_k = post.mu_prime[static_cast<size_t>(k)];
            post.b_prime[k] = config.b + 0.5 * (mu_lambda_mu + st.sqnorm -
                                                mu_k.dot(post.lambda_prime[static_cast<size_t>(k)] * mu_k));
            if (!(post.b_prime[k] > 0.0)) {
                throw NumericError("init: b'[" + std::to_string(k) + "] is not positive");
            }
        }
    }
    return post;
}

DenoiseResult denoise(const GrayImage& observed, const ModelConfig& model, const OptimizerConfig& opt) {
    model.validate();
    opt.validate();
    const double sigma = std::sqrt(model.sigma2);

    const TreeMax tree = build_tmax(observed.height, observed.width, model.d_max, model.min_leaf_dim);

    GrayImage v = observed;
    PosteriorState posterior = init_posterior(observed, tree, model);
    std::vector<RegionStats> stats = compute_all_stats(v, tree, model.tmpl, opt.threads);
    // the first VB action updates q(z,T), then q(theta,tau,pi)
    vb_sweep(tree, stats, posterior, model, opt.threads);

    DenoiseResult result;
    result.restored = v;
    result.posterior = posterior;

    double best_obj = kNegInf;
    int bad_streak = 0;

    for (int t = 0; t < opt.max_iters; ++t) {
        const double eta = step_size(t, sigma, opt);
        try {
            const GradientField grad = full_gradient(v, observed, tree, posterior, model.tmpl, model, opt.threads);
            for (long idx = 0; idx < v.size(); ++idx) {
                v.pixels[static_cast<size_t>(idx)] += eta * grad.values[static_cast<size_t>(idx)];
            }
            stats = compute_all_stats(v, tree, model.tmpl, opt.threads);
            for (int sweep = 0; sweep < opt.vb_sweeps_per_step; ++sweep) {
                vb_sweep(tree, stats, posterior, model, opt.threads);
            }
            const double obj = surrogate_objective(v, observed, posterior, stats, model);
            result.trace.push_back(TracePoint{t, obj, eta});
            result.iterations_run = t + 1;
            if (obj > best_obj) {
                best_obj = obj;
                bad_streak = 0;
                result.restored = v;
                result.posterior = posterior;
            } else {
                ++bad_streak;
            }
        } catch (const NumericError&) {
            result.diverged = true;
            break;
        }
        if (bad_streak >= opt.patience) {
            result.stopped_early = true;
            break;
        }
    }

    result.segmentation = decode_map_segmentation(tree, result.posterior);
    return result;
}

void save_trace_csv(const std::vector<TracePoint>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << "iter,objective,step_size\n" << std::setprecision(12);
    for (const TracePoint& p : trace) {
        out << p.iter << ',' << p.objective << ',' << p.step << '\n';
    }
    if (!out) throw IoError(path + ": write failed");
}

}  // namespace qtar
