#include "qtar/vb.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "qtar/numerics.hpp"

namespace qtar {

namespace {
constexpr double kLn2Pi = 1.8378770664093453;
}

ModelConfig ModelConfig::defaults(double sigma, int num_labels, int dim) {
    ModelConfig cfg;
    cfg.tmpl = make_template(dim);
    cfg.g = 0.75;
    cfg.alpha = Eigen::VectorXd::Constant(num_labels, 0.01);
    cfg.mu = Eigen::VectorXd::Zero(dim);
    cfg.lambda = Eigen::MatrixXd::Identity(dim, dim);
    cfg.a = 1.0;
    cfg.b = 100.0;
    cfg.sigma2 = sigma * sigma;
    cfg.num_labels = num_labels;
    cfg.d_max = 30;
    cfg.min_leaf_dim = 2;
    return cfg;
}

void ModelConfig::validate() const {
    if (num_labels < 1) throw ValidationError("model: K must be >= 1");
    if (tmpl.dim < 2) throw ValidationError("model: template dimension must be >= 2");
    if (!(sigma2 > 0.0)) throw ValidationError("model: sigma^2 must be > 0");
    if (!(a > 0.0)) throw ValidationError("model: a must be > 0");
    if (!(b > 0.0)) throw ValidationError("model: b must be > 0");
    if (g < 0.0 || g > 1.0) throw ValidationError("model: g must be in [0,1]");
    if (alpha.size() != num_labels) throw ValidationError("model: alpha must have K entries");
    if ((alpha.array() <= 0.0).any()) throw ValidationError("model: alpha entries must be > 0");
    if (mu.size() != tmpl.dim) throw ValidationError("model: mu must have D entries");
    if (lambda.rows() != tmpl.dim || lambda.cols() != tmpl.dim) {
        throw ValidationError("model: lambda must be D x D");
    }
    if (!lambda.isApprox(lambda.transpose(), 1e-10)) throw ValidationError("model: lambda must be symmetric");
    if (Eigen::LLT<Eigen::MatrixXd>(lambda).info() != Eigen::Success) {
        throw ValidationError("model: lambda must be positive definite");
    }
    if (d_max < 0) throw ValidationError("model: d_max must be >= 0");
    if (min_leaf_dim < 1) throw ValidationError("model: min_leaf_dim must be >= 1");
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const std::string& what) {
    const int n = static_cast<int>(m.rows());
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) {
        return llt.solve(Eigen::MatrixXd::Identity(n, n));
    }
    double jitter = 1e-10 * m.trace() / n;
    for (int attempt = 0; attempt < 3; ++attempt, jitter *= 10.0) {
        Eigen::LLT<Eigen::MatrixXd> retry(m + jitter * Eigen::MatrixXd::Identity(n, n));
        if (retry.info() == Eigen::Success) {
            return retry.solve(Eigen::MatrixXd::Identity(n, n));
        }
    }
    throw NumericError(what + ": not positive definite even after diagonal jitter");
}

std::vector<double> split_prior_vector(const TreeMax& tree, double g) {
    std::vector<double> prior(static_cast<size_t>(tree.node_count()), g);
    for (int s : tree.leaves) prior[static_cast<size_t>(s)] = 0.0;
    return prior;
}

void tree_weight_recursion(const TreeMax& tree,
                           const std::vector<double>& log_internal,
                           const std::vector<double>& log_leaf,
                           Eigen::VectorXd& log_phi, Eigen::VectorXd& g_prime) {
    const int n = tree.node_count();
    log_phi.resize(n);
    g_prime.resize(n);
    // BFS order: children have larger indices, so reverse iteration is bottom-up
    for (int s = n - 1; s >= 0; --s) {
        if (tree.is_leaf(s)) {
            log_phi[s] = log_leaf[static_cast<size_t>(s)];
            g_prime[s] = 0.0;
            continue;
        }
        double split = log_internal[static_cast<size_t>(s)];
        for (int c : tree.nodes[static_cast<size_t>(s)].children) split += log_phi[c];
        const double total = log_add_exp(log_leaf[static_cast<size_t>(s)], split);
        log_phi[s] = total;
        g_prime[s] = split == kNegInf ? 0.0 : std::exp(split - total);
    }
}

double compute_ln_rho(const RegionStats& stats, int label, const PosteriorState& posterior) {
    const double alpha_sum = posterior.alpha_prime.sum();
    const double ak = posterior.a_prime[label];
    const double bk = posterior.b_prime[label];
    const Eigen::VectorXd& mu = posterior.mu_prime[static_cast<size_t>(label)];
    const Eigen::MatrixXd& lamb_inv = posterior.lambda_prime_inv[static_cast<size_t>(label)];

    const double resid = stats.sqnorm - 2.0 * stats.cross.dot(mu) + mu.dot(stats.gram * mu);
    const double trace = stats.gram.cwiseProduct(lamb_inv).sum();
    const double value = digamma(posterior.alpha_prime[label]) - digamma(alpha_sum)
        + 0.5 * stats.n * (-kLn2Pi + digamma(ak) - std::log(bk))
        - 0.5 * (ak / bk) * resid
        - 0.5 * trace;
    if (!std::isfinite(value)) {
        throw NumericError("ln_rho blew up at node " + std::to_string(stats.node) +
                           ", label " + std::to_string(label));
    }
    return value;
}

void update_responsibilities(const std::vector<RegionStats>& stats_all,
                             PosteriorState& posterior, int threads) {
    const int n = static_cast<int>(stats_all.size());
    const int K = posterior.num_labels;
    if (posterior.num_nodes != n) throw ValidationError("update_responsibilities: stats/posterior shape mismatch");

    // per-label constants shared by every node
    const double alpha_sum_digamma = digamma(posterior.alpha_prime.sum());
    Eigen::VectorXd label_const(K), gauss_const(K), half_prec(K);
    for (int k = 0; k < K; ++k) {
        label_const[k] = digamma(posterior.alpha_prime[k]) - alpha_sum_digamma;
        gauss_const[k] = -kLn2Pi + digamma(posterior.a_prime[k]) - std::log(posterior.b_prime[k]);
        half_prec[k] = 0.5 * posterior.a_prime[k] / posterior.b_prime[k];
    }

    parallel_for(threads, 0, n, [&](long lo, long hi) {
        for (long s = lo; s < hi; ++s) {
            const RegionStats& st = stats_all[static_cast<size_t>(s)];
            for (int k = 0; k < K; ++k) {
                const Eigen::VectorXd& mu = posterior.mu_prime[static_cast<size_t>(k)];
                const double resid = st.sqnorm - 2.0 * st.cross.dot(mu) + mu.dot(st.gram * mu);
                const double trace = st.gram.cwiseProduct(posterior.lambda_prime_inv[static_cast<size_t>(k)]).sum();
                posterior.ln_rho(s, k) = label_const[k] + 0.5 * st.n * gauss_const[k]
                    - half_prec[k] * resid - 0.5 * trace;
            }
            const double lse = log_sum_exp({posterior.ln_rho.row(s).data(), static_cast<size_t>(K)});
            if (lse == kNegInf || !std::isfinite(lse)) {
                throw NumericError("degenerate ln_rho row at node " + std::to_string(s));
            }
            for (int k = 0; k < K; ++k) posterior.resp(s, k) = std::exp(posterior.ln_rho(s, k) - lse);
        }
    });
}

void update_tree_posterior(PosteriorState& posterior, const TreeMax& tree,
                           const std::vector<double>& split_prior) {
    const int n = tree.node_count();
    if (posterior.num_nodes != n || static_cast<int>(split_prior.size()) != n) {
        throw ValidationError("update_tree_posterior: tree/posterior shape mismatch");
    }

    std::vector<double> log_internal(static_cast<size_t>(n)), log_leaf(static_cast<size_t>(n));
    for (int s = 0; s < n; ++s) {
        const double g = tree.is_leaf(s) ? 0.0 : split_prior[static_cast<size_t>(s)];
        const double row_lse = log_sum_exp({posterior.ln_rho.row(s).data(),
                                            static_cast<size_t>(posterior.num_labels)});
        log_internal[static_cast<size_t>(s)] = g > 0.0 ? std::log(g) : kNegInf;
        log_leaf[static_cast<size_t>(s)] = std::log1p(-g) + row_lse;
    }
    tree_weight_recursion(tree, log_internal, log_leaf, posterior.log_phi, posterior.g_prime);

    // leaf probability = (1 - g'_s) * prod over ancestors of g'; ancestor product kept in log domain.
    // BFS order guarantees parents are finished before their children.
    Eigen::VectorXd log_anc = Eigen::VectorXd::Zero(n);
    for (int s = 0; s < n; ++s) {
        const double gp = posterior.g_prime[s];
        posterior.leaf_prob[s] = (1.0 - gp) * std::exp(log_anc[s]);
        if (tree.is_leaf(s)) continue;
        const double lg = gp > 0.0 ? std::log(gp) : kNegInf;
        for (int c : tree.nodes[static_cast<size_t>(s)].children) log_anc[c] = log_anc[s] + lg;
    }
}

void update_global_posterior(const std::vector<RegionStats>& stats_all,
                             PosteriorState& posterior, const ModelConfig& config) {
    const int n = static_cast<int>(stats_all.size());
    const int K = posterior.num_labels;
    const int D = config.dim();
    if (posterior.num_nodes != n) throw ValidationError("update_global_posterior: stats/posterior shape mismatch");

    const Eigen::VectorXd lambda_mu = config.lambda * config.mu;
    const double mu_lambda_mu = config.mu.dot(lambda_mu);

    for (int k = 0; k < K; ++k) {
        double alpha_acc = 0.0, n_acc = 0.0, sq_acc = 0.0;
        Eigen::MatrixXd gram_acc = Eigen::MatrixXd::Zero(D, D);
        Eigen::VectorXd cross_acc = Eigen::VectorXd::Zero(D);
        for (int s = 0; s < n; ++s) {
            const double w = posterior.leaf_prob[s] * posterior.resp(s, k);
            if (w == 0.0) continue;
            const RegionStats& st = stats_all[static_cast<size_t>(s)];
            alpha_acc += w;
            n_acc += w * st.n;
            sq_acc += w * st.sqnorm;
            gram_acc.noalias() += w * st.gram;
            cross_acc.noalias() += w * st.cross;
        }
        posterior.alpha_prime[k] = config.alpha[k] + alpha_acc;
        posterior.lambda_prime[static_cast<size_t>(k)] = config.lambda + gram_acc;
        posterior.lambda_prime_inv[static_cast<size_t>(k)] =
            spd_inverse(posterior.lambda_prime[static_cast<size_t>(k)], "lambda'[" + std::to_string(k) + "]");
        posterior.mu_prime[static_cast<size_t>(k)].noalias() =
            posterior.lambda_prime_inv[static_cast<size_t>(k)] * (lambda_mu + cross_acc);
        posterior.a_prime[k] = config.a + 0.5 * n_acc;
        const Eigen::VectorXd& mu_k = posterior.mu_prime[static_cast<size_t>(k)];
        posterior.b_prime[k] = config.b + 0.5 * (mu_lambda_mu + sq_acc -
                                                 mu_k.dot(posterior.lambda_prime[static_cast<size_t>(k)] * mu_k));
        if (!(posterior.b_prime[k] > 0.0)) {
            throw NumericError("b'[" + std::to_string(k) + "] = " + std::to_string(posterior.b_prime[k]) +
                               " is not positive; statistics are corrupted");
        }
    }
}

void vb_sweep(const TreeMax& tree, const std::vector<RegionStats>& stats_all,
              PosteriorState& posterior, const ModelConfig& config, int threads) {
    update_responsibilities(stats_all, posterior, threads);
    update_tree_posterior(posterior, tree, split_prior_vector(tree, config.g));
    update_global_posterior(stats_all, posterior, config);
}

VbRun vb_iterate(const TreeMax& tree, const std::vector<RegionStats>& stats_all,
                 PosteriorState& posterior, const ModelConfig& config,
                 int max_sweeps, double tol, int threads) {
    VbRun run;
    NodeLabelMatrix prev_resp = posterior.resp;
    Eigen::VectorXd prev_g = posterior.g_prime;
    for (run.sweeps = 1; run.sweeps <= max_sweeps; ++run.sweeps) {
        vb_sweep(tree, stats_all, posterior, config, threads);
        const double delta_resp = (posterior.resp - prev_resp).cwiseAbs().maxCoeff();
        const double delta_g = (posterior.g_prime - prev_g).cwiseAbs().maxCoeff();
        run.last_delta = std::max(delta_resp, delta_g);
        if (run.last_delta < tol) {
            run.converged = true;
            return run;
        }
        prev_resp = posterior.resp;
        prev_g = posterior.g_prime;
    }
    run.sweeps = max_sweeps;
    return run;
}

double surrogate_objective(const GrayImage& current, const GrayImage& observed,
                           const PosteriorState& posterior,
                           const std::vector<RegionStats>& stats_all,
                           const ModelConfig& config) {
    if (current.height != observed.height || current.width != observed.width) {
        throw ValidationError("surrogate_objective: image dimension mismatch");
    }
    double gauss = -0.5 * static_cast<double>(current.size()) * std::log(2.0 * M_PI * config.sigma2);
    double sq = 0.0;
    for (long t = 0; t < current.size(); ++t) {
        const double d = observed.pixels[static_cast<size_t>(t)] - current.pixels[static_cast<size_t>(t)];
        sq += d * d;
    }
    gauss -= 0.5 * sq / config.sigma2;

    // Expected log-likelihood under the current posterior. The psi/ln b'
    // piece is constant in v but moves with every VB sweep; early stopping
    // compares across sweeps, so it must stay in.
    Eigen::VectorXd gauss_const(posterior.num_labels);
    for (int k = 0; k < posterior.num_labels; ++k) {
        gauss_const[k] = -kLn2Pi + digamma(posterior.a_prime[k]) - std::log(posterior.b_prime[k]);
    }
    double bound = 0.0;
    for (int s = 0; s < posterior.num_nodes; ++s) {
        const double lp = posterior.leaf_prob[s];
        if (lp == 0.0) continue;
        const RegionStats& st = stats_all[static_cast<size_t>(s)];
        for (int k = 0; k < posterior.num_labels; ++k) {
            const double w = lp * posterior.resp(s, k);
            if (w == 0.0) continue;
            const Eigen::VectorXd& mu = posterior.mu_prime[static_cast<size_t>(k)];
            const double resid = st.sqnorm - 2.0 * st.cross.dot(mu) + mu.dot(st.gram * mu);
            const double trace = st.gram.cwiseProduct(posterior.lambda_prime_inv[static_cast<size_t>(k)]).sum();
            bound += w * (0.5 * st.n * gauss_const[k] -
                          0.5 * (posterior.a_prime[k] / posterior.b_prime[k]) * resid - 0.5 * trace);
        }
    }
    const double value = gauss + bound;
    if (!std::isfinite(value)) throw NumericError("surrogate objective is not finite");
    return value;
}

void dump_posterior(const PosteriorState& posterior, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << std::setprecision(17);
    out << "labels " << posterior.num_labels << "\n";
    out << "nodes " << posterior.num_nodes << "\n";
    for (int k = 0; k < posterior.num_labels; ++k) {
        out << "label " << k << "\n";
        out << "alpha_prime " << posterior.alpha_prime[k] << "\n";
        out << "a_prime " << posterior.a_prime[k] << "\n";
        out << "b_prime " << posterior.b_prime[k] << "\n";
        out << "mu_prime";
        for (int d = 0; d < posterior.mu_prime[static_cast<size_t>(k)].size(); ++d) {
            out << ' ' << posterior.mu_prime[static_cast<size_t>(k)][d];
        }
        out << "\nlambda_prime";
        const Eigen::MatrixXd& L = posterior.lambda_prime[static_cast<size_t>(k)];
        for (int r = 0; r < L.rows(); ++r) {
            for (int c = 0; c < L.cols(); ++c) out << ' ' << L(r, c);
        }
        out << "\n";
    }
    for (int s = 0; s < posterior.num_nodes; ++s) {
        out << "node " << s << " g_prime " << posterior.g_prime[s]
            << " leaf_prob " << posterior.leaf_prob[s] << "\nresp";
        for (int k = 0; k < posterior.num_labels; ++k) out << ' ' << posterior.resp(s, k);
        out << "\n";
    }
    if (!out) throw IoError(path + ": write failed");
}

}  // namespace qtar
