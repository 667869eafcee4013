#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "qtar/denoiser.hpp"
#include "qtar/numerics.hpp"
#include "qtar/vb.hpp"
#include "test_support.hpp"

using namespace qtar;
using qtar::testing::random_image;

namespace {

Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng, double jitter = 0.5) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::MatrixXd r(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) r(i, j) = dist(rng);
    }
    return r * r.transpose() + jitter * Eigen::MatrixXd::Identity(n, n);
}

// posterior evolved from the prior by a few sweeps on a real image
struct Fixture {
    GrayImage image;
    TreeMax tree;
    ModelConfig model;
    std::vector<RegionStats> stats;
    PosteriorState posterior;

    Fixture(int h, int w, int labels, int dim, int d_max, std::uint64_t seed, int sweeps = 2)
        : image(random_image(h, w, seed)),
          tree(build_tmax(h, w, d_max, 2)),
          model(ModelConfig::defaults(5.0, labels, dim)) {
        model.d_max = d_max;
        stats = compute_all_stats(image, tree, model.tmpl);
        posterior = init_posterior(image, tree, model);
        for (int i = 0; i < sweeps; ++i) vb_sweep(tree, stats, posterior, model);
    }
};

}  // namespace

TEST_CASE("split prior vector zeroes forced leaves") {
    const TreeMax tree = build_tmax(8, 8, 2, 2);
    const auto prior = split_prior_vector(tree, 0.75);
    for (int s = 0; s < tree.node_count(); ++s) {
        CHECK(prior[static_cast<size_t>(s)] == (tree.is_leaf(s) ? 0.0 : 0.75));
    }
}

TEST_CASE("tree weight recursion reproduces enumerated distributions") {
    const TreeMax tree = build_tmax(8, 8, 2, 2);
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> dist(0.1, 2.0);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> log_a(static_cast<size_t>(tree.node_count()));
        std::vector<double> log_b(static_cast<size_t>(tree.node_count()));
        for (int s = 0; s < tree.node_count(); ++s) {
            log_a[static_cast<size_t>(s)] = std::log(dist(rng));
            log_b[static_cast<size_t>(s)] = std::log(dist(rng));
        }
        Eigen::VectorXd log_phi, g_prime;
        tree_weight_recursion(tree, log_a, log_b, log_phi, g_prime);

        const auto subtrees = qtar::testing::enumerate_subtrees(tree);
        const auto brute = qtar::testing::brute_force_tree_distribution(tree, log_a, log_b);
        for (size_t t = 0; t < subtrees.size(); ++t) {
            double q = 1.0;
            for (int s : subtrees[t].internals) q *= g_prime[s];
            for (int s : subtrees[t].leaves) q *= 1.0 - g_prime[s];
            CHECK(std::fabs(q - brute[t]) < 1e-10);
        }
    }
}

TEST_CASE("ln_rho quadratic term matches a per-pixel residual oracle") {
    const GrayImage img = random_image(10, 10, 202);
    const NeighborTemplate tmpl = make_template(10);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const Region region{trial % 4, trial % 5, 4, 4};
        const RegionStats st = region_stats(img, region, tmpl);
        Eigen::VectorXd mu(tmpl.dim);
        for (int d = 0; d < tmpl.dim; ++d) mu[d] = dist(rng);

        const double via_stats = st.sqnorm - 2.0 * st.cross.dot(mu) + mu.dot(st.gram * mu);
        Eigen::MatrixXd design;
        Eigen::VectorXd target;
        qtar::testing::build_design(img, region, tmpl, design, target);
        const double naive = (target - design * mu).squaredNorm();
        CHECK(std::fabs(via_stats - naive) < 1e-9 * std::max(1.0, std::fabs(naive)));
    }
}

TEST_CASE("ln_rho: identical hyperparameters give identical values; blow-ups are reported") {
    Fixture f(8, 8, 2, 4, 2, 303);
    // force label 1 to copy label 0
    f.posterior.alpha_prime[1] = f.posterior.alpha_prime[0];
    f.posterior.a_prime[1] = f.posterior.a_prime[0];
    f.posterior.b_prime[1] = f.posterior.b_prime[0];
    f.posterior.mu_prime[1] = f.posterior.mu_prime[0];
    f.posterior.lambda_prime[1] = f.posterior.lambda_prime[0];
    f.posterior.lambda_prime_inv[1] = f.posterior.lambda_prime_inv[0];
    for (int s = 0; s < f.tree.node_count(); ++s) {
        CHECK(compute_ln_rho(f.stats[static_cast<size_t>(s)], 0, f.posterior) ==
              compute_ln_rho(f.stats[static_cast<size_t>(s)], 1, f.posterior));
    }

    f.posterior.b_prime[0] = 0.0;  // ln b' = -inf
    CHECK_THROWS_AS(compute_ln_rho(f.stats[0], 0, f.posterior), NumericError);
}

TEST_CASE("responsibilities: rows sum to 1, K=1 gives certainty, softmax is shift-invariant") {
    Fixture f(16, 16, 4, 4, 3, 404);
    update_responsibilities(f.stats, f.posterior);
    for (int s = 0; s < f.posterior.num_nodes; ++s) {
        CHECK(std::fabs(f.posterior.resp.row(s).sum() - 1.0) < 1e-10);
        // recomputing the softmax from a shifted row must agree
        const double shift = 1234.5;
        Eigen::VectorXd row = f.posterior.ln_rho.row(s).transpose().array() + shift;
        const double lse = log_sum_exp({row.data(), static_cast<size_t>(row.size())});
        for (int k = 0; k < f.posterior.num_labels; ++k) {
            CHECK(std::fabs(std::exp(row[k] - lse) - f.posterior.resp(s, k)) < 1e-12);
        }
    }

    Fixture single(8, 8, 1, 4, 2, 405);
    update_responsibilities(single.stats, single.posterior);
    for (int s = 0; s < single.posterior.num_nodes; ++s) {
        CHECK(single.posterior.resp(s, 0) == 1.0);
    }
}

TEST_CASE("tree posterior: degenerate split priors") {
    Fixture f(8, 8, 3, 4, 2, 506);
    update_responsibilities(f.stats, f.posterior);

    SUBCASE("g = 0 forbids splits") {
        update_tree_posterior(f.posterior, f.tree, split_prior_vector(f.tree, 0.0));
        for (int s = 0; s < f.tree.node_count(); ++s) CHECK(f.posterior.g_prime[s] == 0.0);
        CHECK(f.posterior.leaf_prob[f.tree.root] == 1.0);
        for (int s = 1; s < f.tree.node_count(); ++s) CHECK(f.posterior.leaf_prob[s] == 0.0);
    }

    SUBCASE("g = 1 forces splits down to L_max") {
        update_tree_posterior(f.posterior, f.tree, split_prior_vector(f.tree, 1.0));
        for (int s = 0; s < f.tree.node_count(); ++s) {
            CHECK(f.posterior.leaf_prob[s] == (f.tree.is_leaf(s) ? 1.0 : 0.0));
        }
    }
}

TEST_CASE("tree posterior matches brute-force enumeration on depth-2 trees") {
    const TreeMax tree = build_tmax(8, 8, 2, 2);
    const int K = 3;
    std::mt19937_64 rng(607);
    std::uniform_real_distribution<double> dist(-40.0, 40.0);
    for (int trial = 0; trial < 20; ++trial) {
        PosteriorState post = PosteriorState::sized(tree.node_count(), K, 4);
        const double scale = trial % 3 == 0 ? 1e3 : 1.0;  // stress large magnitudes
        for (int s = 0; s < tree.node_count(); ++s) {
            for (int k = 0; k < K; ++k) post.ln_rho(s, k) = scale * dist(rng);
        }
        const double g = 0.75;
        update_tree_posterior(post, tree, split_prior_vector(tree, g));

        std::vector<double> log_a(static_cast<size_t>(tree.node_count()));
        std::vector<double> log_b(static_cast<size_t>(tree.node_count()));
        for (int s = 0; s < tree.node_count(); ++s) {
            const double gs = tree.is_leaf(s) ? 0.0 : g;
            const double lse = log_sum_exp({post.ln_rho.row(s).data(), static_cast<size_t>(K)});
            log_a[static_cast<size_t>(s)] = gs > 0 ? std::log(gs) : kNegInf;
            log_b[static_cast<size_t>(s)] = std::log1p(-gs) + lse;
        }
        const auto subtrees = qtar::testing::enumerate_subtrees(tree);
        const auto brute = qtar::testing::brute_force_tree_distribution(tree, log_a, log_b);
        for (size_t t = 0; t < subtrees.size(); ++t) {
            double q = 1.0;
            for (int s : subtrees[t].internals) q *= post.g_prime[s];
            for (int s : subtrees[t].leaves) q *= 1.0 - post.g_prime[s];
            CHECK(std::fabs(q - brute[t]) < 1e-10);
        }

        for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 8; ++j) {
                double along_path = 0.0;
                for (int s : path_of_pixel(tree, i, j)) along_path += post.leaf_prob[s];
                CHECK(std::fabs(along_path - 1.0) < 1e-10);
            }
        }
    }
}

TEST_CASE("global posterior: zero weights reproduce the prior") {
    Fixture f(8, 8, 3, 4, 2, 708);
    std::mt19937_64 rng(9);
    f.model.mu = Eigen::VectorXd::Constant(4, 0.7);
    f.model.lambda = random_spd(4, rng);
    f.posterior.leaf_prob.setZero();
    update_global_posterior(f.stats, f.posterior, f.model);
    for (int k = 0; k < 3; ++k) {
        CHECK(std::fabs(f.posterior.alpha_prime[k] - f.model.alpha[k]) < 1e-14);
        CHECK((f.posterior.lambda_prime[static_cast<size_t>(k)] - f.model.lambda).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((f.posterior.mu_prime[static_cast<size_t>(k)] - f.model.mu).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(std::fabs(f.posterior.a_prime[k] - f.model.a) < 1e-14);
        CHECK(std::fabs(f.posterior.b_prime[k] - f.model.b) < 1e-10);
    }
}

TEST_CASE("single-leaf K=1 reduction equals conjugate Bayesian linear regression") {
    std::mt19937_64 rng(810);
    for (int trial = 0; trial < 5; ++trial) {
        const GrayImage img = random_image(8, 8, 811 + trial);
        const TreeMax tree = build_tmax(8, 8, 0, 2);  // single node
        REQUIRE(tree.node_count() == 1);

        ModelConfig model = ModelConfig::defaults(5.0, 1, 4);
        model.d_max = 0;
        model.mu = Eigen::VectorXd::Constant(4, 0.3);
        model.lambda = random_spd(4, rng);
        model.a = 1.7;
        model.b = 42.0;

        auto stats = compute_all_stats(img, tree, model.tmpl);
        PosteriorState post = init_posterior(img, tree, model);
        vb_sweep(tree, stats, post, model);

        // shape update is a + n/2 with n = 64 pixels
        CHECK(post.a_prime[0] == model.a + 32.0);
        CHECK(post.alpha_prime[0] == doctest::Approx(model.alpha[0] + 1.0).epsilon(1e-12));

        Eigen::MatrixXd design;
        Eigen::VectorXd target;
        qtar::testing::build_design(img, Region{0, 0, 8, 8}, model.tmpl, design, target);
        const auto oracle = qtar::testing::conjugate_regression(design, target, model.lambda, model.mu,
                                                                model.a, model.b);
        CHECK((post.lambda_prime[0] - oracle.lambda).cwiseAbs().maxCoeff() <
              1e-8 * oracle.lambda.cwiseAbs().maxCoeff());
        CHECK((post.mu_prime[0] - oracle.mu).cwiseAbs().maxCoeff() <
              1e-8 * std::max(1.0, oracle.mu.cwiseAbs().maxCoeff()));
        CHECK(std::fabs(post.a_prime[0] - oracle.a) < 1e-8 * oracle.a);
        CHECK(std::fabs(post.b_prime[0] - oracle.b) < 1e-8 * oracle.b);
    }
}

TEST_CASE("posterior invariants hold after sweeps") {
    Fixture f(16, 16, 4, 10, 30, 912, 3);
    for (int k = 0; k < 4; ++k) {
        CHECK(f.posterior.a_prime[k] >= f.model.a);
        CHECK(f.posterior.alpha_prime[k] >= f.model.alpha[k]);
        Eigen::LLT<Eigen::MatrixXd> llt(f.posterior.lambda_prime[static_cast<size_t>(k)]);
        CHECK(llt.info() == Eigen::Success);
    }
    for (int s = 0; s < f.posterior.num_nodes; ++s) {
        CHECK(std::fabs(f.posterior.resp.row(s).sum() - 1.0) < 1e-10);
    }
    for (int i = 0; i < 16; ++i) {
        for (int j = 0; j < 16; ++j) {
            double along_path = 0.0;
            for (int s : path_of_pixel(f.tree, i, j)) along_path += f.posterior.leaf_prob[s];
            CHECK(std::fabs(along_path - 1.0) < 1e-10);
        }
    }
}

TEST_CASE("vb_sweep iteration reaches a fixed point within 500 sweeps") {
    Fixture f(16, 16, 3, 4, 30, 1013, 0);
    const VbRun run = vb_iterate(f.tree, f.stats, f.posterior, f.model, 500, 1e-8);
    CHECK(run.converged);
    CHECK(run.sweeps <= 500);

    // one further sweep is a no-op at the same tolerance
    const NodeLabelMatrix resp = f.posterior.resp;
    const Eigen::VectorXd g_prime = f.posterior.g_prime;
    vb_sweep(f.tree, f.stats, f.posterior, f.model);
    CHECK((f.posterior.resp - resp).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((f.posterior.g_prime - g_prime).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("surrogate objective: exact Gaussian term at v = v'") {
    Fixture f(8, 8, 2, 4, 2, 1114);
    f.posterior.leaf_prob.setZero();  // isolate the observation term
    const double obj = surrogate_objective(f.image, f.image, f.posterior, f.stats, f.model);
    CHECK(obj == doctest::Approx(-0.5 * 64.0 * std::log(2.0 * M_PI * f.model.sigma2)).epsilon(1e-14));
}

TEST_CASE("surrogate objective matches the per-pixel oracle") {
    Fixture f(12, 12, 3, 4, 2, 1215);
    const GrayImage observed = random_image(12, 12, 1216);
    const double fast = surrogate_objective(f.image, observed, f.posterior, f.stats, f.model);
    const double slow = qtar::testing::surrogate_oracle(f.image, observed, f.posterior, f.tree, f.model);
    CHECK(std::fabs(fast - slow) < 1e-8 * std::max(1.0, std::fabs(slow)));
}

TEST_CASE("surrogate objective: larger sigma shrinks the residual penalty") {
    Fixture f(8, 8, 2, 4, 2, 1317);
    f.posterior.leaf_prob.setZero();
    const GrayImage observed = random_image(8, 8, 1318);
    const auto penalty = [&](double sigma2) {
        ModelConfig m = f.model;
        m.sigma2 = sigma2;
        const double obj = surrogate_objective(f.image, observed, f.posterior, f.stats, m);
        return obj + 0.5 * 64.0 * std::log(2.0 * M_PI * sigma2);  // strip the ln constant
    };
    CHECK(penalty(4.0 * f.model.sigma2) > penalty(f.model.sigma2));
}

TEST_CASE("expected quadratic form against Monte Carlo") {
    std::mt19937_64 rng(1419);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int instance = 0; instance < 3; ++instance) {
        const int n = 4, m = 3;
        Eigen::MatrixXd a(n, m);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < m; ++j) a(i, j) = normal(rng);
        }
        const Eigen::MatrixXd b = random_spd(n, rng);
        const Eigen::MatrixXd cov = random_spd(m, rng);
        Eigen::VectorXd mu(m), y(n);
        for (int i = 0; i < m; ++i) mu[i] = normal(rng);
        for (int i = 0; i < n; ++i) y[i] = normal(rng);

        const double analytic = (a * mu - y).dot(b * (a * mu - y)) +
                                (a.transpose() * b * a * cov).trace();

        const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(cov).matrixL();
        const int samples = 100000;
        double sum = 0.0, sumsq = 0.0;
        Eigen::VectorXd z(m);
        for (int t = 0; t < samples; ++t) {
            for (int i = 0; i < m; ++i) z[i] = normal(rng);
            const Eigen::VectorXd x = mu + chol * z;
            const Eigen::VectorXd r = a * x - y;
            const double q = r.dot(b * r);
            sum += q;
            sumsq += q * q;
        }
        const double mean = sum / samples;
        const double se = std::sqrt((sumsq / samples - mean * mean) / samples);
        CHECK(std::fabs(analytic - mean) < 3.0 * se);
    }
}

TEST_CASE("spd_inverse: jitter recovery and hard failure") {
    // barely-indefinite matrix comes back after jitter
    Eigen::MatrixXd near = Eigen::MatrixXd::Identity(3, 3);
    near(2, 2) = -1e-14;
    CHECK_NOTHROW(spd_inverse(near, "near-singular"));

    Eigen::MatrixXd bad = -Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(spd_inverse(bad, "negative-definite"), NumericError);

    std::mt19937_64 rng(2718);
    const Eigen::MatrixXd m = random_spd(5, rng);
    const Eigen::MatrixXd inv = spd_inverse(m, "test");
    CHECK((m * inv - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("posterior dump format") {
    Fixture f(8, 8, 2, 4, 2, 1520);
    const auto path = std::filesystem::temp_directory_path() / "qtar_posterior_dump.txt";
    dump_posterior(f.posterior, path.string());
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "labels 2");
    std::getline(in, line);
    CHECK(line == "nodes 21");
    std::getline(in, line);
    CHECK(line == "label 0");
}
