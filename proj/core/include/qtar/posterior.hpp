#ifndef QTAR_POSTERIOR_HPP
#define QTAR_POSTERIOR_HPP

#include <Eigen/Dense>
#include <vector>

namespace qtar {

// Node-major layout so per-node label rows are contiguous.
using NodeLabelMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Full variational state. Node-indexed quantities cover every node of
// T_max (not only leaves); label-indexed quantities are the global
// Dirichlet / Normal-Gamma posterior hyperparameters.
struct PosteriorState {
    int num_nodes = 0;
    int num_labels = 0;

    // per (node, label)
    NodeLabelMatrix ln_rho;  // log evidence weights
    NodeLabelMatrix resp;    // pi'_{s,k}, rows sum to 1

    // per node
    Eigen::VectorXd log_phi;
    Eigen::VectorXd g_prime;    // split posterior, 0 on forced leaves
    Eigen::VectorXd leaf_prob;  // q(s is a leaf)

    // per label
    Eigen::VectorXd alpha_prime;
    std::vector<Eigen::MatrixXd> lambda_prime;
    std::vector<Eigen::MatrixXd> lambda_prime_inv;  // cached inverses
    std::vector<Eigen::VectorXd> mu_prime;
    Eigen::VectorXd a_prime;
    Eigen::VectorXd b_prime;

    static PosteriorState sized(int nodes, int labels, int dim) {
        PosteriorState st;
        st.num_nodes = nodes;
        st.num_labels = labels;
        st.ln_rho = NodeLabelMatrix::Zero(nodes, labels);
        st.resp = NodeLabelMatrix::Zero(nodes, labels);
        st.log_phi = Eigen::VectorXd::Zero(nodes);
        st.g_prime = Eigen::VectorXd::Zero(nodes);
        st.leaf_prob = Eigen::VectorXd::Zero(nodes);
        st.alpha_prime = Eigen::VectorXd::Zero(labels);
        st.lambda_prime.assign(labels, Eigen::MatrixXd::Identity(dim, dim));
        st.lambda_prime_inv.assign(labels, Eigen::MatrixXd::Identity(dim, dim));
        st.mu_prime.assign(labels, Eigen::VectorXd::Zero(dim));
        st.a_prime = Eigen::VectorXd::Zero(labels);
        st.b_prime = Eigen::VectorXd::Zero(labels);
        return st;
    }
};

}  // namespace qtar

#endif
