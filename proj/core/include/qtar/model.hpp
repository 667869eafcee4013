#ifndef QTAR_MODEL_HPP
#define QTAR_MODEL_HPP

#include <Eigen/Dense>

#include "qtar/ar_context.hpp"

namespace qtar {

// Prior hyperparameters and model dimensions. sigma2 is the known noise
// variance of the degradation process.
struct ModelConfig {
    double g = 0.75;            // split prior for every non-forced-leaf node
    Eigen::VectorXd alpha;      // Dirichlet, length K
    Eigen::VectorXd mu;         // Normal mean, length D
    Eigen::MatrixXd lambda;     // Normal precision, D x D SPD
    double a = 1.0;             // Gamma shape
    double b = 100.0;           // Gamma rate
    double sigma2 = 25.0;
    int num_labels = 100;       // K
    NeighborTemplate tmpl;      // carries D
    int d_max = 30;
    int min_leaf_dim = 2;

    int dim() const { return tmpl.dim; }

    // Experiment defaults: g=0.75, alpha=0.01, mu=0, lambda=I, a=1, b=100.
    static ModelConfig defaults(double sigma, int num_labels = 100, int dim = 10);

    void validate() const;
};

}  // namespace qtar

#endif
