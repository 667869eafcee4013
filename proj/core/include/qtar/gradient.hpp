#ifndef QTAR_GRADIENT_HPP
#define QTAR_GRADIENT_HPP

#include <string>
#include <vector>

#include "qtar/ar_context.hpp"
#include "qtar/model.hpp"
#include "qtar/posterior.hpp"
#include "qtar/quadtree.hpp"

namespace qtar {

// Per-pixel derivative of the objective.
struct GradientField {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    GradientField() = default;
    GradientField(int h, int w) : height(h), width(w), values(static_cast<size_t>(h) * w, 0.0) {}
    double& at(int i, int j) { return values[static_cast<size_t>(i) * width + j]; }
    double at(int i, int j) const { return values[static_cast<size_t>(i) * width + j]; }
};

// Analytic derivative at one pixel:
//   (v'-v)/sigma^2 + sum_{s in path} leaf_prob[s] sum_k resp[s][k] *
//     ( -a'_k/b'_k * [ v - (v_R + v_rev)^T mu'_k + mu'_k^T V_rev mu'_k ]
//       - tr(V_rev lambda'_k^-1) )
// with reverse quantities zeroed outside the node.
double pixel_gradient(const GrayImage& image, const GrayImage& observed, int i, int j,
                      const TreeMax& tree, const PosteriorState& posterior,
                      const NeighborTemplate& tmpl, const ModelConfig& config);

// pixel_gradient at every pixel; entries are bitwise identical to the
// single-pixel call. Pixels are independent given the fixed posterior.
GradientField full_gradient(const GrayImage& image, const GrayImage& observed,
                            const TreeMax& tree, const PosteriorState& posterior,
                            const NeighborTemplate& tmpl, const ModelConfig& config,
                            int threads = 1);

// Central differences of the surrogate objective, recomputing region
// statistics at each perturbed evaluation. Validation oracle; test-scale
// images only.
GradientField fd_gradient(const GrayImage& image, const GrayImage& observed,
                          const TreeMax& tree, const PosteriorState& posterior,
                          const NeighborTemplate& tmpl, const ModelConfig& config,
                          double step);

// Binary dump: 8-byte magic "QTARGRD\0", uint32 height, uint32 width
// (little-endian), then row-major float64 values.
void write_gradient_dump(const GradientField& field, const std::string& path);
GradientField read_gradient_dump(const std::string& path);

}  // namespace qtar

#endif
