#ifndef QTAR_AR_CONTEXT_HPP
#define QTAR_AR_CONTEXT_HPP

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "qtar/image.hpp"
#include "qtar/quadtree.hpp"

namespace qtar {

// Causal neighborhood template. Slot d < D-1 reads the pixel at
// (i,j) + offsets[d]; the last slot is the constant 1. Offsets must be
// strictly causal in raster order: row < 0, or row == 0 and col < 0.
struct NeighborTemplate {
    int dim = 0;                                // D, including the constant slot
    std::vector<std::pair<int, int>> offsets;   // D-1 (row, col) pairs
    double boundary_pad = 128.0;                // read value outside the image
};

// Built-in templates for D in {2, 4, 10}. D=4 is (left, top-right, top);
// D=10 is the two-row causal window documented in the README.
NeighborTemplate make_template(int dim, double boundary_pad = 128.0);

// Custom offset list; validates causality and uniqueness.
NeighborTemplate make_template(std::vector<std::pair<int, int>> offsets, double boundary_pad = 128.0);

// Text format: one "dr dc" line per offset plus a "pad <value>" line.
NeighborTemplate load_template_file(const std::string& path);
void save_template_file(const NeighborTemplate& tmpl, const std::string& path);

// Reference pixel vector of (i,j): neighbor reads (pad outside the image)
// with a trailing 1.
Eigen::VectorXd reference_vector(const GrayImage& image, int i, int j, const NeighborTemplate& tmpl);

// Reverse reference quantities of (i,j) within a node: slot d of `vec` is
// the pixel at the point reflection (i,j) - offsets[d] when that position
// lies inside the node, else 0; row d of `rows` is that position's
// reference vector under the same inclusion rule. Constant slot/row are 0.
void reverse_reference(const GrayImage& image, const Region& node, int i, int j,
                       const NeighborTemplate& tmpl, Eigen::VectorXd& vec, Eigen::MatrixXd& rows);

// Sufficient statistics of one region: gram = sum v_R v_R^T,
// cross = sum v_R * v_t, sqnorm = sum v_t^2. Reference reads are
// image-global; only the pad rule applies at image borders.
struct RegionStats {
    int node = -1;
    double n = 0.0;  // pixel count
    Eigen::MatrixXd gram;
    Eigen::VectorXd cross;
    double sqnorm = 0.0;
};

RegionStats region_stats(const GrayImage& image, const Region& region, const NeighborTemplate& tmpl);

// Stats for every node of the tree: leaves are scanned directly, internal
// nodes aggregate their children (exact, since reference reads do not
// depend on the node). Leaf scans run in parallel across `threads`.
std::vector<RegionStats> compute_all_stats(const GrayImage& image, const TreeMax& tree,
                                           const NeighborTemplate& tmpl, int threads = 1);

}  // namespace qtar

#endif
