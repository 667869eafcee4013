#ifndef QTAR_QUADTREE_HPP
#define QTAR_QUADTREE_HPP

#include <array>
#include <string>
#include <vector>

#include "qtar/posterior.hpp"

namespace qtar {

struct Region {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;

    bool contains(int i, int j) const {
        return i >= top && i < top + height && j >= left && j < left + width;
    }
    long area() const { return static_cast<long>(height) * width; }
};

struct TreeNode {
    Region region;
    int depth = 0;
    int parent = -1;                          // -1 for the root
    std::array<int, 4> children = {-1, -1, -1, -1};  // TL, TR, BL, BR

    bool is_leaf() const { return children[0] < 0; }
};

// The complete quadtree T_max. Nodes are stored in BFS order, so a parent
// always precedes its children; bottom-up passes iterate indices in reverse.
struct TreeMax {
    std::vector<TreeNode> nodes;
    std::vector<int> leaves;  // L_max, in index order
    int root = 0;
    int d_max_used = 0;       // deepest depth present
    int image_height = 0;
    int image_width = 0;

    int node_count() const { return static_cast<int>(nodes.size()); }
    bool is_leaf(int s) const { return nodes[static_cast<size_t>(s)].is_leaf(); }
};

// Recursive four-way split. A node splits iff depth < d_max and both sides
// exceed min_leaf_dim; odd sides split ceil/floor with the ceil half going
// to the top-left child.
TreeMax build_tmax(int height, int width, int d_max, int min_leaf_dim);

// Nodes containing (i,j), ordered root -> deepest.
std::vector<int> path_of_pixel(const TreeMax& tree, int i, int j);

struct SegmentationMap {
    int height = 0;
    int width = 0;
    std::vector<int> label;      // per pixel, in [0, K)
    std::vector<int> leaf_node;  // per pixel, chosen leaf index in TreeMax
    std::vector<int> chosen_leaves;
};

// MAP tree by bottom-up dynamic programming over q(T), ties broken toward
// the leaf; each chosen leaf labeled argmax_k resp (smallest k on ties).
SegmentationMap decode_map_segmentation(const TreeMax& tree, const PosteriorState& posterior);

// Fixed 256-entry label palette (label mod 256).
std::array<std::uint8_t, 3> label_color(int label);

// Color PNG with one palette color per label.
void save_segmentation_png(const SegmentationMap& map, const std::string& path);

// Sidecar CSV: "leaf_node,top,left,height,width,label".
void save_segmentation_csv(const SegmentationMap& map, const TreeMax& tree, const std::string& path);

}  // namespace qtar

#endif
