#include "qtar/quadtree.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <memory>

#include "qtar/numerics.hpp"

namespace qtar {

TreeMax build_tmax(int height, int width, int d_max, int min_leaf_dim) {
    if (height < 1 || width < 1) throw ValidationError("build_tmax: zero-sized image");
    if (d_max < 0) throw ValidationError("build_tmax: d_max must be >= 0");
    if (min_leaf_dim < 1) throw ValidationError("build_tmax: min_leaf_dim must be >= 1");

    TreeMax tree;
    tree.image_height = height;
    tree.image_width = width;
    tree.nodes.push_back(TreeNode{Region{0, 0, height, width}, 0, -1, {-1, -1, -1, -1}});

    std::deque<int> queue{0};
    while (!queue.empty()) {
        const int s = queue.front();
        queue.pop_front();
        const Region r = tree.nodes[static_cast<size_t>(s)].region;
        const int depth = tree.nodes[static_cast<size_t>(s)].depth;
        const bool split = depth < d_max && r.height > min_leaf_dim && r.width > min_leaf_dim;
        if (!split) continue;

        const int th = (r.height + 1) / 2;  // ceil half -> top
        const int lw = (r.width + 1) / 2;   // ceil half -> left
        const Region quads[4] = {
            {r.top, r.left, th, lw},                                    // TL
            {r.top, r.left + lw, th, r.width - lw},                     // TR
            {r.top + th, r.left, r.height - th, lw},                    // BL
            {r.top + th, r.left + lw, r.height - th, r.width - lw},     // BR
        };
        for (int c = 0; c < 4; ++c) {
            const int idx = tree.node_count();
            tree.nodes[static_cast<size_t>(s)].children[static_cast<size_t>(c)] = idx;
            tree.nodes.push_back(TreeNode{quads[c], depth + 1, s, {-1, -1, -1, -1}});
            queue.push_back(idx);
        }
    }
    for (int s = 0; s < tree.node_count(); ++s) {
        tree.d_max_used = std::max(tree.d_max_used, tree.nodes[static_cast<size_t>(s)].depth);
        if (tree.is_leaf(s)) tree.leaves.push_back(s);
    }
    return tree;
}

std::vector<int> path_of_pixel(const TreeMax& tree, int i, int j) {
    if (i < 0 || i >= tree.image_height || j < 0 || j >= tree.image_width) {
        throw ValidationError("path_of_pixel: pixel (" + std::to_string(i) + "," + std::to_string(j) + ") out of bounds");
    }
    std::vector<int> path;
    int s = tree.root;
    path.push_back(s);
    while (!tree.is_leaf(s)) {
        int next = -1;
        for (int c : tree.nodes[static_cast<size_t>(s)].children) {
            if (tree.nodes[static_cast<size_t>(c)].region.contains(i, j)) {
                next = c;
                break;
            }
        }
        s = next;
        path.push_back(s);
    }
    return path;
}

SegmentationMap decode_map_segmentation(const TreeMax& tree, const PosteriorState& posterior) {
    const int n = tree.node_count();
    if (posterior.num_nodes != n) {
        throw ValidationError("decode_map_segmentation: posterior covers " + std::to_string(posterior.num_nodes) +
                              " nodes, tree has " + std::to_string(n));
    }

    // best[s] = max log-probability of the subtree decision below s;
    // keep[s] = true when cutting at s (leaf) is at least as good as splitting.
    std::vector<double> best(static_cast<size_t>(n));
    std::vector<char> keep(static_cast<size_t>(n), 1);
    for (int s = n - 1; s >= 0; --s) {
        const double gp = posterior.g_prime[s];
        const double leaf_score = std::log1p(-gp);  // ln(1 - g')
        if (tree.is_leaf(s)) {
            best[static_cast<size_t>(s)] = leaf_score;
            continue;
        }
        double split_score = gp > 0.0 ? std::log(gp) : kNegInf;
        for (int c : tree.nodes[static_cast<size_t>(s)].children) split_score += best[static_cast<size_t>(c)];
        if (leaf_score >= split_score) {
            best[static_cast<size_t>(s)] = leaf_score;
        } else {
            best[static_cast<size_t>(s)] = split_score;
            keep[static_cast<size_t>(s)] = 0;
        }
    }

    SegmentationMap map;
    map.height = tree.image_height;
    map.width = tree.image_width;
    map.label.assign(static_cast<size_t>(tree.image_height) * tree.image_width, -1);
    map.leaf_node.assign(map.label.size(), -1);

    std::deque<int> queue{tree.root};
    while (!queue.empty()) {
        const int s = queue.front();
        queue.pop_front();
        if (!keep[static_cast<size_t>(s)]) {
            for (int c : tree.nodes[static_cast<size_t>(s)].children) queue.push_back(c);
            continue;
        }
        map.chosen_leaves.push_back(s);
        int arg = 0;
        for (int k = 1; k < posterior.num_labels; ++k) {
            if (posterior.resp(s, k) > posterior.resp(s, arg)) arg = k;
        }
        const Region& r = tree.nodes[static_cast<size_t>(s)].region;
        for (int i = r.top; i < r.top + r.height; ++i) {
            for (int j = r.left; j < r.left + r.width; ++j) {
                map.label[static_cast<size_t>(i) * map.width + j] = arg;
                map.leaf_node[static_cast<size_t>(i) * map.width + j] = s;
            }
        }
    }
    return map;
}

std::array<std::uint8_t, 3> label_color(int label) {
    // golden-angle hue walk, constant saturation/value
    const int idx = ((label % 256) + 256) % 256;
    const double hue = std::fmod(idx * 137.50776405003785, 360.0);
    const double sat = 0.65, val = 0.95;
    const double c = val * sat;
    const double hp = hue / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = val - c;
    return {static_cast<std::uint8_t>(std::lround((r + m) * 255.0)),
            static_cast<std::uint8_t>(std::lround((g + m) * 255.0)),
            static_cast<std::uint8_t>(std::lround((b + m) * 255.0))};
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};

}  // namespace

void save_segmentation_png(const SegmentationMap& map, const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError(path + ": cannot open for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path + ": libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path + ": PNG write failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(map.width), static_cast<png_uint_32>(map.height),
                 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<size_t>(map.width) * 3);
    for (int i = 0; i < map.height; ++i) {
        for (int j = 0; j < map.width; ++j) {
            const auto rgb = label_color(map.label[static_cast<size_t>(i) * map.width + j]);
            row[static_cast<size_t>(j) * 3 + 0] = rgb[0];
            row[static_cast<size_t>(j) * 3 + 1] = rgb[1];
            row[static_cast<size_t>(j) * 3 + 2] = rgb[2];
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void save_segmentation_csv(const SegmentationMap& map, const TreeMax& tree, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << "leaf_node,top,left,height,width,label\n";
    for (int s : map.chosen_leaves) {
        const Region& r = tree.nodes[static_cast<size_t>(s)].region;
        const int lbl = map.label[static_cast<size_t>(r.top) * map.width + r.left];
        out << s << ',' << r.top << ',' << r.left << ',' << r.height << ',' << r.width << ',' << lbl << '\n';
    }
    if (!out) throw IoError(path + ": write failed");
}

}  // namespace qtar
