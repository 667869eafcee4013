#include "qtar/ar_context.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "qtar/numerics.hpp"

namespace qtar {

namespace {

bool is_causal(int dr, int dc) { return dr < 0 || (dr == 0 && dc < 0); }

void validate_offsets(const std::vector<std::pair<int, int>>& offsets) {
    std::set<std::pair<int, int>> seen;
    for (const auto& [dr, dc] : offsets) {
        if (!is_causal(dr, dc)) {
            throw ValidationError("template offset (" + std::to_string(dr) + "," + std::to_string(dc) +
                                  ") is not causal in raster order");
        }
        if (!seen.insert({dr, dc}).second) {
            throw ValidationError("duplicate template offset (" + std::to_string(dr) + "," + std::to_string(dc) + ")");
        }
    }
}

}  // namespace

NeighborTemplate make_template(int dim, double boundary_pad) {
    std::vector<std::pair<int, int>> offsets;
    switch (dim) {
        case 2:
            offsets = {{0, -1}};
            break;
        case 4:
            offsets = {{0, -1}, {-1, 1}, {-1, 0}};
            break;
        case 10:
            offsets = {{0, -1}, {0, -2}, {-1, -2}, {-1, -1}, {-1, 0}, {-1, 1}, {-1, 2}, {-2, -1}, {-2, 0}};
            break;
        default:
            throw ValidationError("make_template: no built-in template for D=" + std::to_string(dim) +
                                  " (built-ins: 2, 4, 10)");
    }
    return make_template(std::move(offsets), boundary_pad);
}

NeighborTemplate make_template(std::vector<std::pair<int, int>> offsets, double boundary_pad) {
    validate_offsets(offsets);
    NeighborTemplate tmpl;
    tmpl.dim = static_cast<int>(offsets.size()) + 1;
    tmpl.offsets = std::move(offsets);
    tmpl.boundary_pad = boundary_pad;
    return tmpl;
}

NeighborTemplate load_template_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path + ": no such file");
    std::vector<std::pair<int, int>> offsets;
    double pad = 128.0;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first) || first[0] == '#') continue;
        if (first == "pad") {
            if (!(ls >> pad)) throw IoError(path + ":" + std::to_string(lineno) + ": bad pad line");
            continue;
        }
        int dr = 0, dc = 0;
        try {
            dr = std::stoi(first);
        } catch (const std::exception&) {
            throw IoError(path + ":" + std::to_string(lineno) + ": expected 'dr dc' or 'pad <value>'");
        }
        if (!(ls >> dc)) throw IoError(path + ":" + std::to_string(lineno) + ": missing column offset");
        offsets.emplace_back(dr, dc);
    }
    return make_template(std::move(offsets), pad);
}

void save_template_file(const NeighborTemplate& tmpl, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError(path + ": cannot open for writing");
    for (const auto& [dr, dc] : tmpl.offsets) out << dr << ' ' << dc << '\n';
    out << "pad " << tmpl.boundary_pad << '\n';
}

Eigen::VectorXd reference_vector(const GrayImage& image, int i, int j, const NeighborTemplate& tmpl) {
    if (!image.in_bounds(i, j)) {
        throw ValidationError("reference_vector: pixel (" + std::to_string(i) + "," + std::to_string(j) + ") out of bounds");
    }
    Eigen::VectorXd v(tmpl.dim);
    for (int d = 0; d + 1 < tmpl.dim; ++d) {
        const int pi = i + tmpl.offsets[static_cast<size_t>(d)].first;
        const int pj = j + tmpl.offsets[static_cast<size_t>(d)].second;
        v[d] = image.in_bounds(pi, pj) ? image.at(pi, pj) : tmpl.boundary_pad;
    }
    v[tmpl.dim - 1] = 1.0;
    return v;
}

void reverse_reference(const GrayImage& image, const Region& node, int i, int j,
                       const NeighborTemplate& tmpl, Eigen::VectorXd& vec, Eigen::MatrixXd& rows) {
    if (!node.contains(i, j)) {
        throw ValidationError("reverse_reference: pixel (" + std::to_string(i) + "," + std::to_string(j) +
                              ") outside the node region");
    }
    vec.setZero(tmpl.dim);
    rows.setZero(tmpl.dim, tmpl.dim);
    for (int d = 0; d + 1 < tmpl.dim; ++d) {
        const int pi = i - tmpl.offsets[static_cast<size_t>(d)].first;
        const int pj = j - tmpl.offsets[static_cast<size_t>(d)].second;
        if (!node.contains(pi, pj)) continue;
        vec[d] = image.at(pi, pj);
        rows.row(d) = reference_vector(image, pi, pj, tmpl).transpose();
    }
}

RegionStats region_stats(const GrayImage& image, const Region& region, const NeighborTemplate& tmpl) {
    if (region.top < 0 || region.left < 0 ||
        region.top + region.height > image.height || region.left + region.width > image.width) {
        throw ValidationError("region_stats: region exceeds image bounds");
    }
    RegionStats st;
    st.n = static_cast<double>(region.area());
    st.gram = Eigen::MatrixXd::Zero(tmpl.dim, tmpl.dim);
    st.cross = Eigen::VectorXd::Zero(tmpl.dim);
    st.sqnorm = 0.0;
    Eigen::VectorXd v(tmpl.dim);
    for (int i = region.top; i < region.top + region.height; ++i) {
        for (int j = region.left; j < region.left + region.width; ++j) {
            for (int d = 0; d + 1 < tmpl.dim; ++d) {
                const int pi = i + tmpl.offsets[static_cast<size_t>(d)].first;
                const int pj = j + tmpl.offsets[static_cast<size_t>(d)].second;
                v[d] = image.in_bounds(pi, pj) ? image.at(pi, pj) : tmpl.boundary_pad;
            }
            v[tmpl.dim - 1] = 1.0;
            const double pix = image.at(i, j);
            st.gram.selfadjointView<Eigen::Lower>().rankUpdate(v);
            st.cross.noalias() += v * pix;
            st.sqnorm += pix * pix;
        }
    }
    st.gram.triangularView<Eigen::StrictlyUpper>() = st.gram.transpose();
    return st;
}

std::vector<RegionStats> compute_all_stats(const GrayImage& image, const TreeMax& tree,
                                           const NeighborTemplate& tmpl, int threads) {
    const int n = tree.node_count();
    std::vector<RegionStats> stats(static_cast<size_t>(n));

    const auto& leaves = tree.leaves;
    parallel_for(threads, 0, static_cast<long>(leaves.size()), [&](long lo, long hi) {
        for (long idx = lo; idx < hi; ++idx) {
            const int s = leaves[static_cast<size_t>(idx)];
            stats[static_cast<size_t>(s)] = region_stats(image, tree.nodes[static_cast<size_t>(s)].region, tmpl);
            stats[static_cast<size_t>(s)].node = s;
        }
    });

    // children precede nothing: BFS order puts children after parents
    for (int s = n - 1; s >= 0; --s) {
        if (tree.is_leaf(s)) continue;
        RegionStats& st = stats[static_cast<size_t>(s)];
        st.node = s;
        st.n = 0.0;
        st.gram = Eigen::MatrixXd::Zero(tmpl.dim, tmpl.dim);
        st.cross = Eigen::VectorXd::Zero(tmpl.dim);
        st.sqnorm = 0.0;
        for (int c : tree.nodes[static_cast<size_t>(s)].children) {
            const RegionStats& cs = stats[static_cast<size_t>(c)];
            st.n += cs.n;
            st.gram += cs.gram;
            st.cross += cs.cross;
            st.sqnorm += cs.sqnorm;
        }
    }
    return stats;
}

}  // namespace qtar
