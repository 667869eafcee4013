#include "qtar/gradient.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "qtar/numerics.hpp"
#include "qtar/vb.hpp"

namespace qtar {

namespace {

// Label-indexed quantities reshaped for tight per-pixel loops.
struct GradPrecomp {
    Eigen::MatrixXd mu;        // K x D, row k = mu'_k
    Eigen::VectorXd prec;      // a'_k / b'_k
    const PosteriorState* posterior = nullptr;

    explicit GradPrecomp(const PosteriorState& post) : posterior(&post) {
        const int K = post.num_labels;
        const int D = static_cast<int>(post.mu_prime[0].size());
        mu.resize(K, D);
        prec.resize(K);
        for (int k = 0; k < K; ++k) {
            mu.row(k) = post.mu_prime[static_cast<size_t>(k)].transpose();
            prec[k] = post.a_prime[k] / post.b_prime[k];
        }
    }
};

struct GradWorkspace {
    Eigen::VectorXd ref;        // D
    Eigen::VectorXd rev_val;    // D-1
    Eigen::MatrixXd rev_rows;   // (D-1) x D
    Eigen::MatrixXd rowdot;     // (D-1) x K
    Eigen::MatrixXd trq;        // (D-1) x K
    Eigen::VectorXd ref_mu;     // K
    Eigen::MatrixXd prefix_w;   // path_len x K
    std::vector<int> path;
    std::vector<int> rev_depth; // deepest path index containing each reverse position

    GradWorkspace(int dim, int labels, int max_depth) {
        ref.resize(dim);
        rev_val.resize(dim - 1);
        rev_rows.resize(dim - 1, dim);
        rowdot.resize(dim - 1, labels);
        trq.resize(dim - 1, labels);
        ref_mu.resize(labels);
        prefix_w.resize(max_depth + 1, labels);
        path.reserve(static_cast<size_t>(max_depth) + 1);
        rev_depth.assign(static_cast<size_t>(dim) - 1, -1);
    }
};

void walk_path(const TreeMax& tree, int i, int j, std::vector<int>& path) {
    path.clear();
    int s = tree.root;
    path.push_back(s);
    while (!tree.is_leaf(s)) {
        for (int c : tree.nodes[static_cast<size_t>(s)].children) {
            if (tree.nodes[static_cast<size_t>(c)].region.contains(i, j)) {
                s = c;
                break;
            }
        }
        path.push_back(s);
    }
}

double gradient_at(const GrayImage& image, const GrayImage& observed, int i, int j,
                   const TreeMax& tree, const PosteriorState& posterior,
                   const NeighborTemplate& tmpl, const ModelConfig& config,
                   const GradPrecomp& pre, GradWorkspace& ws) {
    const int D = tmpl.dim;
    const int K = posterior.num_labels;
    const double v = image.at(i, j);

    walk_path(tree, i, j, ws.path);
    const int levels = static_cast<int>(ws.path.size());

    for (int d = 0; d + 1 < D; ++d) {
        ws.ref[d] = [&] {
            const int pi = i + tmpl.offsets[static_cast<size_t>(d)].first;
            const int pj = j + tmpl.offsets[static_cast<size_t>(d)].second;
            return image.in_bounds(pi, pj) ? image.at(pi, pj) : tmpl.boundary_pad;
        }();
        const int ri = i - tmpl.offsets[static_cast<size_t>(d)].first;
        const int rj = j - tmpl.offsets[static_cast<size_t>(d)].second;
        if (!image.in_bounds(ri, rj)) {
            ws.rev_depth[static_cast<size_t>(d)] = -1;
            ws.rev_val[d] = 0.0;
            ws.rev_rows.row(d).setZero();
            continue;
        }
        // containment is monotone along the path, so scan deepest-first
        int depth_idx = -1;
        for (int l = levels - 1; l >= 0; --l) {
            if (tree.nodes[static_cast<size_t>(ws.path[static_cast<size_t>(l)])].region.contains(ri, rj)) {
                depth_idx = l;
                break;
            }
        }
        ws.rev_depth[static_cast<size_t>(d)] = depth_idx;
        ws.rev_val[d] = image.at(ri, rj);
        for (int e = 0; e + 1 < D; ++e) {
            const int qi = ri + tmpl.offsets[static_cast<size_t>(e)].first;
            const int qj = rj + tmpl.offsets[static_cast<size_t>(e)].second;
            ws.rev_rows(d, e) = image.in_bounds(qi, qj) ? image.at(qi, qj) : tmpl.boundary_pad;
        }
        ws.rev_rows(d, D - 1) = 1.0;
    }
    ws.ref[D - 1] = 1.0;

    ws.ref_mu.noalias() = pre.mu * ws.ref;                 // K
    ws.rowdot.noalias() = ws.rev_rows * pre.mu.transpose();  // (D-1) x K
    for (int k = 0; k < K; ++k) {
        // tr(V_rev * inv) restricted to included rows; inv is symmetric so
        // column d equals row d.
        const Eigen::MatrixXd& inv = posterior.lambda_prime_inv[static_cast<size_t>(k)];
        ws.trq.col(k) = ws.rev_rows.cwiseProduct(inv.topRows(D - 1)).rowwise().sum();
    }

    for (int k = 0; k < K; ++k) {
        double cum = 0.0;
        for (int l = 0; l < levels; ++l) {
            const int s = ws.path[static_cast<size_t>(l)];
            cum += posterior.leaf_prob[s] * posterior.resp(s, k);
            ws.prefix_w(l, k) = cum;
        }
    }

    double grad = (observed.at(i, j) - v) / config.sigma2;
    for (int k = 0; k < K; ++k) {
        const double total_w = ws.prefix_w(levels - 1, k);
        double acc = -pre.prec[k] * (v - ws.ref_mu[k]) * total_w;
        for (int d = 0; d + 1 < D; ++d) {
            const int depth_idx = ws.rev_depth[static_cast<size_t>(d)];
            if (depth_idx < 0) continue;
            const double mu_kd = pre.mu(k, d);
            const double c = pre.prec[k] * (ws.rev_val[d] * mu_kd - mu_kd * ws.rowdot(d, k)) - ws.trq(d, k);
            acc += c * ws.prefix_w(depth_idx, k);
        }
        grad += acc;
    }
    if (!std::isfinite(grad)) {
        throw NumericError("gradient is not finite at pixel (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
    return grad;
}

}  // namespace

double pixel_gradient(const GrayImage& image, const GrayImage& observed, int i, int j,
                      const TreeMax& tree, const PosteriorState& posterior,
                      const NeighborTemplate& tmpl, const ModelConfig& config) {
    if (!image.in_bounds(i, j)) throw ValidationError("pixel_gradient: pixel out of bounds");
    GradPrecomp pre(posterior);
    GradWorkspace ws(tmpl.dim, posterior.num_labels, tree.d_max_used);
    return gradient_at(image, observed, i, j, tree, posterior, tmpl, config, pre, ws);
}

GradientField full_gradient(const GrayImage& image, const GrayImage& observed,
                            const TreeMax& tree, const PosteriorState& posterior,
                            const NeighborTemplate& tmpl, const ModelConfig& config,
                            int threads) {
    if (image.height != observed.height || image.width != observed.width) {
        throw ValidationError("full_gradient: image dimension mismatch");
    }
    GradientField field(image.height, image.width);
    GradPrecomp pre(posterior);
    parallel_for(threads, 0, image.height, [&](long lo, long hi) {
        GradWorkspace ws(tmpl.dim, posterior.num_labels, tree.d_max_used);
        for (long i = lo; i < hi; ++i) {
            for (int j = 0; j < image.width; ++j) {
                field.at(static_cast<int>(i), j) = gradient_at(image, observed, static_cast<int>(i), j,
                                                               tree, posterior, tmpl, config, pre, ws);
            }
        }
    });
    return field;
}

GradientField fd_gradient(const GrayImage& image, const GrayImage& observed,
                          const TreeMax& tree, const PosteriorState& posterior,
                          const NeighborTemplate& tmpl, const ModelConfig& config,
                          double step) {
    if (!(step > 0.0)) throw ValidationError("fd_gradient: step must be > 0");
    GradientField field(image.height, image.width);
    GrayImage probe = image;
    for (int i = 0; i < image.height; ++i) {
        for (int j = 0; j < image.width; ++j) {
            const double saved = probe.at(i, j);
            probe.at(i, j) = saved + step;
            const double up = surrogate_objective(probe, observed, posterior,
                                                  compute_all_stats(probe, tree, tmpl), config);
            probe.at(i, j) = saved - step;
            const double down = surrogate_objective(probe, observed, posterior,
                                                    compute_all_stats(probe, tree, tmpl), config);
            probe.at(i, j) = saved;
            field.at(i, j) = (up - down) / (2.0 * step);
        }
    }
    return field;
}

namespace {
constexpr char kGradMagic[8] = {'Q', 'T', 'A', 'R', 'G', 'R', 'D', '\0'};
}

void write_gradient_dump(const GradientField& field, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot open for writing");
    out.write(kGradMagic, 8);
    const std::uint32_t h = static_cast<std::uint32_t>(field.height);
    const std::uint32_t w = static_cast<std::uint32_t>(field.width);
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(field.values.data()),
              static_cast<std::streamsize>(field.values.size() * sizeof(double)));
    if (!out) throw IoError(path + ": write failed");
}

GradientField read_gradient_dump(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": no such file");
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kGradMagic, 8) != 0) {
        throw IoError(path + ": bad gradient dump magic");
    }
    std::uint32_t h = 0, w = 0;
    in.read(reinterpret_cast<char*>(&h), 4);
    in.read(reinterpret_cast<char*>(&w), 4);
    GradientField field(static_cast<int>(h), static_cast<int>(w));
    in.read(reinterpret_cast<char*>(field.values.data()),
            static_cast<std::streamsize>(field.values.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(field.values.size() * sizeof(double))) {
        throw IoError(path + ": truncated gradient dump");
    }
    return field;
}

}  // namespace qtar
