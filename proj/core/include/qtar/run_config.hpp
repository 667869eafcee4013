#ifndef QTAR_RUN_CONFIG_HPP
#define QTAR_RUN_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qtar/denoiser.hpp"
#include "qtar/model.hpp"

namespace qtar {

// Flat "key = value" run configuration. Vector hyperparameters accept a
// scalar shorthand: a single alpha broadcasts to K entries, a single
// lambda value c means c * identity, a single mu broadcasts to D.
// Unknown keys are validation errors.
struct RunConfig {
    std::optional<double> sigma;
    std::optional<int> k;
    std::optional<int> d;
    std::optional<int> d_max;
    std::optional<int> min_leaf_dim;
    std::optional<double> g;
    std::optional<std::vector<double>> alpha;
    std::optional<std::vector<double>> mu;
    std::optional<std::vector<double>> lambda;
    std::optional<double> a;
    std::optional<double> b;
    std::optional<double> step_c0;
    std::optional<double> step_c1;
    std::optional<int> max_iters;
    std::optional<int> patience;
    std::optional<int> vb_sweeps_per_step;
    std::optional<std::uint64_t> seed;
    std::optional<double> boundary_pad;
    std::optional<std::string> template_path;

    bool operator==(const RunConfig&) const = default;

    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_text(const std::string& text, const std::string& source);

    // Canonical "key = value" form; doubles keep 17 significant digits so
    // parse(serialize(x)) == x.
    std::string serialize() const;

    // Effective model with defaults applied and shorthands broadcast.
    // Throws ValidationError when sigma is missing or a value is invalid.
    ModelConfig build_model() const;
    OptimizerConfig build_optimizer() const;

    // RunConfig with every field filled in from the effective settings
    // (what run metadata echoes).
    RunConfig effective() const;
};

}  // namespace qtar

#endif
