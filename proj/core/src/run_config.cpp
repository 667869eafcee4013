#include "qtar/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "qtar/numerics.hpp"

namespace qtar {

namespace {

const std::set<std::string> kKnownKeys = {
    "sigma", "k", "d", "d_max", "min_leaf_dim", "g", "alpha", "mu", "lambda",
    "a", "b", "step_c0", "step_c1", "max_iters", "patience",
    "vb_sweeps_per_step", "seed", "boundary_pad", "template"};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value, std::vector<std::string>& errors) {
    try {
        size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        errors.push_back(key + ": expected a number, got '" + value + "'");
        return 0.0;
    }
}

int parse_int(const std::string& key, const std::string& value, std::vector<std::string>& errors) {
    try {
        size_t used = 0;
        const long v = std::stol(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return static_cast<int>(v);
    } catch (const std::exception&) {
        errors.push_back(key + ": expected an integer, got '" + value + "'");
        return 0;
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value, std::vector<std::string>& errors) {
    try {
        size_t used = 0;
        const std::uint64_t v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        errors.push_back(key + ": expected an unsigned integer, got '" + value + "'");
        return 0;
    }
}

std::vector<double> parse_list(const std::string& key, const std::string& value, std::vector<std::string>& errors) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) {
            errors.push_back(key + ": empty entry in list '" + value + "'");
            return out;
        }
        out.push_back(parse_double(key, item, errors));
    }
    if (out.empty()) errors.push_back(key + ": empty value");
    return out;
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
    return std::string(buf, res.ptr);
}

std::string format_list(const std::vector<double>& vs) {
    std::string out;
    for (size_t i = 0; i < vs.size(); ++i) {
        if (i) out += ',';
        out += format_double(vs[i]);
    }
    return out;
}

}  // namespace

RunConfig RunConfig::parse_text(const std::string& text, const std::string& source) {
    RunConfig cfg;
    std::vector<std::string> errors;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!kKnownKeys.count(key)) {
            errors.push_back(source + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
            continue;
        }
        if (!seen.insert(key).second) {
            errors.push_back(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
            continue;
        }
        if (value.empty()) {
            errors.push_back(source + ":" + std::to_string(lineno) + ": missing value for '" + key + "'");
            continue;
        }
        if (key == "sigma") cfg.sigma = parse_double(key, value, errors);
        else if (key == "k") cfg.k = parse_int(key, value, errors);
        else if (key == "d") cfg.d = parse_int(key, value, errors);
        else if (key == "d_max") cfg.d_max = parse_int(key, value, errors);
        else if (key == "min_leaf_dim") cfg.min_leaf_dim = parse_int(key, value, errors);
        else if (key == "g") cfg.g = parse_double(key, value, errors);
        else if (key == "alpha") cfg.alpha = parse_list(key, value, errors);
        else if (key == "mu") cfg.mu = parse_list(key, value, errors);
        else if (key == "lambda") cfg.lambda = parse_list(key, value, errors);
        else if (key == "a") cfg.a = parse_double(key, value, errors);
        else if (key == "b") cfg.b = parse_double(key, value, errors);
        else if (key == "step_c0") cfg.step_c0 = parse_double(key, value, errors);
        else if (key == "step_c1") cfg.step_c1 = parse_double(key, value, errors);
        else if (key == "max_iters") cfg.max_iters = parse_int(key, value, errors);
        else if (key == "patience") cfg.patience = parse_int(key, value, errors);
        else if (key == "vb_sweeps_per_step") cfg.vb_sweeps_per_step = parse_int(key, value, errors);
        else if (key == "seed") cfg.seed = parse_u64(key, value, errors);
        else if (key == "boundary_pad") cfg.boundary_pad = parse_double(key, value, errors);
        else if (key == "template") cfg.template_path = value;
    }
    if (!errors.empty()) {
        std::string msg = "config errors:";
        for (const std::string& e : errors) msg += "\n  " + e;
        throw ValidationError(msg);
    }
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path + ": no such file");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_text(buffer.str(), path);
}

std::string RunConfig::serialize() const {
    std::string out;
    const auto emit = [&out](const std::string& key, const std::string& value) {
        out += key + " = " + value + "\n";
    };
    if (sigma) emit("sigma", format_double(*sigma));
    if (k) emit("k", std::to_string(*k));
    if (d) emit("d", std::to_string(*d));
    if (d_max) emit("d_max", std::to_string(*d_max));
    if (min_leaf_dim) emit("min_leaf_dim", std::to_string(*min_leaf_dim));
    if (g) emit("g", format_double(*g));
    if (alpha) emit("alpha", format_list(*alpha));
    if (mu) emit("mu", format_list(*mu));
    if (lambda) emit("lambda", format_list(*lambda));
    if (a) emit("a", format_double(*a));
    if (b) emit("b", format_double(*b));
    if (step_c0) emit("step_c0", format_double(*step_c0));
    if (step_c1) emit("step_c1", format_double(*step_c1));
    if (max_iters) emit("max_iters", std::to_string(*max_iters));
    if (patience) emit("patience", std::to_string(*patience));
    if (vb_sweeps_per_step) emit("vb_sweeps_per_step", std::to_string(*vb_sweeps_per_step));
    if (seed) emit("seed", std::to_string(*seed));
    if (boundary_pad) emit("boundary_pad", format_double(*boundary_pad));
    if (template_path) emit("template", *template_path);
    return out;
}

ModelConfig RunConfig::build_model() const {
    std::vector<std::string> errors;
    if (!sigma) errors.push_back("sigma: required key is missing");
    else if (!(*sigma > 0.0)) errors.push_back("sigma: must be > 0");

    const int K = k.value_or(100);
    if (K < 1) errors.push_back("k: must be >= 1");

    NeighborTemplate tmpl;
    try {
        if (template_path) {
            tmpl = load_template_file(*template_path);
            if (boundary_pad) tmpl.boundary_pad = *boundary_pad;
            if (d && *d != tmpl.dim) {
                errors.push_back("d: conflicts with the template file dimension " + std::to_string(tmpl.dim));
            }
        } else {
            tmpl = make_template(d.value_or(10), boundary_pad.value_or(128.0));
        }
    } catch (const std::exception& e) {
        errors.push_back(std::string("template: ") + e.what());
        tmpl = make_template(10);
    }
    const int D = tmpl.dim;

    ModelConfig model;
    model.tmpl = tmpl;
    model.g = g.value_or(0.75);
    model.a = a.value_or(1.0);
    model.b = b.value_or(100.0);
    model.sigma2 = sigma ? (*sigma) * (*sigma) : 25.0;
    model.num_labels = std::max(K, 1);
    model.d_max = d_max.value_or(30);
    model.min_leaf_dim = min_leaf_dim.value_or(2);

    if (alpha) {
        if (alpha->size() == 1) model.alpha = Eigen::VectorXd::Constant(model.num_labels, alpha->front());
        else if (static_cast<int>(alpha->size()) == model.num_labels) {
            model.alpha = Eigen::Map<const Eigen::VectorXd>(alpha->data(), static_cast<long>(alpha->size()));
        } else {
            errors.push_back("alpha: expected 1 or K=" + std::to_string(model.num_labels) + " entries, got " +
                             std::to_string(alpha->size()));
            model.alpha = Eigen::VectorXd::Constant(model.num_labels, 0.01);
        }
    } else {
        model.alpha = Eigen::VectorXd::Constant(model.num_labels, 0.01);
    }

    if (mu) {
        if (mu->size() == 1) model.mu = Eigen::VectorXd::Constant(D, mu->front());
        else if (static_cast<int>(mu->size()) == D) {
            model.mu = Eigen::Map<const Eigen::VectorXd>(mu->data(), static_cast<long>(mu->size()));
        } else {
            errors.push_back("mu: expected 1 or D=" + std::to_string(D) + " entries, got " + std::to_string(mu->size()));
            model.mu = Eigen::VectorXd::Zero(D);
        }
    } else {
        model.mu = Eigen::VectorXd::Zero(D);
    }

    if (lambda) {
        if (lambda->size() == 1) model.lambda = lambda->front() * Eigen::MatrixXd::Identity(D, D);
        else if (static_cast<int>(lambda->size()) == D * D) {
            model.lambda = Eigen::Map<const Eigen::MatrixXd>(lambda->data(), D, D).transpose();  // row-major input
        } else {
            errors.push_back("lambda: expected 1 or D*D=" + std::to_string(D * D) + " entries, got " +
                             std::to_string(lambda->size()));
            model.lambda = Eigen::MatrixXd::Identity(D, D);
        }
    } else {
        model.lambda = Eigen::MatrixXd::Identity(D, D);
    }

    if (!errors.empty()) {
        std::string msg = "config errors:";
        for (const std::string& e : errors) msg += "\n  " + e;
        throw ValidationError(msg);
    }
    model.validate();
    return model;
}

OptimizerConfig RunConfig::build_optimizer() const {
    OptimizerConfig opt;
    opt.step_c0 = step_c0.value_or(0.1);
    opt.step_c1 = step_c1.value_or(0.05);
    opt.max_iters = max_iters.value_or(150);
    opt.patience = patience.value_or(10);
    opt.vb_sweeps_per_step = vb_sweeps_per_step.value_or(1);
    opt.seed = seed.value_or(0);
    opt.validate();
    return opt;
}

RunConfig RunConfig::effective() const {
    const ModelConfig model = build_model();
    const OptimizerConfig opt = build_optimizer();
    RunConfig eff;
    eff.sigma = std::sqrt(model.sigma2);
    eff.k = model.num_labels;
    eff.d = model.dim();
    eff.d_max = model.d_max;
    eff.min_leaf_dim = model.min_leaf_dim;
    eff.g = model.g;
    // scalar shorthand back-compression keeps metadata echoes readable
    if (model.alpha.isConstant(model.alpha[0])) {
        eff.alpha = std::vector<double>{model.alpha[0]};
    } else {
        eff.alpha = std::vector<double>(model.alpha.data(), model.alpha.data() + model.alpha.size());
    }
    if (model.mu.isConstant(model.mu[0])) {
        eff.mu = std::vector<double>{model.mu[0]};
    } else {
        eff.mu = std::vector<double>(model.mu.data(), model.mu.data() + model.mu.size());
    }
    if (model.lambda.isApprox(model.lambda(0, 0) * Eigen::MatrixXd::Identity(model.dim(), model.dim()))) {
        eff.lambda = std::vector<double>{model.lambda(0, 0)};
    } else {
        std::vector<double> flat;
        flat.reserve(static_cast<size_t>(model.dim()) * model.dim());
        for (int r = 0; r < model.dim(); ++r) {
            for (int c = 0; c < model.dim(); ++c) flat.push_back(model.lambda(r, c));
        }
        eff.lambda = flat;
    }
    eff.a = model.a;
    eff.b = model.b;
    eff.step_c0 = opt.step_c0;
    eff.step_c1 = opt.step_c1;
    eff.max_iters = opt.max_iters;
    eff.patience = opt.patience;
    eff.vb_sweeps_per_step = opt.vb_sweeps_per_step;
    eff.seed = opt.seed;
    eff.boundary_pad = model.tmpl.boundary_pad;
    eff.template_path = template_path;
    return eff;
}

}  // namespace qtar
