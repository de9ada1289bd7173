#include "khe_cli/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <set>

#include "khe/errors.hpp"

namespace khe::cli {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError((path.empty() ? std::string("/") : path) + ": " + what);
}

std::string child(const std::string& path, const std::string& key) {
    std::string escaped;
    for (char ch : key) {
        if (ch == '~') escaped += "~0";
        else if (ch == '/') escaped += "~1";
        else escaped += ch;
    }
    return path + "/" + escaped;
}

// Object reader that remembers which keys were consumed so leftovers can be
// reported as unknown.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    void field(const std::string& key, const std::function<void(const json&, const std::string&)>& read) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it != j_.end()) read(*it, child(path_, key));
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) fail(child(path_, item.key()), "unknown key");
        }
    }

    const std::string& path() const { return path_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

double number(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(path, "expected a finite number");
    return v;
}

double positive(const json& j, const std::string& path) {
    const double v = number(j, path);
    if (!(v > 0.0)) fail(path, "expected a positive number");
    return v;
}

std::size_t count(const json& j, const std::string& path, std::size_t min_value = 1) {
    if (!j.is_number_integer() && !j.is_number_unsigned()) fail(path, "expected an integer");
    if (j.is_number_integer() && j.get<long long>() < static_cast<long long>(min_value)) {
        fail(path, "expected an integer >= " + std::to_string(min_value));
    }
    return j.get<std::size_t>();
}

bool boolean(const json& j, const std::string& path) {
    if (!j.is_boolean()) fail(path, "expected true or false");
    return j.get<bool>();
}

std::string choice(const json& j, const std::string& path, const std::vector<std::string>& allowed) {
    if (!j.is_string()) fail(path, "expected a string");
    const std::string s = j.get<std::string>();
    for (const auto& a : allowed) {
        if (s == a) return s;
    }
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    fail(path, "expected one of " + list + ", got \"" + s + "\"");
}

std::vector<double> numbers(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t k = 0; k < j.size(); ++k) out.push_back(number(j[k], path + "/" + std::to_string(k)));
    return out;
}

template <std::size_t N>
std::array<double, N> fixed(const json& j, const std::string& path) {
    const std::vector<double> v = numbers(j, path);
    if (v.size() != N) fail(path, "expected " + std::to_string(N) + " numbers");
    std::array<double, N> out{};
    for (std::size_t k = 0; k < N; ++k) out[k] = v[k];
    return out;
}

// Rethrows a module's ConfigError with the section's location in front.
template <class F>
void checked(const std::string& path, F&& validate) {
    try {
        validate();
    } catch (const ConfigError& e) {
        fail(path, e.what());
    } catch (const ShapeError& e) {
        fail(path, e.what());
    }
}

void read_grid(const json& j, const std::string& path, Grid2D& g) {
    Section s(j, path);
    s.field("x_min", [&](const json& v, const std::string& p) { g.x_min = number(v, p); });
    s.field("x_max", [&](const json& v, const std::string& p) { g.x_max = number(v, p); });
    s.field("y_min", [&](const json& v, const std::string& p) { g.y_min = number(v, p); });
    s.field("y_max", [&](const json& v, const std::string& p) { g.y_max = number(v, p); });
    s.field("nx", [&](const json& v, const std::string& p) { g.nx = count(v, p, 3); });
    s.field("ny", [&](const json& v, const std::string& p) { g.ny = count(v, p, 3); });
    s.finish();
    checked(path, [&] { g.validate(); });
}

void read_drift(const json& j, const std::string& path, DriftChoice& d) {
    Section s(j, path);
    s.field("preset", [&](const json& v, const std::string& p) {
        d.preset = choice(v, p, {"table1", "affine", "photon", "exponential", "polynomial"});
    });
    s.field("coeffs", [&](const json& v, const std::string& p) { d.coeffs = numbers(v, p); });
    s.finish();
    if (d.preset == "polynomial" && d.coeffs.empty()) fail(child(path, "coeffs"), "polynomial drift needs coefficients");
    if (d.preset == "affine" && d.coeffs.size() != 2) fail(child(path, "coeffs"), "affine drift takes {c0, a}");
    if ((d.preset != "polynomial" && d.preset != "affine") && !d.coeffs.empty()) {
        fail(child(path, "coeffs"), "only the polynomial and affine presets take coefficients");
    }
}

void read_propagate(const json& j, const std::string& path, PropagateConfig& c) {
    Section s(j, path);
    s.field("N", [&](const json& v, const std::string& p) { c.N = count(v, p); });
    s.field("kernel_mode", [&](const json& v, const std::string& p) {
        const std::string m = choice(v, p, {"pbar", "q", "exact_affine"});
        c.kernel_mode = m == "pbar" ? KernelMode::pbar : m == "q" ? KernelMode::q : KernelMode::exact_affine;
    });
    s.field("quadrature", [&](const json& v, const std::string& p) {
        c.quadrature = choice(v, p, {"product", "trapezoid"}) == "product" ? QuadratureRule::product
                                                                            : QuadratureRule::trapezoid;
    });
    s.field("clamp_negative", [&](const json& v, const std::string& p) { c.clamp_negative = boolean(v, p); });
    s.field("support_cutoff_sigmas", [&](const json& v, const std::string& p) {
        if (v.is_string() && v.get<std::string>() == "inf") {
            c.support_cutoff_sigmas = std::numeric_limits<double>::infinity();
        } else {
            c.support_cutoff_sigmas = positive(v, p);
        }
    });
    s.field("grad_epsilon", [&](const json& v, const std::string& p) { c.kernel.grad_epsilon = positive(v, p); });
    s.field("h_quad_order", [&](const json& v, const std::string& p) { c.kernel.quad_order = count(v, p, 2); });
    s.finish();
}

void read_kernel(const json& j, const std::string& path, KernelChoice& k) {
    Section s(j, path);
    s.field("family", [&](const json& v, const std::string& p) {
        k.family = choice(v, p, {"heat", "linear_potential", "quadratic_potential", "ou_potential",
                                 "linear_khe", "quad_khe", "ou_khe", "q", "pbar"});
    });
    s.field("t", [&](const json& v, const std::string& p) { k.t = positive(v, p); });
    s.field("alpha", [&](const json& v, const std::string& p) { k.alpha = fixed<2>(v, p); });
    s.field("a", [&](const json& v, const std::string& p) { k.a = number(v, p); });
    s.field("rho", [&](const json& v, const std::string& p) { k.rho = number(v, p); });
    s.field("zeta", [&](const json& v, const std::string& p) { k.zeta = positive(v, p); });
    s.field("ou_sign", [&](const json& v, const std::string& p) { k.ou_sign = choice(v, p, {"statement", "proof"}); });
    s.field("source", [&](const json& v, const std::string& p) { k.source = fixed<2>(v, p); });
    s.field("points", [&](const json& v, const std::string& p) {
        if (!v.is_array()) fail(p, "expected an array of points");
        k.points.clear();
        for (std::size_t i = 0; i < v.size(); ++i) k.points.push_back(numbers(v[i], p + "/" + std::to_string(i)));
    });
    s.finish();
    const std::size_t arity = k.family == "heat" ? 1
                              : (k.family == "linear_potential" || k.family == "quadratic_potential" ||
                                 k.family == "ou_potential")
                                  ? 2
                                  : 4;
    for (std::size_t i = 0; i < k.points.size(); ++i) {
        if (k.points[i].size() != arity) {
            fail(child(path, "points") + "/" + std::to_string(i),
                 "family " + k.family + " takes " + std::to_string(arity) + " coordinates per point");
        }
    }
}

void read_mc(const json& j, const std::string& path, McChoice& m) {
    Section s(j, path);
    s.field("n_steps", [&](const json& v, const std::string& p) { m.config.n_steps = count(v, p); });
    s.field("n_samples", [&](const json& v, const std::string& p) { m.config.n_samples = count(v, p); });
    s.field("seed", [&](const json& v, const std::string& p) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            fail(p, "expected a non-negative integer");
        }
        m.config.seed = v.get<std::uint64_t>();
    });
    s.field("antithetic", [&](const json& v, const std::string& p) { m.config.antithetic = boolean(v, p); });
    s.field("line_stride", [&](const json& v, const std::string& p) { m.line_stride = count(v, p); });
    s.field("points", [&](const json& v, const std::string& p) {
        if (!v.is_array()) fail(p, "expected an array of [x, y] points");
        m.points.clear();
        for (std::size_t i = 0; i < v.size(); ++i) m.points.push_back(fixed<2>(v[i], p + "/" + std::to_string(i)));
    });
    s.finish();
    checked(path, [&] { m.config.validate(); });
}

void read_fd(const json& j, const std::string& path, FdChoice& f) {
    Section s(j, path);
    s.field("refine", [&](const json& v, const std::string& p) { f.refine = static_cast<unsigned>(count(v, p, 0)); });
    s.field("n_t", [&](const json& v, const std::string& p) { f.config.n_t = count(v, p); });
    s.field("x_scheme", [&](const json& v, const std::string& p) {
        const std::string x = choice(v, p, {"spectral", "upwind1", "centered2"});
        f.config.x_scheme = x == "spectral" ? XScheme::spectral : x == "upwind1" ? XScheme::upwind1 : XScheme::centered2;
    });
    s.field("flush_interval", [&](const json& v, const std::string& p) { f.config.flush_interval = count(v, p); });
    s.field("divergence_factor", [&](const json& v, const std::string& p) {
        f.config.divergence_factor = number(v, p);
        if (!(f.config.divergence_factor > 1.0)) fail(p, "expected a number > 1");
    });
    s.finish();
    if (f.refine > 4) fail(child(path, "refine"), "at most 4 refinements");
}

void read_output(const json& j, const std::string& path, OutputChoice& o) {
    Section s(j, path);
    s.field("directory", [&](const json& v, const std::string& p) {
        if (!v.is_string() || v.get<std::string>().empty()) fail(p, "expected a non-empty string");
        o.directory = v.get<std::string>();
    });
    s.field("line_cut_y", [&](const json& v, const std::string& p) { o.line_cut_y = number(v, p); });
    s.field("figures", [&](const json& v, const std::string& p) { o.figures = boolean(v, p); });
    s.finish();
}

const char* name_of(KernelMode m) {
    switch (m) {
        case KernelMode::pbar: return "pbar";
        case KernelMode::q: return "q";
        case KernelMode::exact_affine: return "exact_affine";
    }
    return "pbar";
}

const char* name_of(XScheme x) {
    switch (x) {
        case XScheme::spectral: return "spectral";
        case XScheme::upwind1: return "upwind1";
        case XScheme::centered2: return "centered2";
    }
    return "spectral";
}

}  // namespace

DriftSpec DriftChoice::build() const {
    if (preset == "table1") return DriftSpec::table1();
    if (preset == "photon") return DriftSpec::photon();
    if (preset == "exponential") return DriftSpec::exponential();
    if (preset == "affine") return DriftSpec::affine(Eigen::VectorXd::Constant(1, coeffs.at(1)), coeffs.at(0));
    if (preset == "polynomial") return DriftSpec::polynomial(coeffs);
    throw ConfigError("/drift/preset: unknown drift preset " + preset);
}

FdConfig RunConfig::fd_config() const {
    FdConfig c = fd.config;
    c.grid = grid;
    for (unsigned k = 0; k < fd.refine; ++k) c.grid = c.grid.refined();
    c.T = T;
    return c;
}

void RunConfig::validate() const {
    checked("/grid", [&] { grid.validate(); });
    if (!(T > 0.0) || !std::isfinite(T)) fail("/T", "expected a positive number");
    if (!(sigma_c2 > 0.0) || !std::isfinite(sigma_c2)) fail("/sigma_c2", "expected a positive number");
    checked("/propagate", [&] {
        PropagateConfig p = propagate;
        p.T = T;
        p.validate();
    });
    checked("/mc", [&] { mc.config.validate(); });
    checked("/fd", [&] { fd_config().validate(); });
    if (output.line_cut_y < grid.y_min || output.line_cut_y > grid.y_max) {
        fail("/output/line_cut_y", "outside the grid's y range");
    }
}

RunConfig parse_run_config(const json& doc) {
    RunConfig cfg;
    Section root(doc, "");
    root.field("schema_version", [&](const json& v, const std::string& p) {
        if (!v.is_number_integer() || v.get<long long>() != kSchemaVersion) {
            fail(p, "unsupported schema version (this build reads version " + std::to_string(kSchemaVersion) + ")");
        }
    });
    if (!doc.contains("schema_version")) fail("/schema_version", "missing (expected " + std::to_string(kSchemaVersion) + ")");
    root.field("drift", [&](const json& v, const std::string& p) { read_drift(v, p, cfg.drift); });
    root.field("grid", [&](const json& v, const std::string& p) { read_grid(v, p, cfg.grid); });
    root.field("T", [&](const json& v, const std::string& p) { cfg.T = positive(v, p); });
    root.field("sigma_c2", [&](const json& v, const std::string& p) { cfg.sigma_c2 = positive(v, p); });
    root.field("propagate", [&](const json& v, const std::string& p) { read_propagate(v, p, cfg.propagate); });
    root.field("kernel", [&](const json& v, const std::string& p) { read_kernel(v, p, cfg.kernel); });
    root.field("mc", [&](const json& v, const std::string& p) { read_mc(v, p, cfg.mc); });
    root.field("fd", [&](const json& v, const std::string& p) { read_fd(v, p, cfg.fd); });
    root.field("output", [&](const json& v, const std::string& p) { read_output(v, p, cfg.output); });
    root.finish();
    cfg.propagate.T = cfg.T;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open configuration file");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_run_config(doc);
}

json to_json(const RunConfig& cfg) {
    json j;
    j["schema_version"] = cfg.schema_version;
    j["drift"] = {{"preset", cfg.drift.preset}};
    if (!cfg.drift.coeffs.empty()) j["drift"]["coeffs"] = cfg.drift.coeffs;
    j["grid"] = {{"x_min", cfg.grid.x_min}, {"x_max", cfg.grid.x_max}, {"y_min", cfg.grid.y_min},
                 {"y_max", cfg.grid.y_max}, {"nx", cfg.grid.nx},       {"ny", cfg.grid.ny}};
    j["T"] = cfg.T;
    j["sigma_c2"] = cfg.sigma_c2;
    const PropagateConfig& p = cfg.propagate;
    j["propagate"] = {{"N", p.N},
                      {"kernel_mode", name_of(p.kernel_mode)},
                      {"quadrature", p.quadrature == QuadratureRule::product ? "product" : "trapezoid"},
                      {"clamp_negative", p.clamp_negative},
                      {"grad_epsilon", p.kernel.grad_epsilon},
                      {"h_quad_order", p.kernel.quad_order}};
    if (std::isinf(p.support_cutoff_sigmas)) {
        j["propagate"]["support_cutoff_sigmas"] = "inf";
    } else {
        j["propagate"]["support_cutoff_sigmas"] = p.support_cutoff_sigmas;
    }
    const KernelChoice& k = cfg.kernel;
    j["kernel"] = {{"family", k.family}, {"t", k.t},       {"alpha", k.alpha},     {"a", k.a},
                   {"rho", k.rho},       {"zeta", k.zeta}, {"ou_sign", k.ou_sign}, {"source", k.source},
                   {"points", k.points}};
    j["mc"] = {{"n_steps", cfg.mc.config.n_steps},
               {"n_samples", cfg.mc.config.n_samples},
               {"seed", cfg.mc.config.seed},
               {"antithetic", cfg.mc.config.antithetic},
               {"line_stride", cfg.mc.line_stride},
               {"points", cfg.mc.points}};
    j["fd"] = {{"refine", cfg.fd.refine},
               {"n_t", cfg.fd.config.n_t},
               {"x_scheme", name_of(cfg.fd.config.x_scheme)},
               {"flush_interval", cfg.fd.config.flush_interval},
               {"divergence_factor", cfg.fd.config.divergence_factor}};
    j["output"] = {{"directory", cfg.output.directory},
                   {"line_cut_y", cfg.output.line_cut_y},
                   {"figures", cfg.output.figures}};
    return j;
}

}  // namespace khe::cli
