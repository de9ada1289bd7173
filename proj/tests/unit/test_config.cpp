#include <cmath>
#include <limits>

#include "doctest.h"
#include "khe/errors.hpp"
#include "khe_cli/config.hpp"

using namespace khe;
using namespace khe::cli;
using nlohmann::json;

namespace {

json minimal() { return json{{"schema_version", 1}}; }

std::string error_of(const json& doc) {
    try {
        parse_run_config(doc);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("a minimal document yields the defaults") {
    const RunConfig cfg = parse_run_config(minimal());
    RunConfig defaults;
    defaults.propagate.T = defaults.T;
    CHECK(to_json(cfg) == to_json(defaults));
    CHECK(cfg.grid == Grid2D{});
    CHECK(cfg.fd_config().grid == Grid2D{}.refined());
    CHECK(cfg.fd_config().T == doctest::Approx(2.5));
    CHECK(cfg.drift.build().value(2.0) == doctest::Approx(0.25 * (-2.0 + 12.0)));
}

TEST_CASE("schema version is required and checked") {
    CHECK(error_of(json::object()).rfind("/schema_version: missing", 0) == 0);
    json doc = minimal();
    doc["schema_version"] = 2;
    CHECK(error_of(doc).rfind("/schema_version: unsupported", 0) == 0);
}

TEST_CASE("errors carry the JSON pointer of the offending entry") {
    json doc = minimal();
    doc["propagate"] = {{"N", 2}, {"bogus", 1}};
    CHECK(error_of(doc) == "/propagate/bogus: unknown key");

    doc = minimal();
    doc["odd/key~"] = 1;
    CHECK(error_of(doc) == "/odd~1key~0: unknown key");

    doc = minimal();
    doc["grid"] = {{"nx", "many"}};
    CHECK(error_of(doc) == "/grid/nx: expected an integer");
    doc["grid"] = {{"nx", 2}};
    CHECK(error_of(doc) == "/grid/nx: expected an integer >= 3");
    doc["grid"] = {{"x_min", 3.0}, {"x_max", 1.0}};
    CHECK(error_of(doc).rfind("/grid: ", 0) == 0);

    doc = minimal();
    doc["propagate"] = {{"kernel_mode", "exact"}};
    CHECK(error_of(doc).rfind("/propagate/kernel_mode: expected one of pbar, q, exact_affine", 0) == 0);

    doc = minimal();
    doc["mc"] = {{"n_samples", 0}};
    CHECK(error_of(doc).rfind("/mc/n_samples: ", 0) == 0);

    doc = minimal();
    doc["kernel"] = {{"family", "linear_khe"}, {"points", {{0.0, 1.0}}}};
    CHECK(error_of(doc) == "/kernel/points/0: family linear_khe takes 4 coordinates per point");

    doc = minimal();
    doc["output"] = {{"line_cut_y", 7.0}};
    CHECK(error_of(doc) == "/output/line_cut_y: outside the grid's y range");

    doc = minimal();
    doc["T"] = -1.0;
    CHECK(error_of(doc) == "/T: expected a positive number");

    doc = minimal();
    doc["drift"] = {{"preset", "affine"}, {"coeffs", {1.0}}};
    CHECK(error_of(doc) == "/drift/coeffs: affine drift takes {c0, a}");
    doc["drift"] = {{"preset", "polynomial"}};
    CHECK(error_of(doc) == "/drift/coeffs: polynomial drift needs coefficients");
    doc["drift"] = {{"preset", "table1"}, {"coeffs", {1.0}}};
    CHECK(error_of(doc).rfind("/drift/coeffs: ", 0) == 0);

    CHECK_THROWS_AS(load_run_config("/nonexistent/khe.json"), ConfigError);
}

TEST_CASE("every field round-trips through to_json") {
    json doc = minimal();
    doc["drift"] = {{"preset", "affine"}, {"coeffs", {0.3, -1.5}}};
    doc["grid"] = {{"x_min", -6.0}, {"x_max", 6.0}, {"y_min", -3.0}, {"y_max", 3.0}, {"nx", 61}, {"ny", 31}};
    doc["T"] = 1.25;
    doc["sigma_c2"] = 0.3;
    doc["propagate"] = {{"N", 3},
                        {"kernel_mode", "exact_affine"},
                        {"quadrature", "trapezoid"},
                        {"clamp_negative", true},
                        {"support_cutoff_sigmas", "inf"},
                        {"grad_epsilon", 1e-6},
                        {"h_quad_order", 16}};
    doc["kernel"] = {{"family", "ou_potential"}, {"t", 0.7}, {"alpha", {0.5, -1.0}}, {"zeta", 2.0},
                     {"ou_sign", "proof"},       {"points", {{0.1, 0.2}, {0.3, -0.4}}}};
    doc["mc"] = {{"n_steps", 50}, {"n_samples", 1000}, {"seed", 7}, {"antithetic", true}, {"line_stride", 2},
                 {"points", {{0.0, 1.0}}}};
    doc["fd"] = {{"refine", 0}, {"n_t", 100}, {"x_scheme", "centered2"}, {"flush_interval", 5},
                 {"divergence_factor", 20.0}};
    doc["output"] = {{"directory", "out"}, {"line_cut_y", 1.0}, {"figures", false}};

    const RunConfig cfg = parse_run_config(doc);
    CHECK(std::isinf(cfg.propagate.support_cutoff_sigmas));
    CHECK(cfg.propagate.T == doctest::Approx(1.25));
    CHECK(cfg.fd_config().grid == cfg.grid);
    CHECK(cfg.drift.build().value(2.0) == doctest::Approx(0.3 - 3.0));
    const json echoed = to_json(cfg);
    CHECK(to_json(parse_run_config(echoed)) == echoed);
    CHECK(echoed["kernel"]["ou_sign"] == "proof");
    CHECK(echoed["mc"]["seed"] == 7);
}
