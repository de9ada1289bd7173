#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace khe::cli {

struct OracleBudget {
    std::uint64_t seed = 20240607;
    bool quick = false;
    /// Monte Carlo paths for the closed-form comparisons (1e5 at desk scale).
    std::size_t mc_samples() const { return quick ? 20000 : 100000; }
};

struct OracleOutcome {
    bool passed = false;
    std::string detail;
};

struct Oracle {
    std::string name;
    bool quick = false;          // part of the `selftest --quick` subset
    std::vector<int> criteria;   // acceptance criteria this oracle contributes to
    std::function<OracleOutcome(const OracleBudget&)> run;
};

/// Every oracle of the self-test, in a fixed order.
const std::vector<Oracle>& oracle_suite();

/// Seed of one oracle's streams: the base seed mixed with a hash of its name,
/// so a single oracle can be rerun in isolation.
std::uint64_t oracle_seed(std::uint64_t base, const std::string& name);

struct OracleRecord {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// Runs the oracles accepted by `select` and prints one line per oracle to
/// `log` (when non-null) as it completes.
std::vector<OracleRecord> run_oracles(const OracleBudget& budget,
                                      const std::function<bool(const Oracle&)>& select,
                                      std::ostream* log);

}  // namespace khe::cli
