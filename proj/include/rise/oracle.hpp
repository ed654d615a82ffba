#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "rise/oracle_world.hpp"

namespace rise {

// Partial assignment of unit variables: one value index per variable in
// world order, -1 for unobserved. An empty vector means nothing observed.
using Observation = std::vector<int>;

// Joint-mass accumulation over the world's full state space, the kernel
// behind every exact quantity here. For each joint state consistent with
// `observed`, the state's probability times the target row is added at
// [cond-assignment][attr-assignment][target-value].
//
// Two implementations: a plain serial loop (the reference) and a blocked
// OpenMP version. The blocked version partitions the flat state range into
// fixed blocks and combines partial sums in block order, so its output does
// not depend on the thread count. Block geometry depends only on the state
// and output sizes, keeping repeated runs deterministic.
namespace enumeration {

struct MassTableSpec {
    std::vector<int> cond_vars; // S, indexes into world.variables
    std::vector<int> attr_vars; // A, disjoint from S
    Observation observed;       // empty or world-sized
};

struct MassTable {
    std::vector<double> mass; // flattened [cond][attr][y]
    std::size_t cond_space = 1;
    std::size_t attr_space = 1;
    std::size_t y_space = 1;

    double& at(std::size_t s, std::size_t a, std::size_t y) {
        return mass[(s * attr_space + a) * y_space + y];
    }
    double at(std::size_t s, std::size_t a, std::size_t y) const {
        return mass[(s * attr_space + a) * y_space + y];
    }
    double total() const;
};

MassTable accumulate_serial(const OracleWorld& world, const MassTableSpec& spec);
MassTable accumulate_parallel(const OracleWorld& world, const MassTableSpec& spec);

// Serial below this many joint states; blocked OpenMP otherwise.
inline constexpr std::uint64_t kParallelThreshold = 1u << 14;

MassTable accumulate(const OracleWorld& world, const MassTableSpec& spec);

// I(A; Y | S) in nats from an accumulated (possibly unnormalized) table.
// Zero-mass cells contribute nothing; round-off negatives clamp to 0.
double cmi_from_table(const MassTable& table);

} // namespace enumeration

// Posterior over the target alphabet given observed unit values, by exact
// enumeration against the prior. Throws OracleError when the observation has
// zero probability (contradictory context) or the state space exceeds the
// world's enumeration bound.
std::vector<double> exact_posterior(const OracleWorld& world, const Observation& observed);

// I(C_var; Y | C_cond) in nats, full enumeration, averaged over the
// conditioning variables' law. The conditioning set must exclude `var`.
double exact_cmi(const OracleWorld& world, int var, const std::vector<int>& cond_vars);

// Group form I(C_A; Y | C_S); members already inside S must be dropped by
// the caller (the attribution layer does), so A and S must be disjoint here.
double exact_cmi_group(const OracleWorld& world, std::vector<int> attr_vars,
                       std::vector<int> cond_vars);

// Realization-conditioned variant I(C_var; Y | C_S = s*): `realized` pins
// exactly the conditioning variables. Used by the estimator/oracle
// equivalence checks.
double exact_cmi_at(const OracleWorld& world, int var, const Observation& realized);

// Joint law of a variable subset: (assignment, probability) pairs with
// assignments as value indices aligned with `vars`.
std::vector<std::pair<std::vector<int>, double>>
enumerate_marginal(const OracleWorld& world, const std::vector<int>& vars);

// P(C_var = . | observed), the conditional law of one unit variable.
std::vector<double> conditional_unit_law(const OracleWorld& world, int var,
                                         const Observation& observed);

} // namespace rise
