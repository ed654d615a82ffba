#include "rise/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "rise/errors.hpp"

namespace rise {
namespace enumeration {

namespace {

// Flattened, pointer-friendly view of the world used inside the hot loop.
struct Compiled {
    int n_vars = 0;
    std::vector<int> alpha_sizes;
    struct VarMeta {
        OracleWorld::VarKind kind;
        int copy_of = -1;
        const double* prior = nullptr;
        std::vector<int> parents;
        std::vector<std::uint64_t> parent_radix; // last parent fastest
        const std::vector<std::vector<double>>* table = nullptr;
    };
    std::vector<VarMeta> metas;
    std::vector<int> target_parents;
    std::vector<std::uint64_t> target_radix;
    const std::vector<std::vector<double>>* target_table = nullptr;
    int y_space = 0;

    explicit Compiled(const OracleWorld& w) {
        n_vars = static_cast<int>(w.variables.size());
        alpha_sizes.reserve(w.variables.size());
        for (const auto& v : w.variables) {
            alpha_sizes.push_back(static_cast<int>(v.alphabet.size()));
        }
        metas.resize(w.variables.size());
        for (int i = 0; i < n_vars; ++i) {
            const auto& v = w.variables[static_cast<std::size_t>(i)];
            auto& m = metas[static_cast<std::size_t>(i)];
            m.kind = v.kind;
            switch (v.kind) {
                case OracleWorld::VarKind::root:
                    m.prior = v.prior.data();
                    break;
                case OracleWorld::VarKind::copy:
                    m.copy_of = w.require_var(v.copy_of);
                    break;
                case OracleWorld::VarKind::table:
                    for (const auto& p : v.parents) m.parents.push_back(w.require_var(p));
                    m.parent_radix = radix_of(m.parents);
                    m.table = &v.table;
                    break;
            }
        }
        for (const auto& p : w.target_parents) target_parents.push_back(w.require_var(p));
        target_radix = radix_of(target_parents);
        target_table = &w.target_table;
        y_space = static_cast<int>(w.target_alphabet.size());
    }

    std::vector<std::uint64_t> radix_of(const std::vector<int>& vars) const {
        std::vector<std::uint64_t> radix(vars.size(), 1);
        for (std::size_t i = vars.size(); i-- > 1;) {
            radix[i - 1] = radix[i] *
                static_cast<std::uint64_t>(alpha_sizes[static_cast<std::size_t>(vars[i])]);
        }
        return radix;
    }

    std::uint64_t row_index(const std::vector<int>& vars,
                            const std::vector<std::uint64_t>& radix,
                            const int* values) const {
        std::uint64_t idx = 0;
        for (std::size_t i = 0; i < vars.size(); ++i) {
            idx += radix[i] * static_cast<std::uint64_t>(values[vars[i]]);
        }
        return idx;
    }

    double state_prob(const int* values) const {
        double p = 1.0;
        for (int i = 0; i < n_vars; ++i) {
            const auto& m = metas[static_cast<std::size_t>(i)];
            switch (m.kind) {
                case OracleWorld::VarKind::root:
                    p *= m.prior[values[i]];
                    break;
                case OracleWorld::VarKind::copy:
                    if (values[i] != values[m.copy_of]) return 0.0;
                    break;
                case OracleWorld::VarKind::table:
                    p *= (*m.table)[row_index(m.parents, m.parent_radix, values)]
                                   [static_cast<std::size_t>(values[i])];
                    break;
            }
            if (p == 0.0) return 0.0;
        }
        return p;
    }

    const std::vector<double>& target_row(const int* values) const {
        return (*target_table)[row_index(target_parents, target_radix, values)];
    }

    void decode(std::uint64_t flat, int* values) const {
        for (int i = n_vars; i-- > 0;) {
            auto a = static_cast<std::uint64_t>(alpha_sizes[static_cast<std::size_t>(i)]);
            values[i] = static_cast<int>(flat % a);
            flat /= a;
        }
    }

    // Odometer step, last variable fastest; matches decode().
    bool advance(int* values) const {
        for (int i = n_vars; i-- > 0;) {
            if (++values[i] < alpha_sizes[static_cast<std::size_t>(i)]) return true;
            values[i] = 0;
        }
        return false;
    }
};

struct OutGeometry {
    std::vector<int> cond_vars, attr_vars;
    std::vector<std::uint64_t> cond_radix, attr_radix;
    std::size_t cond_space = 1, attr_space = 1, y_space = 1;
};

OutGeometry geometry(const OracleWorld& w, const Compiled& cw, const MassTableSpec& spec) {
    OutGeometry g;
    g.cond_vars = spec.cond_vars;
    g.attr_vars = spec.attr_vars;
    g.cond_radix = cw.radix_of(g.cond_vars);
    g.attr_radix = cw.radix_of(g.attr_vars);
    for (int v : g.cond_vars) {
        g.cond_space *= w.variables[static_cast<std::size_t>(v)].alphabet.size();
    }
    for (int v : g.attr_vars) {
        g.attr_space *= w.variables[static_cast<std::size_t>(v)].alphabet.size();
    }
    g.y_space = w.target_alphabet.size();
    return g;
}

void accumulate_range(const Compiled& cw, const OutGeometry& g, const Observation& observed,
                      std::uint64_t begin, std::uint64_t end, double* out) {
    std::vector<int> values(static_cast<std::size_t>(cw.n_vars));
    cw.decode(begin, values.data());
    const bool has_obs = !observed.empty();
    for (std::uint64_t flat = begin; flat < end; ++flat) {
        bool consistent = true;
        if (has_obs) {
            for (int i = 0; i < cw.n_vars; ++i) {
                if (observed[static_cast<std::size_t>(i)] >= 0 &&
                    values[static_cast<std::size_t>(i)] != observed[static_cast<std::size_t>(i)]) {
                    consistent = false;
                    break;
                }
            }
        }
        if (consistent) {
            double p = cw.state_prob(values.data());
            if (p > 0.0) {
                const auto& row = cw.target_row(values.data());
                std::uint64_t s = cw.row_index(g.cond_vars, g.cond_radix, values.data());
                std::uint64_t a = cw.row_index(g.attr_vars, g.attr_radix, values.data());
                double* cell = out + (s * g.attr_space + a) * g.y_space;
                for (std::size_t y = 0; y < g.y_space; ++y) cell[y] += p * row[y];
            }
        }
        cw.advance(values.data());
    }
}

void validate_spec(const OracleWorld& w, const MassTableSpec& spec) {
    if (w.joint_states() > w.enumeration_bound) {
        throw OracleError("joint state count exceeds enumeration bound");
    }
    if (!spec.observed.empty() && spec.observed.size() != w.variables.size()) {
        throw OracleError("observation vector size mismatch");
    }
    for (int v : spec.cond_vars) {
        for (int a : spec.attr_vars) {
            if (v == a) throw OracleError("conditioning set overlaps attribute set");
        }
    }
}

} // namespace

double MassTable::total() const {
    double t = 0.0;
    for (double m : mass) t += m;
    return t;
}

MassTable accumulate_serial(const OracleWorld& world, const MassTableSpec& spec) {
    validate_spec(world, spec);
    Compiled cw(world);
    OutGeometry g = geometry(world, cw, spec);
    MassTable t;
    t.cond_space = g.cond_space;
    t.attr_space = g.attr_space;
    t.y_space = g.y_space;
    t.mass.assign(g.cond_space * g.attr_space * g.y_space, 0.0);
    accumulate_range(cw, g, spec.observed, 0, world.joint_states(), t.mass.data());
    return t;
}

MassTable accumulate_parallel(const OracleWorld& world, const MassTableSpec& spec) {
    validate_spec(world, spec);
    Compiled cw(world);
    OutGeometry g = geometry(world, cw, spec);
    const std::uint64_t n_states = world.joint_states();
    const std::size_t out_size = g.cond_space * g.attr_space * g.y_space;

    // Fixed block geometry: a function of the problem size only, never of
    // the thread count, so the combine order (and hence rounding) is stable.
    std::uint64_t n_blocks = std::min<std::uint64_t>(64, (n_states + 8191) / 8192);
    if (n_blocks == 0) n_blocks = 1;
    while (n_blocks > 1 && n_blocks * out_size > (1u << 25)) n_blocks /= 2;
    const std::uint64_t block = (n_states + n_blocks - 1) / n_blocks;

    std::vector<double> partials(n_blocks * out_size, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(n_blocks); ++b) {
        std::uint64_t begin = static_cast<std::uint64_t>(b) * block;
        std::uint64_t end = std::min(n_states, begin + block);
        if (begin < end) {
            accumulate_range(cw, g, spec.observed, begin, end,
                             partials.data() + static_cast<std::size_t>(b) * out_size);
        }
    }

    MassTable t;
    t.cond_space = g.cond_space;
    t.attr_space = g.attr_space;
    t.y_space = g.y_space;
    t.mass.assign(out_size, 0.0);
    for (std::uint64_t b = 0; b < n_blocks; ++b) {
        const double* part = partials.data() + static_cast<std::size_t>(b) * out_size;
        for (std::size_t k = 0; k < out_size; ++k) t.mass[k] += part[k];
    }
    return t;
}

MassTable accumulate(const OracleWorld& world, const MassTableSpec& spec) {
    if (world.joint_states() < kParallelThreshold) return accumulate_serial(world, spec);
    return accumulate_parallel(world, spec);
}

double cmi_from_table(const MassTable& t) {
    const std::size_t S = t.cond_space, A = t.attr_space, Y = t.y_space;
    std::vector<double> m_s(S, 0.0), m_sa(S * A, 0.0), m_sy(S * Y, 0.0);
    double total = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            for (std::size_t y = 0; y < Y; ++y) {
                double m = t.at(s, a, y);
                m_s[s] += m;
                m_sa[s * A + a] += m;
                m_sy[s * Y + y] += m;
                total += m;
            }
        }
    }
    if (total <= 0.0) throw OracleError("zero total mass in CMI table");
    double nats = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            for (std::size_t y = 0; y < Y; ++y) {
                double m = t.at(s, a, y);
                if (m <= 0.0) continue;
                nats += (m / total) *
                        std::log(m * m_s[s] / (m_sa[s * A + a] * m_sy[s * Y + y]));
            }
        }
    }
    return std::max(nats, 0.0);
}

} // namespace enumeration

std::vector<double> exact_posterior(const OracleWorld& world, const Observation& observed) {
    enumeration::MassTableSpec spec;
    spec.observed = observed;
    auto t = enumeration::accumulate(world, spec);
    double z = t.total();
    if (z <= 0.0) {
        throw OracleError("observed context has zero probability under world '" +
                          world.name + "' (contradictory observations)");
    }
    std::vector<double> posterior(t.y_space);
    for (std::size_t y = 0; y < t.y_space; ++y) posterior[y] = t.at(0, 0, y) / z;
    return posterior;
}

double exact_cmi(const OracleWorld& world, int var, const std::vector<int>& cond_vars) {
    return exact_cmi_group(world, {var}, cond_vars);
}

double exact_cmi_group(const OracleWorld& world, std::vector<int> attr_vars,
                       std::vector<int> cond_vars) {
    auto dedupe = [](std::vector<int>& v) {
        std::vector<int> out;
        for (int x : v) {
            if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
        }
        v = std::move(out);
    };
    dedupe(attr_vars);
    dedupe(cond_vars);
    for (int a : attr_vars) {
        if (std::find(cond_vars.begin(), cond_vars.end(), a) != cond_vars.end()) {
            throw OracleError("conditioning set must exclude the attributed variables");
        }
    }
    if (attr_vars.empty()) return 0.0;
    enumeration::MassTableSpec spec;
    spec.cond_vars = std::move(cond_vars);
    spec.attr_vars = std::move(attr_vars);
    return enumeration::cmi_from_table(enumeration::accumulate(world, spec));
}

double exact_cmi_at(const OracleWorld& world, int var, const Observation& realized) {
    if (!realized.empty() && realized.size() == world.variables.size() &&
        realized[static_cast<std::size_t>(var)] >= 0) {
        throw OracleError("realized conditioning must not pin the attributed variable");
    }
    enumeration::MassTableSpec spec;
    spec.attr_vars = {var};
    spec.observed = realized;
    return enumeration::cmi_from_table(enumeration::accumulate(world, spec));
}

std::vector<std::pair<std::vector<int>, double>>
enumerate_marginal(const OracleWorld& world, const std::vector<int>& vars) {
    enumeration::MassTableSpec spec;
    spec.attr_vars = vars;
    auto t = enumeration::accumulate(world, spec);
    double z = t.total();
    if (z <= 0.0) throw OracleError("zero total mass in marginal");

    std::vector<std::pair<std::vector<int>, double>> out;
    out.reserve(t.attr_space);
    for (std::size_t a = 0; a < t.attr_space; ++a) {
        double mass = 0.0;
        for (std::size_t y = 0; y < t.y_space; ++y) mass += t.at(0, a, y);
        // Decode the flattened assignment (last var fastest).
        std::vector<int> assignment(vars.size());
        std::size_t rem = a;
        for (std::size_t i = vars.size(); i-- > 0;) {
            std::size_t sz = world.variables[static_cast<std::size_t>(vars[i])].alphabet.size();
            assignment[i] = static_cast<int>(rem % sz);
            rem /= sz;
        }
        out.emplace_back(std::move(assignment), mass / z);
    }
    return out;
}

std::vector<double> conditional_unit_law(const OracleWorld& world, int var,
                                         const Observation& observed) {
    enumeration::MassTableSpec spec;
    spec.attr_vars = {var};
    spec.observed = observed;
    auto t = enumeration::accumulate(world, spec);
    double z = t.total();
    if (z <= 0.0) {
        throw OracleError("conditional law conditioned on a zero-probability observation");
    }
    std::vector<double> law(t.attr_space, 0.0);
    for (std::size_t a = 0; a < t.attr_space; ++a) {
        for (std::size_t y = 0; y < t.y_space; ++y) law[a] += t.at(0, a, y);
        law[a] /= z;
    }
    return law;
}

} // namespace rise
