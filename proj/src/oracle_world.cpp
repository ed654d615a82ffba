#include "rise/oracle_world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "rise/errors.hpp"

namespace rise {

namespace {

void check_row(const std::vector<double>& row, const std::string& where) {
    double total = 0.0;
    for (double p : row) {
        if (p < 0.0 || std::isnan(p)) {
            throw OracleError("negative or NaN probability in " + where);
        }
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw OracleError("probability row in " + where + " sums to " +
                          std::to_string(total));
    }
}

std::size_t assignments_of(const OracleWorld& w, const std::vector<std::string>& names) {
    std::size_t n = 1;
    for (const auto& p : names) {
        n *= w.variables[static_cast<std::size_t>(w.require_var(p))].alphabet.size();
    }
    return n;
}

} // namespace

int OracleWorld::var_index(std::string_view vname) const {
    for (std::size_t i = 0; i < variables.size(); ++i) {
        if (variables[i].name == vname) return static_cast<int>(i);
    }
    return -1;
}

int OracleWorld::require_var(std::string_view vname) const {
    int idx = var_index(vname);
    if (idx < 0) throw OracleError("unknown variable '" + std::string(vname) + "' in world '" + name + "'");
    return idx;
}

int OracleWorld::symbol_index(int var, std::string_view symbol) const {
    const auto& alpha = variables[static_cast<std::size_t>(var)].alphabet;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        if (alpha[i] == symbol) return static_cast<int>(i);
    }
    return -1;
}

int OracleWorld::target_symbol_index(std::string_view symbol) const {
    for (std::size_t i = 0; i < target_alphabet.size(); ++i) {
        if (target_alphabet[i] == symbol) return static_cast<int>(i);
    }
    return -1;
}

std::size_t OracleWorld::joint_states() const {
    // Saturates instead of wrapping so the enumeration bound check cannot
    // be defeated by absurd alphabet products.
    std::size_t n = 1;
    for (const auto& v : variables) {
        std::size_t a = v.alphabet.size();
        if (a == 0) continue;
        if (n > std::numeric_limits<std::size_t>::max() / a) {
            return std::numeric_limits<std::size_t>::max();
        }
        n *= a;
    }
    return n;
}

void OracleWorld::validate() {
    if (variables.empty()) throw OracleError("world '" + name + "' has no variables");
    if (target_alphabet.empty()) throw OracleError("world '" + name + "' has empty target alphabet");

    for (const auto& v : variables) {
        if (v.alphabet.empty()) throw OracleError("variable " + v.name + " has empty alphabet");
        switch (v.kind) {
            case VarKind::root:
                if (v.prior.size() != v.alphabet.size()) {
                    throw OracleError("prior size mismatch for " + v.name);
                }
                check_row(v.prior, "prior of " + v.name);
                break;
            case VarKind::copy: {
                int p = require_var(v.copy_of);
                if (variables[static_cast<std::size_t>(p)].alphabet != v.alphabet) {
                    throw OracleError("copy edge " + v.copy_of + " -> " + v.name +
                                      " with mismatched alphabets");
                }
                break;
            }
            case VarKind::table: {
                std::size_t rows = assignments_of(*this, v.parents);
                if (v.table.size() != rows) {
                    throw OracleError("table for " + v.name + " has " +
                                      std::to_string(v.table.size()) + " rows, expected " +
                                      std::to_string(rows));
                }
                for (const auto& row : v.table) {
                    if (row.size() != v.alphabet.size()) {
                        throw OracleError("table row width mismatch for " + v.name);
                    }
                    check_row(row, "table of " + v.name);
                }
                break;
            }
        }
    }

    std::size_t rows = assignments_of(*this, target_parents);
    if (target_table.size() != rows) {
        throw OracleError("target table has " + std::to_string(target_table.size()) +
                          " rows, expected " + std::to_string(rows));
    }
    for (const auto& row : target_table) {
        if (row.size() != target_alphabet.size()) {
            throw OracleError("target table row width mismatch");
        }
        check_row(row, "target table");
    }

    if (joint_states() > enumeration_bound) {
        throw OracleError("world '" + name + "' has " + std::to_string(joint_states()) +
                          " joint states, exceeding the enumeration bound of " +
                          std::to_string(enumeration_bound));
    }

    // Kahn topological sort; rejects cycles.
    std::size_t n = variables.size();
    std::vector<std::vector<int>> children(n);
    std::vector<int> indeg(n, 0);
    auto add_edge = [&](int from, int to) {
        children[static_cast<std::size_t>(from)].push_back(to);
        ++indeg[static_cast<std::size_t>(to)];
    };
    for (std::size_t i = 0; i < n; ++i) {
        const auto& v = variables[i];
        if (v.kind == VarKind::copy) add_edge(require_var(v.copy_of), static_cast<int>(i));
        if (v.kind == VarKind::table) {
            for (const auto& p : v.parents) add_edge(require_var(p), static_cast<int>(i));
        }
    }
    topo_order_.clear();
    std::vector<int> queue;
    for (std::size_t i = 0; i < n; ++i) {
        if (indeg[i] == 0) queue.push_back(static_cast<int>(i));
    }
    while (!queue.empty()) {
        int v = queue.back();
        queue.pop_back();
        topo_order_.push_back(v);
        for (int c : children[static_cast<std::size_t>(v)]) {
            if (--indeg[static_cast<std::size_t>(c)] == 0) queue.push_back(c);
        }
    }
    if (topo_order_.size() != n) {
        throw OracleError("dependency structure of world '" + name + "' has a cycle");
    }

    for (const auto& t : tags.recent) require_var(t);
    for (const auto& t : tags.anchors) require_var(t);
}

OracleWorld OracleWorld::from_json(const nlohmann::json& j) {
    OracleWorld w;
    w.name = j.value("name", "");
    if (j.contains("enumeration_bound")) {
        w.enumeration_bound = j.at("enumeration_bound").get<std::size_t>();
    }
    for (const auto& vj : j.at("variables")) {
        Variable v;
        v.name = vj.at("name").get<std::string>();
        v.alphabet = vj.at("alphabet").get<std::vector<std::string>>();
        if (vj.contains("prior")) {
            v.kind = VarKind::root;
            v.prior = vj.at("prior").get<std::vector<double>>();
        }
        w.variables.push_back(std::move(v));
    }
    if (j.contains("edges")) {
        for (const auto& ej : j.at("edges")) {
            std::string kind = ej.at("kind").get<std::string>();
            int to = w.require_var(ej.at("to").get<std::string>());
            Variable& v = w.variables[static_cast<std::size_t>(to)];
            if (v.kind == VarKind::root && !v.prior.empty()) {
                throw OracleError("variable " + v.name + " has both a prior and an edge");
            }
            if (kind == "copy") {
                v.kind = VarKind::copy;
                v.copy_of = ej.at("from").get<std::string>();
            } else if (kind == "table") {
                v.kind = VarKind::table;
                v.parents = ej.at("parents").get<std::vector<std::string>>();
                v.table = ej.at("table").get<std::vector<std::vector<double>>>();
            } else {
                throw OracleError("unknown edge kind '" + kind + "'");
            }
        }
    }
    for (const auto& v : w.variables) {
        if (v.kind == VarKind::root && v.prior.empty()) {
            throw OracleError("variable " + v.name + " has neither prior nor edge");
        }
    }
    const auto& tj = j.at("target");
    w.target_alphabet = tj.at("alphabet").get<std::vector<std::string>>();
    w.target_parents = tj.at("parents").get<std::vector<std::string>>();
    w.target_table = tj.at("table").get<std::vector<std::vector<double>>>();
    if (j.contains("decomposition_tags")) {
        const auto& dj = j.at("decomposition_tags");
        w.tags.present = true;
        w.tags.recent = dj.value("recent", std::vector<std::string>{});
        w.tags.anchors = dj.value("anchors", std::vector<std::string>{});
    }
    w.validate();
    return w;
}

nlohmann::json OracleWorld::to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["enumeration_bound"] = enumeration_bound;
    j["variables"] = nlohmann::json::array();
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& v : variables) {
        nlohmann::json vj;
        vj["name"] = v.name;
        vj["alphabet"] = v.alphabet;
        if (v.kind == VarKind::root) vj["prior"] = v.prior;
        if (v.kind == VarKind::copy) {
            edges.push_back({{"kind", "copy"}, {"from", v.copy_of}, {"to", v.name}});
        }
        if (v.kind == VarKind::table) {
            edges.push_back({{"kind", "table"},
                             {"to", v.name},
                             {"parents", v.parents},
                             {"table", v.table}});
        }
        j["variables"].push_back(std::move(vj));
    }
    j["edges"] = std::move(edges);
    j["target"] = {{"alphabet", target_alphabet},
                   {"parents", target_parents},
                   {"table", target_table}};
    if (tags.present) {
        j["decomposition_tags"] = {{"recent", tags.recent}, {"anchors", tags.anchors}};
    }
    return j;
}

OracleWorld OracleWorld::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open oracle world file: " + path);
    nlohmann::json j;
    try {
        in >> j;
        return from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed oracle world JSON in " + path + ": " + e.what());
    }
}

} // namespace rise
