#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace rise {

// A finite tabular generative process over named unit variables and a
// target Y. Posteriors and conditional mutual information are computed by
// exhaustive enumeration of the joint, so everything downstream can be
// checked against exact values.
//
// Each variable is defined by exactly one of:
//   - a prior table (root),
//   - a copy edge (exact duplicate of its parent),
//   - a conditional table over a parent list.
// Conditional rows are indexed mixed-radix over the parent list with the
// last parent varying fastest.
struct OracleWorld {
    enum class VarKind { root, copy, table };

    struct Variable {
        std::string name;
        std::vector<std::string> alphabet;
        VarKind kind = VarKind::root;
        std::vector<double> prior;               // root
        std::string copy_of;                     // copy
        std::vector<std::string> parents;        // table
        std::vector<std::vector<double>> table;  // table: rows over parent assignments
    };

    struct DecompositionTags {
        bool present = false;
        std::vector<std::string> recent;  // units feeding the fast component
        std::vector<std::string> anchors; // units feeding the long-range component
    };

    std::string name;
    std::vector<Variable> variables;
    std::vector<std::string> target_alphabet;
    std::vector<std::string> target_parents;
    std::vector<std::vector<double>> target_table; // rows over target-parent assignments
    DecompositionTags tags;
    std::size_t enumeration_bound = 1000000;

    int var_index(std::string_view name) const; // -1 when absent
    int require_var(std::string_view name) const;
    int symbol_index(int var, std::string_view symbol) const; // -1 when absent
    int target_symbol_index(std::string_view symbol) const;

    std::size_t joint_states() const;

    // Structural checks: single definition source per variable, DAG edges,
    // row normalization within 1e-12, alphabets non-empty, joint state count
    // within the enumeration bound. Fills topo_order.
    void validate();

    const std::vector<int>& topo_order() const { return topo_order_; }

    static OracleWorld from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    static OracleWorld load_file(const std::string& path);

private:
    std::vector<int> topo_order_;
};

} // namespace rise
