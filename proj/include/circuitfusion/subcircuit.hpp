#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "circuitfusion/errors.hpp"
#include "circuitfusion/graph.hpp"

namespace cfusion {

/// Fan-in cone of a register: the combinational logic computing its next state.
struct Cone {
    NodeId root = 0;
    std::vector<NodeId> roots;     // one entry, or every per-bit DFF of a merged netlist cone
    std::vector<NodeId> members;   // combinational nodes, ascending id
    std::vector<NodeId> boundary;  // REG/DFF/INPUT nodes feeding the cone, ascending id
    CdfGraph graph;                // induced over roots, members and boundary
    bool is_output_cone = false;

    [[nodiscard]] const Node& root_node() const { return graph.node(root); }
    [[nodiscard]] nlohmann::json to_json() const;
    static Cone from_json(const nlohmann::json& j);
};

Cone extract_cone(const CdfGraph& graph, NodeId root);

/// Cone of an OUTPUT port; traversal rules are the same as for registers.
Cone extract_output_cone(const CdfGraph& graph, NodeId output);

struct SplitOptions {
    bool output_cones = false;
    unsigned workers = 1;
};

/// One cone per REG node (ascending root id), then optional OUTPUT cones.
std::vector<Cone> split_design(const CdfGraph& graph, const SplitOptions& options = {});

/// Cone of the gate-level register aligned with `rtl`'s root. Bit-blasted
/// registers ("name[i]") are merged into one multi-root cone.
Cone align_netlist(const Cone& rtl, const CdfGraph& netlist_graph);

/// Exact isomorphism of ordered, rooted cones. Boundary nodes match by
/// (name, width) regardless of whether they are inputs or registers.
bool cones_isomorphic(const Cone& a, const Cone& b);

/// Standalone Verilog module computing the cone (RTL vocabulary only).
std::string cone_to_verilog(const Cone& cone, std::string_view module_name);

struct QualityMetrics {
    std::optional<double> slack;  // ns, per sub-circuit
    std::optional<double> power;  // mW
    std::optional<double> area;   // um^2
    std::optional<double> wns;    // ns, per circuit
    std::optional<double> tns;
    std::optional<double> total_power;
    std::optional<double> total_area;

    /// Looks a metric up by name ("slack", "power", "area", "wns", ...).
    [[nodiscard]] std::optional<double> get(std::string_view metric) const;
    void set(std::string_view metric, double value);
    [[nodiscard]] nlohmann::json to_json() const;
    static QualityMetrics from_json(const nlohmann::json& j);
    bool operator==(const QualityMetrics&) const = default;
};

struct SubCircuitBundle {
    std::string id;
    std::string design;
    std::string reg;  // serialized as "register"
    std::string code;
    Cone rtl_graph;
    std::optional<Cone> netlist_graph;
    std::string summary;
    std::optional<QualityMetrics> labels;
    bool is_augmented = false;
    std::string equivalence_class;

    [[nodiscard]] nlohmann::json to_json() const;
    static SubCircuitBundle from_json(const nlohmann::json& j);
};

/// FNV-1a 64-bit, rendered as 16 hex digits.
std::string stable_hash(std::string_view text);
std::string bundle_id(std::string_view design, std::string_view reg, int variant = 0);

std::vector<SubCircuitBundle> read_corpus(const std::string& path);
void write_corpus(const std::string& path, const std::vector<SubCircuitBundle>& bundles);
void append_corpus(const std::string& path, const std::vector<SubCircuitBundle>& bundles);

}  // namespace cfusion
