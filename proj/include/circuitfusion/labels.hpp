#pragma once

#include <map>
#include <string>
#include <vector>

#include "circuitfusion/graph.hpp"
#include "circuitfusion/subcircuit.hpp"

namespace cfusion {

struct DesignLabels {
    QualityMetrics design;                          // wns, tns, total_power, total_area
    std::map<std::string, QualityMetrics> registers;  // slack, power, area
};

/// design name -> labels, in the on-disk layout
/// {design: {wns, tns, total_power, total_area, registers: {name: {slack, power, area}}}}.
using LabelSet = std::map<std::string, DesignLabels>;

LabelSet read_labels(const std::string& path);
void write_labels(const std::string& path, const LabelSet& labels);
nlohmann::json labels_to_json(const LabelSet& labels);
LabelSet labels_from_json(const nlohmann::json& j);

/// Attaches register metrics plus the design-level metrics to every
/// non-augmented bundle whose design and register appear in `labels`.
/// Returns the number of bundles labelled.
int apply_labels(std::vector<SubCircuitBundle>& bundles, const LabelSet& labels);

/// Unit-delay/area library used to label toy designs from their tech-mapped
/// netlist. Not a timing engine: one delay per gate type, no wire load.
struct GateLibrary {
    /// Each design is constrained at this fraction of its own critical path,
    /// so every design has a violating register.
    double clock_ratio = 0.85;
    double setup = 0.03;         // ns
    double power_per_area = 0.0021;  // mW per um^2 at the nominal activity
    double dff_area = 4.5;
    double dff_delay = 0.06;     // clock-to-q
    [[nodiscard]] double area(Op op) const;
    [[nodiscard]] double delay(Op op) const;
};

/// Labels every register of an RTL design by tech-mapping it: area and power
/// over the register's gate-level cone, slack from the longest gate path into
/// its flip-flops. Design totals count shared logic once.
DesignLabels synthesize_labels(const CdfGraph& rtl, const GateLibrary& lib = {});

}  // namespace cfusion
