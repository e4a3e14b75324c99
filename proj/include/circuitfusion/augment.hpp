#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "circuitfusion/subcircuit.hpp"

namespace cfusion {

enum class RewriteRule {
    DoubleNegation,
    DeMorganAnd,
    DeMorganOr,
    CommuteOperands,
    MuxToBoolean,
    XorExpand,
    AndAbsorbInverse,
};

inline constexpr RewriteRule kAllRules[] = {
    RewriteRule::DoubleNegation, RewriteRule::DeMorganAnd,  RewriteRule::DeMorganOr,      RewriteRule::CommuteOperands,
    RewriteRule::MuxToBoolean,   RewriteRule::XorExpand,    RewriteRule::AndAbsorbInverse,
};

std::string_view rule_name(RewriteRule rule);

bool rule_applies(const Cone& cone, NodeId node, RewriteRule rule);

/// Applies one local rewrite at `node`. Precondition: rule_applies(...).
/// Dead members are dropped afterwards; the boundary and root are untouched.
Cone apply_rule(const Cone& cone, NodeId node, RewriteRule rule);

struct RewriteVariant {
    Cone cone;
    bool unchanged = false;  // no rule applied anywhere
    std::vector<std::string> applied;
};

/// `count` functionally equivalent variants, each built from 1..max_steps
/// random local rewrites. Every variant is checked against the input before
/// it is returned. Deterministic for a given seed.
std::vector<RewriteVariant> apply_rewrites(const Cone& cone, int count, std::uint64_t seed, int max_steps = 3);

inline constexpr int kExhaustiveBudgetBits = 20;
inline constexpr int kSpotCheckSamples = 4096;

using BoundaryAssignment = std::map<NodeId, std::uint64_t>;

int boundary_bits(const Cone& cone);

/// Value entering the root under unsigned, width-truncating semantics.
/// Throws BudgetExceeded above 20 boundary bits and MissingAssignment when a
/// boundary node has no value.
std::uint64_t simulate_cone(const Cone& cone, const BoundaryAssignment& assignment);

/// Same evaluation without the exhaustive-oracle budget.
std::uint64_t evaluate_cone(const Cone& cone, const BoundaryAssignment& assignment);

/// Evaluates one operator given its operand values and widths.
std::uint64_t evaluate_op(const Node& node, std::span<const std::uint64_t> values, std::span<const int> widths);

std::uint64_t width_mask(int width);

/// Exhaustive equivalence over every boundary assignment; boundaries are
/// matched by (name, width). Throws BoundaryMismatch / BudgetExceeded.
bool check_equivalence(const Cone& a, const Cone& b);

/// Random-assignment comparison for cones above the exhaustive budget.
bool spot_check_equivalence(const Cone& a, const Cone& b, int samples, std::uint64_t seed);

/// Exhaustive when within budget, otherwise a 4096-sample spot check.
bool verify_equivalent(const Cone& a, const Cone& b);

}  // namespace cfusion
