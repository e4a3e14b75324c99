#pragma once

#include <string>

#include "circuitfusion/graph.hpp"

namespace cfusion {

/// Bit-blasts an RTL graph into a gate-level netlist graph (INV, AND2, OR2,
/// XOR2, XNOR2, MUX2, FA_S, FA_C, DFF, ...). Multi-bit registers become DFFs
/// named "name[i]"; 1-bit registers keep their name. Inputs and outputs are
/// blasted the same way.
///
/// Stand-in for logic synthesis when building toy corpora; it performs no
/// optimization beyond constant sharing.
CdfGraph techmap(const CdfGraph& rtl);

/// "name" for 1-bit signals, "name[i]" otherwise.
std::string bit_name(const std::string& name, int width, int bit);

}  // namespace cfusion
