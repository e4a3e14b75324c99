#include "circuitfusion/labels.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include "circuitfusion/techmap.hpp"

namespace cfusion {

LabelSet labels_from_json(const nlohmann::json& j) {
    LabelSet out;
    for (const auto& [design, body] : j.items()) {
        DesignLabels d;
        d.design = QualityMetrics::from_json(body);
        if (body.contains("registers")) {
            for (const auto& [reg, m] : body.at("registers").items()) d.registers[reg] = QualityMetrics::from_json(m);
        }
        out[design] = std::move(d);
    }
    return out;
}

nlohmann::json labels_to_json(const LabelSet& labels) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [design, d] : labels) {
        nlohmann::json body = d.design.to_json();
        body["registers"] = nlohmann::json::object();
        for (const auto& [reg, m] : d.registers) body["registers"][reg] = m.to_json();
        j[design] = std::move(body);
    }
    return j;
}

LabelSet read_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("labels", "cannot read " + path);
    try {
        return labels_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("labels", path + ": " + e.what());
    }
}

void write_labels(const std::string& path, const LabelSet& labels) {
    std::ofstream out(path);
    if (!out) throw IoError("labels", "cannot write " + path);
    out << labels_to_json(labels).dump(2) << '\n';
}

int apply_labels(std::vector<SubCircuitBundle>& bundles, const LabelSet& labels) {
    int n = 0;
    for (auto& b : bundles) {
        if (b.is_augmented) continue;
        const auto d = labels.find(b.design);
        if (d == labels.end()) continue;
        const auto r = d->second.registers.find(b.reg);
        if (r == d->second.registers.end()) continue;
        QualityMetrics m = r->second;
        for (const char* name : {"wns", "tns", "total_power", "total_area"})
            if (auto v = d->second.design.get(name)) m.set(name, *v);
        b.labels = m;
        ++n;
    }
    return n;
}

double GateLibrary::area(Op op) const {
    switch (op) {
        case Op::Inv: return 0.8;
        case Op::Buf: return 1.0;
        case Op::And2: case Op::Or2: return 1.3;
        case Op::Nand2: case Op::Nor2: return 1.0;
        case Op::Xor2: case Op::Xnor2: return 2.1;
        case Op::Mux2: return 2.3;
        case Op::Aoi: case Op::Oai: return 1.6;
        case Op::FaSum: return 2.9;
        case Op::FaCarry: return 2.4;
        case Op::Dff: return dff_area;
        default: return 0.0;
    }
}

double GateLibrary::delay(Op op) const {
    switch (op) {
        case Op::Inv: return 0.011;
        case Op::Buf: return 0.017;
        case Op::And2: case Op::Or2: return 0.023;
        case Op::Nand2: case Op::Nor2: return 0.014;
        case Op::Xor2: case Op::Xnor2: return 0.031;
        case Op::Mux2: return 0.029;
        case Op::Aoi: case Op::Oai: return 0.019;
        case Op::FaSum: return 0.043;
        case Op::FaCarry: return 0.037;
        default: return 0.0;
    }
}

namespace {

/// Kahn order over combinational edges; flip-flops act as sources.
std::vector<NodeId> timing_order(const CdfGraph& g) {
    std::unordered_map<NodeId, int> pending;
    for (const auto& n : g.nodes()) pending[n.id] = 0;
    for (const auto& e : g.edges())
        if (g.node(e.dst).op != Op::Dff) ++pending[e.dst];
    std::vector<NodeId> order;
    for (const auto& n : g.nodes())
        if (pending[n.id] == 0) order.push_back(n.id);
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (NodeId f : g.fanout(order[i])) {
            if (g.node(f).op == Op::Dff) continue;
            if (--pending[f] == 0) order.push_back(f);
        }
    }
    if (order.size() != g.size()) throw CombinationalLoop({});
    return order;
}

}  // namespace

DesignLabels synthesize_labels(const CdfGraph& rtl, const GateLibrary& lib) {
    const CdfGraph net = techmap(rtl);
    // arrival time at every node, sources launch at clock-to-q (inputs at 0)
    std::unordered_map<NodeId, double> arrival;
    const std::vector<NodeId> order = timing_order(net);
    for (NodeId id : order) {
        const Node& n = net.node(id);
        if (n.op == Op::Dff) {
            arrival[id] = lib.dff_delay;
            continue;
        }
        double in = 0.0;
        for (NodeId s : net.operands(id)) in = std::max(in, arrival.at(s));
        arrival[id] = in + lib.delay(n.op);
    }
    DesignLabels out;
    double wns = 0.0, tns = 0.0, total_area = 0.0, total_power = 0.0;
    for (const auto& n : net.nodes()) total_area += lib.area(n.op);
    total_power = total_area * lib.power_per_area;
    struct RegPath {
        std::string name;
        double area = 0.0, arrival = 0.0;
    };
    std::vector<RegPath> regs;
    double critical = 0.0;
    for (const auto& n : rtl.nodes()) {
        if (n.op != Op::Reg) continue;
        const Cone rtl_cone = extract_cone(rtl, n.id);
        const Cone cone = align_netlist(rtl_cone, net);
        double area = 0.0;
        for (NodeId m : cone.members) area += lib.area(net.node(m).op);
        area += lib.dff_area * static_cast<double>(cone.roots.size());
        double worst = 0.0;
        for (NodeId d : cone.roots)
            for (NodeId s : net.operands(d)) worst = std::max(worst, arrival.at(s));
        regs.push_back({n.name, area, worst});
        critical = std::max(critical, worst);
    }
    const double period = lib.clock_ratio * critical + lib.setup;
    for (const auto& r : regs) {
        QualityMetrics m;
        const double slack = period - lib.setup - r.arrival;
        m.slack = slack;
        m.area = r.area;
        m.power = r.area * lib.power_per_area;
        out.registers[r.name] = m;
        wns = std::min(wns, slack);
        if (slack < 0) tns += slack;
    }
    out.design.wns = wns;
    out.design.tns = tns;
    out.design.total_area = total_area;
    out.design.total_power = total_power;
    return out;
}

}  // namespace cfusion
