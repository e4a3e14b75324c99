#include "circuitfusion/subcircuit.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace cfusion {
namespace {

Cone fan_in_cone(const CdfGraph& graph, NodeId root) {
    std::set<NodeId> visited = {root};
    std::set<NodeId> boundary;
    std::deque<NodeId> queue = {root};
    while (!queue.empty()) {
        const NodeId u = queue.front();
        queue.pop_front();
        for (NodeId v : graph.operands(u)) {
            if (is_source(graph.node(v).op)) {
                boundary.insert(v);
                continue;
            }
            if (visited.insert(v).second) queue.push_back(v);
        }
    }
    Cone cone;
    cone.root = root;
    cone.roots = {root};
    visited.erase(root);
    cone.members.assign(visited.begin(), visited.end());
    cone.boundary.assign(boundary.begin(), boundary.end());
    std::vector<NodeId> keep = cone.members;
    keep.push_back(root);
    keep.insert(keep.end(), cone.boundary.begin(), cone.boundary.end());
    cone.graph = graph.induced(keep);
    return cone;
}

std::vector<NodeId> ids_from_json(const nlohmann::json& j) { return j.get<std::vector<NodeId>>(); }

}  // namespace

Cone extract_cone(const CdfGraph& graph, NodeId root) {
    if (!graph.contains(root) || !is_sequential(graph.node(root).op)) throw NotARegister(root);
    return fan_in_cone(graph, root);
}

Cone extract_output_cone(const CdfGraph& graph, NodeId output) {
    if (!graph.contains(output) || graph.node(output).op != Op::Output) {
        throw std::invalid_argument("node " + std::to_string(output) + " is not an OUTPUT");
    }
    Cone c = fan_in_cone(graph, output);
    c.is_output_cone = true;
    return c;
}

std::vector<Cone> split_design(const CdfGraph& graph, const SplitOptions& options) {
    std::vector<NodeId> regs;
    std::vector<NodeId> outputs;
    for (const auto& n : graph.nodes()) {
        if (is_sequential(n.op)) regs.push_back(n.id);
        if (n.op == Op::Output) outputs.push_back(n.id);
    }
    std::sort(regs.begin(), regs.end());
    std::sort(outputs.begin(), outputs.end());

    std::vector<Cone> cones(regs.size());
    const unsigned workers = std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(regs.size())));
    if (workers <= 1) {
        for (std::size_t i = 0; i < regs.size(); ++i) cones[i] = extract_cone(graph, regs[i]);
    } else {
        // Each worker fills a disjoint stride of the output; the graph is read-only.
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < regs.size(); i += workers) cones[i] = extract_cone(graph, regs[i]);
            });
        }
        for (auto& t : pool) t.join();
    }
    if (options.output_cones) {
        for (NodeId o : outputs) cones.push_back(extract_output_cone(graph, o));
    }
    return cones;
}

Cone align_netlist(const Cone& rtl, const CdfGraph& netlist_graph) {
    const std::string& name = rtl.root_node().name;
    std::vector<NodeId> dffs;
    for (const auto& n : netlist_graph.nodes()) {
        if (n.op != Op::Dff) continue;
        if (n.name == name || (n.name.size() > name.size() + 2 && n.name.compare(0, name.size(), name) == 0 &&
                               n.name[name.size()] == '[' && n.name.back() == ']')) {
            dffs.push_back(n.id);
        }
    }
    if (dffs.empty()) throw RegisterNotFound(name);
    std::sort(dffs.begin(), dffs.end());
    if (dffs.size() == 1) return extract_cone(netlist_graph, dffs.front());

    std::set<NodeId> members;
    std::set<NodeId> boundary;
    for (NodeId d : dffs) {
        const Cone c = extract_cone(netlist_graph, d);
        members.insert(c.members.begin(), c.members.end());
        boundary.insert(c.boundary.begin(), c.boundary.end());
    }
    Cone merged;
    merged.root = dffs.front();
    merged.roots = dffs;
    merged.members.assign(members.begin(), members.end());
    merged.boundary.assign(boundary.begin(), boundary.end());
    std::set<NodeId> keep(members.begin(), members.end());
    keep.insert(boundary.begin(), boundary.end());
    keep.insert(dffs.begin(), dffs.end());
    const std::vector<NodeId> keep_list(keep.begin(), keep.end());
    merged.graph = netlist_graph.induced(keep_list);
    return merged;
}

bool cones_isomorphic(const Cone& a, const Cone& b) {
    if (a.graph.size() != b.graph.size() || a.graph.edges().size() != b.graph.edges().size()) return false;
    if (a.roots.size() != b.roots.size()) return false;
    std::unordered_map<NodeId, NodeId> fwd;
    std::unordered_map<NodeId, NodeId> back;
    const std::set<NodeId> a_roots(a.roots.begin(), a.roots.end());
    const std::set<NodeId> b_roots(b.roots.begin(), b.roots.end());
    const std::set<NodeId> a_boundary(a.boundary.begin(), a.boundary.end());
    const std::set<NodeId> b_boundary(b.boundary.begin(), b.boundary.end());

    auto same_label = [&](const Node& x, const Node& y) {
        const bool xr = a_roots.contains(x.id);
        const bool yr = b_roots.contains(y.id);
        const bool xb = a_boundary.contains(x.id) && !xr;
        const bool yb = b_boundary.contains(y.id) && !yr;
        if (xr != yr || xb != yb || x.width != y.width) return false;
        if (xb || xr) return x.name == y.name;
        return x.op == y.op && x.value == y.value && x.lsb == y.lsb;
    };

    std::vector<std::pair<NodeId, NodeId>> stack;
    for (std::size_t i = 0; i < a.roots.size(); ++i) stack.emplace_back(a.roots[i], b.roots[i]);
    while (!stack.empty()) {
        auto [x, y] = stack.back();
        stack.pop_back();
        auto fx = fwd.find(x);
        auto by = back.find(y);
        if (fx != fwd.end() || by != back.end()) {
            if (fx == fwd.end() || by == back.end() || fx->second != y || by->second != x) return false;
            continue;
        }
        const Node& nx = a.graph.node(x);
        const Node& ny = b.graph.node(y);
        if (!same_label(nx, ny)) return false;
        fwd.emplace(x, y);
        back.emplace(y, x);
        const auto ox = a.graph.operands(x);
        const auto oy = b.graph.operands(y);
        if (ox.size() != oy.size()) return false;
        for (std::size_t i = ox.size(); i-- > 0;) stack.emplace_back(ox[i], oy[i]);
    }
    return fwd.size() == a.graph.size();
}

std::string cone_to_verilog(const Cone& cone, std::string_view module_name) {
    const CdfGraph& g = cone.graph;
    const Node& root = cone.root_node();
    std::set<std::string> names;
    for (const auto& n : g.nodes()) names.insert(n.name);
    std::string clk = "clk";
    while (names.contains(clk)) clk += "_";

    const std::set<NodeId> boundary(cone.boundary.begin(), cone.boundary.end());
    auto ref = [&](NodeId id) -> std::string {
        const Node& n = g.node(id);
        if (id == cone.root || boundary.contains(id)) return n.name;
        return "n" + std::to_string(id);
    };
    std::map<NodeId, int> declared;
    for (NodeId m : cone.members) declared[m] = g.node(m).width;
    for (NodeId m : cone.members) {
        const Node& n = g.node(m);
        if (n.op != Op::Slice) continue;
        const NodeId src = g.operands(m).at(0);
        if (declared.contains(src)) declared[src] = std::max(declared[src], n.lsb + n.width);
    }
    auto rng = [](int w) { return w > 1 ? "[" + std::to_string(w - 1) + ":0] " : std::string{}; };

    auto expr = [&](const Node& n) -> std::string {
        const auto ops = g.operands(n.id);
        auto bin = [&](const char* sym) { return ref(ops.at(0)) + " " + sym + " " + ref(ops.at(1)); };
        switch (n.op) {
            case Op::Const: return std::to_string(n.width) + "'d" + std::to_string(n.value);
            case Op::Add: return bin("+");
            case Op::Sub: return bin("-");
            case Op::Mul: return bin("*");
            case Op::And: return bin("&");
            case Op::Or: return bin("|");
            case Op::Xor: return bin("^");
            case Op::Xnor: return bin("~^");
            case Op::Eq: return bin("==");
            case Op::Neq: return bin("!=");
            case Op::Lt: return bin("<");
            case Op::Gt: return bin(">");
            case Op::Le: return bin("<=");
            case Op::Ge: return bin(">=");
            case Op::Shl: return bin("<<");
            case Op::Shr: return bin(">>");
            case Op::LogicAnd: return bin("&&");
            case Op::LogicOr: return bin("||");
            case Op::Not: return "~" + ref(ops.at(0));
            case Op::Neg: return "-" + ref(ops.at(0));
            case Op::LogicNot: return "!" + ref(ops.at(0));
            case Op::ReduceAnd: return "&" + ref(ops.at(0));
            case Op::ReduceOr: return "|" + ref(ops.at(0));
            case Op::ReduceXor: return "^" + ref(ops.at(0));
            case Op::Mux: return ref(ops.at(0)) + " ? " + ref(ops.at(1)) + " : " + ref(ops.at(2));
            case Op::Slice:
                return ref(ops.at(0)) + "[" + std::to_string(n.lsb + n.width - 1) +
                       (n.width > 1 ? ":" + std::to_string(n.lsb) : std::string{}) + "]";
            case Op::Concat: {
                std::string out = "{";
                for (std::size_t i = 0; i < ops.size(); ++i) out += (i ? ", " : "") + ref(ops[i]);
                return out + "}";
            }
            default:
                throw std::invalid_argument("cannot emit Verilog for op " + std::string(op_name(n.op)));
        }
    };

    std::ostringstream os;
    os << "module " << module_name << " (\n  input " << clk;
    for (NodeId b : cone.boundary) {
        if (b == cone.root) continue;
        os << ",\n  input " << rng(g.node(b).width) << g.node(b).name;
    }
    os << ",\n  output reg " << rng(root.width) << root.name << "\n);\n";
    // Members in a dependency-respecting order so every wire is declared before use.
    for (NodeId id : combinational_order(g)) {
        if (!declared.contains(id)) continue;
        os << "  wire " << rng(declared[id]) << "n" << id << " = " << expr(g.node(id)) << ";\n";
    }
    const auto drv = g.operands(cone.root);
    if (drv.empty()) throw std::invalid_argument("register " + root.name + " has no driver");
    os << "  always @(posedge " << clk << ") " << root.name << " <= " << ref(drv.front()) << ";\n";
    os << "endmodule\n";
    return os.str();
}

nlohmann::json Cone::to_json() const {
    return {{"root", root},       {"roots", roots}, {"members", members}, {"boundary", boundary},
            {"graph", graph.to_json()}, {"is_output_cone", is_output_cone}};
}

Cone Cone::from_json(const nlohmann::json& j) {
    Cone c;
    c.root = j.at("root").get<NodeId>();
    c.roots = j.contains("roots") ? ids_from_json(j.at("roots")) : std::vector<NodeId>{c.root};
    c.members = ids_from_json(j.at("members"));
    c.boundary = ids_from_json(j.at("boundary"));
    c.graph = CdfGraph::from_json(j.at("graph"));
    c.is_output_cone = j.value("is_output_cone", false);
    return c;
}

namespace {
constexpr std::string_view kMetricNames[] = {"slack", "power", "area", "wns", "tns", "total_power", "total_area"};

std::optional<double> QualityMetrics::* metric_field(std::string_view name) {
    if (name == "slack") return &QualityMetrics::slack;
    if (name == "power") return &QualityMetrics::power;
    if (name == "area") return &QualityMetrics::area;
    if (name == "wns") return &QualityMetrics::wns;
    if (name == "tns") return &QualityMetrics::tns;
    if (name == "total_power") return &QualityMetrics::total_power;
    if (name == "total_area") return &QualityMetrics::total_area;
    throw std::invalid_argument("unknown metric: " + std::string(name));
}
}  // namespace

std::optional<double> QualityMetrics::get(std::string_view metric) const { return this->*metric_field(metric); }
void QualityMetrics::set(std::string_view metric, double value) { this->*metric_field(metric) = value; }

nlohmann::json QualityMetrics::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (auto name : kMetricNames) {
        if (auto v = get(name)) j[std::string(name)] = *v;
    }
    return j;
}

QualityMetrics QualityMetrics::from_json(const nlohmann::json& j) {
    QualityMetrics m;
    for (auto name : kMetricNames) {
        if (j.contains(name) && !j.at(std::string(name)).is_null()) m.set(name, j.at(std::string(name)).get<double>());
    }
    return m;
}

nlohmann::json SubCircuitBundle::to_json() const {
    nlohmann::json j;
    j["id"] = id;
    j["design"] = design;
    j["register"] = reg;
    j["code"] = code;
    j["rtl_graph"] = rtl_graph.to_json();
    j["netlist_graph"] = netlist_graph ? netlist_graph->to_json() : nlohmann::json(nullptr);
    j["summary"] = summary;
    j["labels"] = labels ? labels->to_json() : nlohmann::json(nullptr);
    j["is_augmented"] = is_augmented;
    j["equivalence_class"] = equivalence_class;
    return j;
}

SubCircuitBundle SubCircuitBundle::from_json(const nlohmann::json& j) {
    SubCircuitBundle b;
    b.id = j.at("id").get<std::string>();
    b.design = j.at("design").get<std::string>();
    b.reg = j.at("register").get<std::string>();
    b.code = j.at("code").get<std::string>();
    b.rtl_graph = Cone::from_json(j.at("rtl_graph"));
    if (j.contains("netlist_graph") && !j.at("netlist_graph").is_null()) {
        b.netlist_graph = Cone::from_json(j.at("netlist_graph"));
    }
    b.summary = j.value("summary", std::string{});
    if (j.contains("labels") && !j.at("labels").is_null()) b.labels = QualityMetrics::from_json(j.at("labels"));
    b.is_augmented = j.value("is_augmented", false);
    b.equivalence_class = j.value("equivalence_class", b.id);
    return b;
}

std::string stable_hash(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string bundle_id(std::string_view design, std::string_view reg, int variant) {
    std::string key = std::string(design) + '\x1f' + std::string(reg);
    if (variant > 0) key += '\x1f' + std::to_string(variant);
    return stable_hash(key);
}

std::vector<SubCircuitBundle> read_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("corpus", "cannot open " + path);
    std::vector<SubCircuitBundle> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(SubCircuitBundle::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("corpus", path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

namespace {
void write_lines(const std::string& path, const std::vector<SubCircuitBundle>& bundles, std::ios::openmode mode) {
    std::ofstream out(path, mode);
    if (!out) throw IoError("corpus", "cannot write " + path);
    for (const auto& b : bundles) out << b.to_json().dump() << '\n';
    if (!out) throw IoError("corpus", "write failed for " + path);
}
}  // namespace

void write_corpus(const std::string& path, const std::vector<SubCircuitBundle>& bundles) {
    write_lines(path, bundles, std::ios::out | std::ios::trunc);
}

void append_corpus(const std::string& path, const std::vector<SubCircuitBundle>& bundles) {
    write_lines(path, bundles, std::ios::out | std::ios::app);
}

}  // namespace cfusion
