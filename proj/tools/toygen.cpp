// Writes synthetic quality labels for a directory of toy designs.
#include <iostream>

#include <CLI11.hpp>

#include "circuitfusion/labels.hpp"
#include "circuitfusion/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"toygen: label toy designs from their tech-mapped netlists"};
    std::string designs = "data/toy";
    std::string out = "data/toy_labels.json";
    double ratio = cfusion::GateLibrary{}.clock_ratio;
    app.add_option("--designs", designs, "directory of .v files");
    app.add_option("--out,-o", out, "labels JSON");
    app.add_option("--clock-ratio", ratio, "clock period as a fraction of each design's critical path");
    CLI11_PARSE(app, argc, argv);

    try {
        cfusion::PipelineConfig c;
        c.designs = designs;
        cfusion::GateLibrary lib;
        lib.clock_ratio = ratio;
        cfusion::LabelSet labels;
        for (const auto& d : cfusion::load_designs(c)) labels[d.name] = cfusion::synthesize_labels(d.graph, lib);
        cfusion::write_labels(out, labels);
        std::cout << "toygen: " << labels.size() << " designs -> " << out << '\n';
    } catch (const cfusion::Error& e) {
        std::cerr << "error [" << e.stage() << "]: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
