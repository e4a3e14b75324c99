#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "circuitfusion/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"circuitfusion: multimodal RTL sub-circuit encoder pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::string ablate;
    app.add_option("--config", config_path, "pipeline config JSON");
    app.add_option("--seed", seed, "override the config seed");
    app.add_option("--workers", workers, "worker threads");
    app.add_option("--ablate", ablate, "none, no_graph, no_code, no_summary, no_retrieval or no_<task>");

    const std::map<std::string, std::string> help{
        {"parse", "elaborate one Verilog file into a dataflow graph (JSON)"},
        {"split", "split every design into register cones"},
        {"augment", "add equivalence-checked rewritten variants"},
        {"summarize", "attach natural-language summaries"},
        {"build-corpus", "split, augment, summarize and write corpus + vocab"},
        {"pretrain", "pre-train the multimodal encoder"},
        {"index", "embed training sub-circuits into the vector store"},
        {"retrieve", "nearest stored sub-circuits for one bundle"},
        {"predict", "predict quality metrics for held-out designs"},
        {"finetune", "fit per-task regression heads"},
        {"evaluate", "write R / MAPE per task to the report CSV"},
        {"ablate", "rerun evaluation under each ablation"},
    };
    cfusion::CommandArgs args;
    std::map<std::string, CLI::App*> subs;
    for (const auto& name : cfusion::kCommands) {
        auto* sub = app.add_subcommand(name, help.at(name));
        sub->add_option("--out,-o", args.out, "output path");
        subs[name] = sub;
    }
    subs["parse"]->add_option("input", args.input, "Verilog file")->required();
    subs["retrieve"]->add_option("--id", args.id, "bundle id to query with")->required();
    subs["retrieve"]->add_option("--k", args.k, "number of results");
    subs["predict"]->add_flag("--zero-shot", args.zero_shot, "use the top-k retrieved metric as the prediction");
    subs["index"]->add_flag("--include-eval", args.include_eval, "also index the held-out designs");

    CLI11_PARSE(app, argc, argv);

    cfusion::PipelineConfig config;
    try {
        if (!config_path.empty()) config = cfusion::PipelineConfig::load(config_path);
        if (seed) config.seed = *seed;
        if (workers) config.workers = *workers;
        if (!ablate.empty()) config.ablation = cfusion::Ablation::parse(ablate);
    } catch (const cfusion::Error& e) {
        std::cerr << "error [" << e.stage() << "]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error [config]: " << e.what() << '\n';
        return 1;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    return cfusion::run(command, config, args, std::cout, std::cerr);
}
