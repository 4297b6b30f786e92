// drf <synth|train|tune|predict|eval> <config> [section.key=value ...]

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "drf/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Deep random-feature spatiotemporal interpolation"};
    app.require_subcommand(1, 1);

    std::string config;
    std::vector<std::string> overrides;
    for (const char* name : {"synth", "train", "tune", "predict", "eval"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("config", config, "run configuration file")->required();
        sub->add_option("overrides", overrides, "section.key=value overrides applied after the file");
    }
    app.get_subcommand("synth")->description("simulate a synthetic field and satellite-track observations");
    app.get_subcommand("train")->description("train the configured ensemble, dropout or VI model");
    app.get_subcommand("tune")->description("Bayesian optimization of hyperparameters, then retrain");
    app.get_subcommand("predict")->description("predict mean and variances on the configured grid");
    app.get_subcommand("eval")->description("score predictions and held-out observations");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return drf::kExitConfig;
    }
    const std::string sub = app.get_subcommands().front()->get_name();
    return drf::run_command(sub, config, overrides, std::cout, std::cerr);
}
