#include "semtsdf/runner.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"probabilistic semantic distance-field mapping toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string protocol;
    std::int64_t seed = -1;
    int rounds = -1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration file");
        sub->add_option("--seed", seed, "override the run seed")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", out_dir, "override the output directory");
    };

    add_common(app.add_subcommand("gen-env", "generate a polygonal environment"));
    add_common(app.add_subcommand("map-single", "single-robot mapping run"));
    CLI::App* multi = app.add_subcommand("map-multi", "multi-robot mapping with map consensus");
    add_common(multi);
    multi->add_option("--protocol", protocol, "consensus protocol: echo | echoless");
    multi->add_option("--rounds", rounds, "sensing rounds")->check(CLI::PositiveNumber);
    add_common(app.add_subcommand("eval", "map quality metrics against ground truth"));
    add_common(app.add_subcommand("sweep", "parameter sweep over full runs"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        semtsdf::RunConfig cfg = config_path.empty() ? semtsdf::default_run_config()
                                                     : semtsdf::load_run_config(config_path);
        cfg.mode = app.get_subcommands().front()->get_name();
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!protocol.empty()) cfg.protocol = protocol;
        if (rounds > 0) cfg.rounds = rounds;
        semtsdf::run(cfg, std::cout);
    } catch (const semtsdf::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
