#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wavefront/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"wavefront-lab: stochastic travelling-front experiments"};
    app.require_subcommand(1);

    wavefront::cli::RunRequest req;
    std::uint64_t seed = 0;
    for (const auto& name : wavefront::cli::experiments()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->add_option("--config", req.config_path, "JSON config (or a manifest.json to re-run)")->required();
        sub->add_option("--out", req.out_dir, "output directory")->required();
        sub->add_option("--threads", req.threads, "worker threads (default: WAVEFRONT_LAB_THREADS or all cores)");
        sub->add_option("--seed", seed, "master seed, overrides the config");
        sub->callback([&req, &seed, name, sub] {
            req.experiment = name;
            if (sub->count("--seed")) req.seed = seed;
        });
    }

    std::string table, kind, out;
    double p = 0.5;
    auto* plot = app.add_subcommand("plot", "render a CSV table as SVG");
    plot->add_option("--table", table, "input CSV")->required();
    plot->add_option("--kind", kind, "front_trajectory | loglog_scaling | profile_snapshot")->required();
    plot->add_option("--out", out, "output SVG path")->required();
    plot->add_option("--p", p, "drift exponent for the reference slope");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : wavefront::cli::kValidation;
    }
    if (plot->parsed()) return wavefront::cli::plot(table, kind, out, p);
    return wavefront::cli::run(req);
}
