#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"Mean-field game solver for double-integrator dynamics"};
    app.require_subcommand(1);
    amfg::cli::CliOptions opts;
    double sigma = 0.0;

    const std::pair<const char*, const char*> subcommands[] = {
        {"solve-hjb", "Backward HJB solve with value diagnostics"},
        {"solve-mfg", "Coupled fixed point with KKT and transport diagnostics"},
        {"pmp-check", "Shooting along sampled start states against the grid value"},
        {"particles-check", "Particle pushforward against the grid density"},
        {"viscosity-sweep", "Coupled solves for a decreasing viscosity sequence"},
        {"uniqueness-probe", "Fixed point from two starting paths"}};
    std::vector<CLI::App*> subs;
    for (auto [name, help] : subcommands)
    {
        auto* s = app.add_subcommand(name, help);
        s->add_option("--config", opts.config, "JSON run configuration")->required();
        s->add_option("--out", opts.out, "Output directory");
        s->add_option("--resolution-scale", opts.resolution_scale, "Multiplies nx, nv and nt");
        s->add_option("--sigma", sigma, "Viscosity override");
        s->add_flag("--quiet", opts.quiet, "Only report errors");
        subs.push_back(s);
    }

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : amfg::cli::exit_config;
    }

    for (auto* s : subs)
    {
        if (!s->parsed())
            continue;
        if (s->count("--sigma"))
            opts.sigma = sigma;
        return amfg::cli::run_command(s->get_name(), opts, std::cout, std::cerr);
    }
    return amfg::cli::exit_config;
}
