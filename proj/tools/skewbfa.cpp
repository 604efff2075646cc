// skewbfa: fit, predict, simulate, evaluate and grid-search mixtures of
// skewed matrix variate bilinear factor analyzers.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <skewbfa/commands.hpp>

int main(int argc, char** argv) {
    using namespace skewbfa::cli;
    CLI::App app{"Mixtures of skewed matrix variate bilinear factor analyzers"};
    app.require_subcommand(1);

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "fit one (family, G, q, r) model");
    fit_cmd->add_option("data", fit.data, "MVSTACK data file")->required();
    fit_cmd->add_option("--family", fit.family, "ST, GH, VG, NIG or GAUSS")->required();
    fit_cmd->add_option("--G", fit.G, "number of components")->required();
    fit_cmd->add_option("--q", fit.q, "column factors (reduce the row dimension)")->required();
    fit_cmd->add_option("--r", fit.r, "row factors (reduce the column dimension)")->required();
    fit_cmd->add_option("--labels", fit.labels, "label file, 0 = unknown (semi-supervised fit)");
    fit_cmd->add_option("--truth", fit.truth, "true labels; adds ARI and MCR to the report");
    fit_cmd->add_option("--starts", fit.starts, "random starts")->capture_default_str();
    fit_cmd->add_option("--seed", fit.seed, "random seed")->capture_default_str();
    fit_cmd->add_option("--max-iter", fit.max_iter, "iteration cap per start")->capture_default_str();
    fit_cmd->add_option("--out", fit.out, "model file to write");

    PredictArgs pred;
    auto* pred_cmd = app.add_subcommand("predict", "MAP classification with a fitted model");
    pred_cmd->add_option("model", pred.model, "model file")->required();
    pred_cmd->add_option("data", pred.data, "MVSTACK data file")->required();
    pred_cmd->add_option("--out", pred.out, "write MAP labels here (default: stdout)");
    pred_cmd->add_option("--z-out", pred.z_out, "write posterior probabilities, one row per observation");

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "draw a two-component reference dataset");
    sim_cmd->add_option("--family", sim.family, "ST, GH, VG, NIG or GAUSS")->required();
    sim_cmd->add_option("--d", sim.d, "matrices are d x d")->capture_default_str();
    sim_cmd->add_option("--N", sim.n_obs, "number of observations")->capture_default_str();
    sim_cmd->add_option("--c", sim.c, "location separation")->capture_default_str();
    sim_cmd->add_option("--seed", sim.seed, "random seed")->capture_default_str();
    sim_cmd->add_option("--out", sim.out, "MVSTACK file to write")->required();
    sim_cmd->add_option("--truth-out", sim.truth_out, "true label file (default: <out>.truth)");
    sim_cmd->add_option("--supervision", sim.supervision, "fraction of labels to reveal");
    sim_cmd->add_option("--partial-labels-out", sim.partial_labels_out, "partially revealed label file");

    EvaluateArgs ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "ARI and MCR of predicted against true labels");
    ev_cmd->add_option("pred", ev.pred, "predicted label file")->required();
    ev_cmd->add_option("truth", ev.truth, "true label file")->required();

    GridArgs grid;
    auto* grid_cmd = app.add_subcommand("grid", "BIC model selection over family x G x q x r");
    grid_cmd->add_option("data", grid.data, "MVSTACK data file")->required();
    grid_cmd->add_option("--families", grid.families, "comma-separated family list")->capture_default_str();
    grid_cmd->add_option("--G", grid.g_range, "G range, N or LO:HI")->capture_default_str();
    grid_cmd->add_option("--q", grid.q_range, "q range")->capture_default_str();
    grid_cmd->add_option("--r", grid.r_range, "r range")->capture_default_str();
    grid_cmd->add_option("--labels", grid.labels, "label file, 0 = unknown");
    grid_cmd->add_option("--starts", grid.starts, "random starts per cell")->capture_default_str();
    grid_cmd->add_option("--seed", grid.seed, "base seed")->capture_default_str();
    grid_cmd->add_option("--max-iter", grid.max_iter, "iteration cap per start")->capture_default_str();
    grid_cmd->add_option("--threads", grid.threads, "cells fitted concurrently")->capture_default_str();
    grid_cmd->add_flag("!--no-extend", grid.extend, "do not grow q/r when the winner sits on the boundary");
    grid_cmd->add_option("--out", grid.out, "append-only score table (TSV); completed cells are skipped");
    grid_cmd->add_option("--model-out", grid.model_out, "write the winning model here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    return run_guarded(
        [&] {
            if (*fit_cmd) cmd_fit(fit, std::cout);
            if (*pred_cmd) cmd_predict(pred, std::cout);
            if (*sim_cmd) cmd_simulate(sim, std::cout);
            if (*ev_cmd) cmd_evaluate(ev, std::cout);
            if (*grid_cmd) cmd_grid(grid, std::cout);
        },
        std::cerr);
}
