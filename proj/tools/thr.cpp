// Command-line front end: simulation grids, theorem checks, dataset runs,
// aggregation-theory queries and MCB ranking, all emitting CSV.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "thr/config.hpp"
#include "thr/runner.hpp"

namespace {

nlohmann::json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw thr::ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw thr::ConfigError("config parse error in '" + path + "': " + e.what());
    }
    return j;
}

std::vector<int> parse_ks_flag(const std::string& s) {
    std::vector<int> ks;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) ks.push_back(std::stoi(tok));
    return ks;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"temporal hierarchy reconciliation toolkit"};
    app.require_subcommand(1);

    // --- simulate ---------------------------------------------------------
    std::string sim_config, sim_out, sim_per_rep, sim_buckets, sim_wide, sim_percentiles;
    std::optional<std::uint64_t> sim_seed;
    int sim_jobs = 1;
    bool sim_allow_pinv = false;
    auto* sim = app.add_subcommand("simulate", "run a simulation scenario grid");
    sim->add_option("--config", sim_config, "scenario config JSON")->required();
    sim->add_option("--out", sim_out, "summary CSV path")->required();
    sim->add_option("--per-rep", sim_per_rep, "per-replication CSV path");
    sim->add_option("--buckets", sim_buckets, "phi-bucket summary CSV path");
    sim->add_option("--wide", sim_wide, "wide-pivot summary CSV path");
    sim->add_option("--percentiles", sim_percentiles,
                    "percentile summary CSV path (per level, method, stat)");
    sim->add_option("--seed", sim_seed, "override the config seed");
    sim->add_option("--jobs", sim_jobs, "worker threads")->default_val(1);
    sim->add_flag("--allow-pinv", sim_allow_pinv,
                  "fall back to a pseudo-inverse for singular covariances");

    // --- verify-theorem ---------------------------------------------------
    std::string vt_mode = "theoretical", vt_ks = "4,1", vt_out;
    double vt_phi = 0.8, vt_sigma2 = 1.0;
    int vt_reps = 100, vt_ntop = 100, vt_jobs = 1;
    std::uint64_t vt_seed = 1;
    auto* vt = app.add_subcommand("verify-theorem",
                                  "emit the SG transformation matrix (theoretical or sampled)");
    vt->add_option("--mode", vt_mode, "theoretical | sample")
        ->check(CLI::IsMember({"theoretical", "sample"}));
    vt->add_option("--phi", vt_phi, "AR(1) coefficient")->required();
    vt->add_option("--sigma2", vt_sigma2, "innovation variance")->default_val(1.0);
    vt->add_option("--ks", vt_ks, "hierarchy factors, e.g. 4,1")->default_val("4,1");
    vt->add_option("--n-reps", vt_reps, "replications (sample mode)")->default_val(100);
    vt->add_option("--n-top", vt_ntop, "top-level length (sample mode)")->default_val(100);
    vt->add_option("--seed", vt_seed, "RNG seed (sample mode)")->default_val(1);
    vt->add_option("--jobs", vt_jobs, "worker threads")->default_val(1);
    vt->add_option("--out", vt_out, "output CSV path")->required();

    // --- dataset ----------------------------------------------------------
    std::string ds_config, ds_out;
    bool ds_allow_pinv = false;
    auto* ds = app.add_subcommand("dataset", "evaluate methods on a CSV series");
    ds->add_option("--config", ds_config, "dataset config JSON")->required();
    ds->add_option("--out", ds_out, "output CSV path")->required();
    ds->add_flag("--allow-pinv", ds_allow_pinv,
                 "fall back to a pseudo-inverse for singular covariances");

    // --- aggtheory --------------------------------------------------------
    int at_p = 1, at_d = 0, at_q = 0, at_k = 2;
    std::optional<double> at_phi, at_sigma2;
    std::string at_out;
    auto* at = app.add_subcommand("aggtheory", "aggregated model order and exact AR(1) parameters");
    at->add_option("--p", at_p)->required();
    at->add_option("--d", at_d)->required();
    at->add_option("--q", at_q)->required();
    at->add_option("--k", at_k, "aggregation factor")->required();
    at->add_option("--phi", at_phi, "AR(1) coefficient for exact parameters");
    at->add_option("--sigma2", at_sigma2, "innovation variance for exact parameters");
    at->add_option("--out", at_out, "write the W1 matrix as CSV");

    // --- mcb --------------------------------------------------------------
    std::string mcb_in, mcb_out;
    double mcb_alpha = 0.05;
    auto* mc = app.add_subcommand("mcb", "multiple-comparison-with-the-best ranking");
    mc->add_option("--input", mcb_in, "CSV with columns series,method,value")->required();
    mc->add_option("--alpha", mcb_alpha, "significance level (0.01/0.05/0.10)")->default_val(0.05);
    mc->add_option("--out", mcb_out, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            const thr::ScenarioConfig cfg = thr::ScenarioConfig::parse(load_json(sim_config), sim_seed);
            const thr::SimulateOutput out =
                thr::run_simulate(cfg, sim_jobs, sim_allow_pinv, !sim_buckets.empty());
            thr::write_csv(sim_out, out.summary);
            if (!sim_per_rep.empty()) thr::write_csv(sim_per_rep, out.per_rep);
            if (!sim_buckets.empty()) thr::write_csv(sim_buckets, out.buckets);
            if (!sim_wide.empty()) thr::write_csv(sim_wide, thr::pivot_wide(out.summary));
            if (!sim_percentiles.empty())
                thr::write_csv(sim_percentiles, thr::percentile_report(out.per_rep));
            std::cout << "wrote " << out.summary.rows.size() << " summary rows to " << sim_out
                      << "\n";
        } else if (vt->parsed()) {
            const std::vector<int> ks = parse_ks_flag(vt_ks);
            if (vt_mode == "theoretical") {
                if (ks.size() != 2 || ks[1] != 1)
                    throw thr::ConfigError("theoretical mode requires a two-level hierarchy k,1");
                thr::write_csv(vt_out, thr::verify_theorem_theoretical(vt_phi, vt_sigma2, ks[0]));
            } else {
                thr::write_csv(vt_out, thr::verify_theorem_sample(vt_phi, vt_sigma2, ks, vt_reps,
                                                                  vt_ntop, vt_seed, vt_jobs));
            }
            std::cout << "wrote SG matrix to " << vt_out << "\n";
        } else if (ds->parsed()) {
            const thr::DatasetSpec spec = thr::DatasetSpec::parse(load_json(ds_config));
            thr::write_csv(ds_out, thr::run_dataset(spec, ds_allow_pinv));
            std::cout << "wrote dataset report to " << ds_out << "\n";
        } else if (at->parsed()) {
            const thr::AggtheoryReport rep =
                thr::aggtheory_report(at_p, at_d, at_q, at_k, at_phi, at_sigma2);
            std::cout << rep.text;
            if (!at_out.empty()) {
                if (!rep.w1)
                    throw thr::ConfigError("--out requires --phi/--sigma2 with a (1,0,0) model");
                thr::write_csv(at_out, *rep.w1);
                std::cout << "wrote W1 matrix to " << at_out << "\n";
            }
        } else if (mc->parsed()) {
            thr::write_csv(mcb_out, thr::run_mcb(thr::read_csv(mcb_in), mcb_alpha));
            std::cout << "wrote MCB ranking to " << mcb_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
