#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "uavdc/beamforming.hpp"
#include "uavdc/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace uavdc;

namespace {

void print_json_error(const std::string& type, const std::string& message) {
    ordered_json j;
    j["error"] = {{"type", type}, {"message", message}};
    std::cerr << j.dump() << std::endl;
}

std::string hex16(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

harness::ExperimentConfig config_or_default(const std::string& path) {
    return path.empty() ? harness::default_config() : harness::load_config(path);
}

ordered_json summary_json(const harness::EvalSummary& s) {
    ordered_json j;
    j["episodes"] = s.episodes;
    j["mean_reward"] = s.mean_reward;
    j["mean_sdc_bits"] = s.mean_sdc;
    j["std_sdc_bits"] = s.std_sdc;
    j["mean_ee_bits_per_joule"] = s.mean_ee;
    j["std_ee_bits_per_joule"] = s.std_ee;
    j["ee_defined_episodes"] = s.ee_defined;
    j["mean_jain"] = s.mean_jain;
    j["std_jain"] = s.std_jain;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UAV-assisted data collection: training, evaluation, sweeps, beam solving"};
    app.require_subcommand(1);

    // train
    std::string tr_config, tr_algo, tr_out;
    std::uint64_t tr_seed = 1;
    int tr_episodes = 0;
    auto* tr = app.add_subcommand("train", "Train a policy and write metrics/trace/checkpoint");
    tr->add_option("--config", tr_config, "INI config file (omit for the built-in desk profile)");
    tr->add_option("--algo", tr_algo, "rla|alo|ddqn|fbs")->required();
    tr->add_option("--seed", tr_seed, "run seed")->capture_default_str();
    tr->add_option("--out", tr_out, "output directory")->required();
    tr->add_option("--episodes", tr_episodes, "override [run] episodes");

    // eval
    std::string ev_ckpt, ev_out;
    std::uint64_t ev_seed = 1001;
    int ev_episodes = 10;
    auto* ev = app.add_subcommand("eval", "Frozen-policy rollouts from a checkpoint");
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--episodes", ev_episodes, "evaluation episodes")->capture_default_str();
    ev->add_option("--seed", ev_seed, "evaluation seed")->capture_default_str();
    ev->add_option("--out", ev_out, "directory for eval_metrics.csv / eval_summary.json");

    // sweep
    std::string sw_config, sw_axis, sw_out;
    std::vector<double> sw_values;
    std::vector<std::string> sw_algos = {"rla", "alo", "ddqn", "fbs"};
    std::uint64_t sw_seed = 1;
    auto* sw = app.add_subcommand("sweep", "Sweep one scenario knob across the algorithms");
    sw->add_option("--config", sw_config, "INI config file (omit for the built-in desk profile)");
    sw->add_option("--axis", sw_axis, "antennas|power|n_nodes (power values are dBm)")->required();
    sw->add_option("--values", sw_values, "comma-separated values")->required()->delimiter(',');
    sw->add_option("--algos", sw_algos,
                   "algorithms to run (rla,alo,ddqn,fbs; fbs-mmse = fbs policy with MMSE-oracle beams)")
        ->delimiter(',')
        ->capture_default_str();
    sw->add_option("--seed", sw_seed, "training seed")->capture_default_str();
    sw->add_option("--out", sw_out, "output directory")->required();

    // export
    std::string ex_run, ex_format = "csv", ex_out;
    bool ex_traces = false;
    auto* ex = app.add_subcommand("export", "Export run artifacts");
    ex->add_flag("--traces", ex_traces, "export the slot-level trace as a trajectory table");
    ex->add_option("--run", ex_run, "run directory (from train --out)")->required();
    ex->add_option("--format", ex_format, "csv")->capture_default_str();
    ex->add_option("--out", ex_out, "output file (default <run>/trajectory.csv)");

    // beam solve
    auto* beam_cmd = app.add_subcommand("beam", "Receive-beamforming solvers");
    beam_cmd->require_subcommand(1);
    std::string bs_instance, bs_method = "sca", bs_out;
    auto* bs = beam_cmd->add_subcommand("solve", "Solve one beamforming instance from JSON");
    bs->add_option("--instance", bs_instance, "instance JSON file")->required();
    bs->add_option("--method", bs_method, "sca|mmse")->capture_default_str();
    bs->add_option("--out", bs_out, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        print_json_error("usage", e.what());
        return e.get_exit_code();
    }

    try {
        if (tr->parsed()) {
            harness::ExperimentConfig cfg = config_or_default(tr_config);
            if (tr_episodes > 0) cfg.episodes = tr_episodes;
            const auto algo = harness::algo_from_string(tr_algo);
            const auto art = harness::train(cfg, algo, tr_seed, tr_out);
            ordered_json j;
            j["algo"] = harness::to_string(algo);
            j["seed"] = tr_seed;
            j["episodes"] = cfg.episodes;
            j["config_hash"] = hex16(cfg.config_hash());
            j["metrics_csv"] = art.metrics_csv;
            j["trace_jsonl"] = art.trace_jsonl;
            j["checkpoint"] = art.checkpoint;
            j["resolved_config"] = art.resolved_config;
            if (!art.rows.empty()) {
                j["final_reward_mean50"] = art.rows.back().reward_mean50;
                j["final_sdc_mean50"] = art.rows.back().sdc_mean50;
            }
            std::cout << j.dump(2) << std::endl;
        } else if (ev->parsed()) {
            const auto s = harness::evaluate(ev_ckpt, ev_episodes, ev_seed, ev_out);
            ordered_json j = summary_json(s);
            j["seed"] = ev_seed;
            std::cout << j.dump(2) << std::endl;
        } else if (sw->parsed()) {
            harness::ExperimentConfig cfg = config_or_default(sw_config);
            const auto axis = harness::axis_from_string(sw_axis);
            const auto rows = harness::sweep(cfg, axis, sw_values, sw_algos, sw_seed, sw_out);
            ordered_json arr = ordered_json::array();
            for (const auto& r : rows) {
                ordered_json jr;
                jr["value"] = r.value;
                jr["algo"] = r.algo;
                jr["mean_sdc_bits"] = r.mean_sdc;
                jr["mean_ee_bits_per_joule"] = r.mean_ee;
                jr["mean_jain"] = r.mean_jain;
                arr.push_back(jr);
            }
            ordered_json j;
            j["axis"] = sw_axis;
            j["out_dir"] = sw_out;
            j["rows"] = arr;
            std::cout << j.dump(2) << std::endl;
        } else if (ex->parsed()) {
            if (!ex_traces) throw std::invalid_argument("export: nothing to export (pass --traces)");
            if (ex_format != "csv") throw std::invalid_argument("export: unsupported format '" + ex_format + "'");
            const std::string trace = (fs::path(ex_run) / "trace.jsonl").string();
            const std::string resolved = (fs::path(ex_run) / "config.resolved.ini").string();
            const auto cfg = harness::load_config(resolved);
            const std::string out =
                ex_out.empty() ? (fs::path(ex_run) / "trajectory.csv").string() : ex_out;
            harness::export_trace_csv(trace, out, cfg.env.limits);
            ordered_json j;
            j["trajectory_csv"] = out;
            std::cout << j.dump(2) << std::endl;
        } else if (bs->parsed()) {
            const auto instance = beam::instance_from_json(read_file(bs_instance));
            beam::BeamformerSet set;
            if (bs_method == "sca")
                set = beam::sca_optimize(instance);
            else if (bs_method == "mmse")
                set = beam::mmse_beamformers(instance);
            else
                throw std::invalid_argument("beam solve: unknown method '" + bs_method + "'");
            const std::string text = beam::set_to_json(set);
            if (bs_out.empty()) {
                std::cout << text << std::endl;
            } else {
                std::ofstream f(bs_out, std::ios::binary);
                if (!f) throw std::runtime_error("cannot write " + bs_out);
                f << text << "\n";
            }
        }
    } catch (const std::invalid_argument& e) {
        print_json_error("invalid_argument", e.what());
        return 2;
    } catch (const std::exception& e) {
        print_json_error("runtime_error", e.what());
        return 1;
    }
    return 0;
}
