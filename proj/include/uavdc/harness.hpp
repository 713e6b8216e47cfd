#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uavdc/agent.hpp"
#include "uavdc/env.hpp"

namespace uavdc::harness {

enum class Algo { rla, alo, ddqn, fbs };
Algo algo_from_string(const std::string& s);
std::string to_string(Algo a);

// Strict INI: [section] / key = value, '#' or ';' comments. Every key must be
// consumed by the loader; leftovers are config errors.
class IniFile {
  public:
    static IniFile parse_text(const std::string& text);
    static IniFile parse_file(const std::string& path);

    bool has(const std::string& sec, const std::string& key) const;
    std::string get_string(const std::string& sec, const std::string& key, const std::string& dflt);
    double get_double(const std::string& sec, const std::string& key, double dflt);
    int get_int(const std::string& sec, const std::string& key, int dflt);
    std::uint64_t get_u64(const std::string& sec, const std::string& key, std::uint64_t dflt);
    bool get_bool(const std::string& sec, const std::string& key, bool dflt);
    void ensure_all_consumed() const;

  private:
    std::map<std::string, std::map<std::string, std::string>> values_;
    std::map<std::string, std::map<std::string, bool>> consumed_;
};

struct EvalConfig {
    int episodes = 10;
};

struct ExperimentConfig {
    env::EnvConfig env;
    agent::AgentConfig agent;
    int episodes = 300;  // E_max
    bool write_trace = true;
    int codebook_size = 8;  // beam branches for codebook algorithms
    double eps_anneal_fraction = 0.8;
    // Action grids are regenerated from these counts whenever a swept knob
    // (speed band, transmit power cap) moves.
    int distance_level_count = 3;
    int heading_level_count = 8;
    int power_level_count = 3;
    EvalConfig eval;

    std::uint64_t config_hash() const;
};

ExperimentConfig default_config();  // desk-scale profile
ExperimentConfig load_config(const std::string& path);
ExperimentConfig load_config_text(const std::string& text);
std::string resolved_config_text(const ExperimentConfig& cfg);

// Fills env.space levels from counts and wires the beamformer mode + action
// branches for the given algorithm.
env::EnvConfig env_config_for(const ExperimentConfig& cfg, Algo algo);
agent::AgentConfig agent_config_for(const ExperimentConfig& cfg, Algo algo, int obs_dim,
                                    const std::vector<int>& arities);

struct MetricsRow {
    int episode = 0;
    double reward = 0.0;
    double sdc_bits = 0.0;
    double ee_bits_per_joule = 0.0;  // NaN when no energy was spent
    double jain = 1.0;
    int fairness_violations = 0;
    int oob_count = 0;
    double wall_ms = 0.0;
    double reward_mean50 = 0.0;
    double sdc_mean50 = 0.0;
};

std::string metrics_csv_header(std::uint64_t config_hash, const std::string& algo, std::uint64_t seed);
std::string metrics_csv_row(const MetricsRow& row);

struct RunArtifacts {
    std::string out_dir;
    std::string metrics_csv;
    std::string trace_jsonl;
    std::string checkpoint;
    std::string resolved_config;
    std::vector<MetricsRow> rows;
};

RunArtifacts train(const ExperimentConfig& cfg, Algo algo, std::uint64_t seed,
                   const std::string& out_dir);

struct EvalSummary {
    int episodes = 0;
    double mean_reward = 0.0;
    double mean_sdc = 0.0, std_sdc = 0.0;
    double mean_ee = 0.0, std_ee = 0.0;  // over episodes with defined EE
    int ee_defined = 0;
    double mean_jain = 0.0, std_jain = 0.0;
    std::vector<MetricsRow> rows;
};

// Frozen-policy rollouts: noise off, epsilon 0. agent may be null (fbs).
EvalSummary run_rollouts(const ExperimentConfig& cfg, Algo algo, agent::Agent* agent,
                         std::uint64_t seed, int episodes,
                         std::optional<env::BeamformerMode> beam_override = std::nullopt);

EvalSummary evaluate(const std::string& checkpoint_path, int episodes, std::uint64_t seed,
                     const std::string& out_dir = "");

enum class SweepAxis { antennas, power, n_nodes };
SweepAxis axis_from_string(const std::string& s);

// "fbs-mmse" is accepted as a pseudo-algorithm: the fbs policy with
// MMSE-oracle beamforming substituted.
struct SweepResultRow {
    double value = 0.0;
    std::string algo;
    double mean_sdc = 0.0, mean_ee = 0.0, mean_jain = 0.0;
};
std::vector<SweepResultRow> sweep(const ExperimentConfig& base, SweepAxis axis,
                                  const std::vector<double>& values,
                                  const std::vector<std::string>& algos, std::uint64_t seed,
                                  const std::string& out_dir);

// Checkpoints: magic + JSON header (named tensor table, checksum, resolved
// config) + packed little-endian f64 payload.
struct Checkpoint {
    std::string algo;
    std::string config_text;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::pair<int, int>>> shapes;
    RVec data;  // concatenated tensors; empty for fbs
    int online_params = 0;  // first half online, second half target
};

void save_checkpoint(const std::string& path, const std::string& algo,
                     const std::string& config_text, std::uint64_t seed, const agent::Agent* agent);
Checkpoint load_checkpoint(const std::string& path);

// Re-validates kinematics and writes episode,slot,x,y,z,speed,scheduled rows.
void export_trace_csv(const std::string& trace_jsonl, const std::string& out_csv,
                      const scenario::KinematicLimits& limits);

}  // namespace uavdc::harness
