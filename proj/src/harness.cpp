#include "uavdc/harness.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "uavdc/rng.hpp"

namespace uavdc::harness {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kFbsPolicyTag = 0x66627370ull;  // fbs trajectory draws

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

[[noreturn]] void config_error(const std::string& sec, const std::string& key, const std::string& what) {
    throw std::invalid_argument("config: [" + sec + "] " + key + ": " + what);
}

std::string hex16(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

Algo algo_from_string(const std::string& s) {
    const std::string t = lower(trim(s));
    if (t == "rla") return Algo::rla;
    if (t == "alo") return Algo::alo;
    if (t == "ddqn") return Algo::ddqn;
    if (t == "fbs") return Algo::fbs;
    throw std::invalid_argument("unknown algorithm '" + s + "' (expected rla|alo|ddqn|fbs)");
}

std::string to_string(Algo a) {
    switch (a) {
        case Algo::rla: return "rla";
        case Algo::alo: return "alo";
        case Algo::ddqn: return "ddqn";
        case Algo::fbs: return "fbs";
    }
    throw std::logic_error("bad algo enum");
}

// ---------------------------------------------------------------------------
// IniFile

IniFile IniFile::parse_text(const std::string& text) {
    IniFile ini;
    std::istringstream in(text);
    std::string raw, section;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty section name");
            ini.values_[section];  // empty sections are fine
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        if (section.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": key outside any [section]");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        if (ini.values_[section].count(key))
            throw std::invalid_argument("config: duplicate key [" + section + "] " + key);
        ini.values_[section][key] = value;
        ini.consumed_[section][key] = false;
    }
    return ini;
}

IniFile IniFile::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_text(ss.str());
}

bool IniFile::has(const std::string& sec, const std::string& key) const {
    auto s = values_.find(sec);
    return s != values_.end() && s->second.count(key) > 0;
}

std::string IniFile::get_string(const std::string& sec, const std::string& key, const std::string& dflt) {
    if (!has(sec, key)) return dflt;
    consumed_[sec][key] = true;
    return values_[sec][key];
}

double IniFile::get_double(const std::string& sec, const std::string& key, double dflt) {
    if (!has(sec, key)) return dflt;
    consumed_[sec][key] = true;
    const std::string& s = values_[sec][key];
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) config_error(sec, key, "trailing characters in number '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        config_error(sec, key, "not a number: '" + s + "'");
    } catch (const std::out_of_range&) {
        config_error(sec, key, "number out of range: '" + s + "'");
    }
}

int IniFile::get_int(const std::string& sec, const std::string& key, int dflt) {
    if (!has(sec, key)) return dflt;
    const double v = get_double(sec, key, 0.0);
    const int i = static_cast<int>(std::llround(v));
    if (std::abs(v - i) > 1e-9) config_error(sec, key, "expected an integer");
    return i;
}

std::uint64_t IniFile::get_u64(const std::string& sec, const std::string& key, std::uint64_t dflt) {
    if (!has(sec, key)) return dflt;
    consumed_[sec][key] = true;
    const std::string& s = values_[sec][key];
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size()) config_error(sec, key, "trailing characters in integer '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        config_error(sec, key, "not an unsigned integer: '" + s + "'");
    } catch (const std::out_of_range&) {
        config_error(sec, key, "integer out of range: '" + s + "'");
    }
}

bool IniFile::get_bool(const std::string& sec, const std::string& key, bool dflt) {
    if (!has(sec, key)) return dflt;
    consumed_[sec][key] = true;
    const std::string v = lower(values_[sec][key]);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    config_error(sec, key, "expected a boolean, got '" + values_[sec][key] + "'");
}

void IniFile::ensure_all_consumed() const {
    std::string unknown;
    for (const auto& [sec, keys] : consumed_)
        for (const auto& [key, used] : keys)
            if (!used) unknown += (unknown.empty() ? "" : ", ") + ("[" + sec + "] " + key);
    if (!unknown.empty()) throw std::invalid_argument("config: unknown keys: " + unknown);
}

// ---------------------------------------------------------------------------
// ExperimentConfig

ExperimentConfig default_config() {
    ExperimentConfig cfg;  // field defaults are the desk-scale profile
    return cfg;
}

namespace {

std::vector<scenario::GroundNode> parse_node_positions(const std::string& s) {
    std::vector<scenario::GroundNode> nodes;
    std::istringstream in(s);
    std::string pair;
    while (std::getline(in, pair, ';')) {
        const std::string p = trim(pair);
        if (p.empty()) continue;
        const auto comma = p.find(',');
        if (comma == std::string::npos)
            throw std::invalid_argument("config: node_positions entry '" + p + "' is not 'x,y'");
        scenario::GroundNode n;
        n.id = static_cast<int>(nodes.size());
        try {
            std::size_t pos = 0;
            n.x = std::stod(trim(p.substr(0, comma)), &pos);
            n.y = std::stod(trim(p.substr(comma + 1)), &pos);
        } catch (const std::exception&) {
            throw std::invalid_argument("config: node_positions entry '" + p + "' is not numeric");
        }
        nodes.push_back(n);
    }
    if (nodes.empty()) throw std::invalid_argument("config: node_positions is empty");
    return nodes;
}

void validate_experiment(const ExperimentConfig& cfg) {
    if (cfg.episodes < 1) throw std::invalid_argument("config: [run] episodes must be >= 1");
    if (cfg.eval.episodes < 1) throw std::invalid_argument("config: [eval] episodes must be >= 1");
    if (cfg.distance_level_count < 1 || cfg.heading_level_count < 1)
        throw std::invalid_argument("config: [action] distance/heading level counts must be >= 1");
    if (cfg.power_level_count < 2)
        throw std::invalid_argument("config: [action] power_levels must be >= 2 (zero and the cap)");
    if (cfg.codebook_size < 1) throw std::invalid_argument("config: [action] codebook_size must be >= 1");
    if (!(cfg.eps_anneal_fraction > 0.0) || cfg.eps_anneal_fraction > 1.0)
        throw std::invalid_argument("config: [agent] eps_anneal_fraction must be in (0, 1]");
    // Full environment validation, on every beamformer wiring we can emit.
    env_config_for(cfg, Algo::rla).validate();
    env_config_for(cfg, Algo::alo).validate();
    env_config_for(cfg, Algo::fbs).validate();
}

ExperimentConfig config_from_ini(IniFile ini) {
    ExperimentConfig cfg = default_config();

    cfg.episodes = ini.get_int("run", "episodes", cfg.episodes);
    cfg.write_trace = ini.get_bool("run", "trace", cfg.write_trace);

    auto& e = cfg.env;
    e.region.x_max = ini.get_double("scenario", "x_max", e.region.x_max);
    e.region.y_max = ini.get_double("scenario", "y_max", e.region.y_max);
    e.altitude = ini.get_double("scenario", "altitude", e.altitude);
    e.start_x = ini.get_double("scenario", "start_x", e.start_x);
    e.start_y = ini.get_double("scenario", "start_y", e.start_y);
    const bool n_nodes_given = ini.has("scenario", "n_nodes");
    e.n_nodes = ini.get_int("scenario", "n_nodes", e.n_nodes);
    e.node_seed = ini.get_u64("scenario", "node_seed", e.node_seed);
    if (ini.has("scenario", "node_positions")) {
        e.nodes = parse_node_positions(ini.get_string("scenario", "node_positions", ""));
        if (n_nodes_given && e.n_nodes != static_cast<int>(e.nodes.size()))
            throw std::invalid_argument("config: [scenario] n_nodes = " + std::to_string(e.n_nodes) +
                                        " does not match the " + std::to_string(e.nodes.size()) +
                                        " node_positions entries");
        e.n_nodes = static_cast<int>(e.nodes.size());
    }
    e.limits.v_min = ini.get_double("scenario", "v_min", e.limits.v_min);
    e.limits.v_max = ini.get_double("scenario", "v_max", e.limits.v_max);
    e.limits.a_max = ini.get_double("scenario", "a_max", e.limits.a_max);
    e.limits.slot_duration = ini.get_double("scenario", "slot_duration", e.limits.slot_duration);
    e.limits.n_slots = ini.get_int("scenario", "n_slots", e.limits.n_slots);
    e.coverage.d_threshold = ini.get_double("scenario", "coverage_distance", e.coverage.d_threshold);
    e.coverage.use_3d = ini.get_bool("scenario", "coverage_3d", e.coverage.use_3d);

    e.channel.n_antennas = ini.get_int("channel", "antennas", e.channel.n_antennas);
    e.channel.n_paths = ini.get_int("channel", "paths", e.channel.n_paths);
    e.channel.pathloss_ref =
        db_to_linear(ini.get_double("channel", "pathloss_ref_db", linear_to_db(e.channel.pathloss_ref)));
    e.channel.pathloss_exp = ini.get_double("channel", "pathloss_exp", e.channel.pathloss_exp);

    e.link.bandwidth = ini.get_double("link", "bandwidth_hz", e.link.bandwidth);
    e.link.noise_power = dbm_to_watt(ini.get_double("link", "noise_dbm", watt_to_dbm(e.link.noise_power)));
    e.link.p_max = dbm_to_watt(ini.get_double("link", "p_max_dbm", watt_to_dbm(e.link.p_max)));
    e.link.volume_threshold = ini.get_double("link", "volume_threshold_bits", e.link.volume_threshold);

    cfg.distance_level_count = ini.get_int("action", "distance_levels", cfg.distance_level_count);
    cfg.heading_level_count = ini.get_int("action", "heading_levels", cfg.heading_level_count);
    cfg.power_level_count = ini.get_int("action", "power_levels", cfg.power_level_count);
    cfg.codebook_size = ini.get_int("action", "codebook_size", cfg.codebook_size);

    e.omega = ini.get_double("reward", "omega", e.omega);
    e.oob_penalty = ini.get_double("reward", "oob_penalty", e.oob_penalty);
    e.volume_scale = ini.get_double("reward", "volume_scale", e.volume_scale);
    {
        const std::string m = lower(ini.get_string("reward", "mode", "cumulative"));
        if (m == "cumulative") e.reward_mode = env::RewardMode::cumulative;
        else if (m == "incremental") e.reward_mode = env::RewardMode::incremental;
        else config_error("reward", "mode", "expected cumulative|incremental, got '" + m + "'");
    }
    {
        const std::string o = lower(ini.get_string("env", "obs", "compact"));
        if (o == "compact") e.obs_mode = env::ObsMode::compact;
        else if (o == "raw") e.obs_mode = env::ObsMode::raw_csi;
        else config_error("env", "obs", "expected compact|raw, got '" + o + "'");
    }
    e.fairness_floor = ini.get_bool("env", "fairness_floor", e.fairness_floor);
    e.fixed_codeword = ini.get_int("env", "fixed_codeword", e.fixed_codeword);

    e.sca.max_iters = ini.get_int("sca", "max_iters", e.sca.max_iters);
    e.sca.epsilon = ini.get_double("sca", "epsilon", e.sca.epsilon);
    e.sca.subproblem_tol = ini.get_double("sca", "subproblem_tol", e.sca.subproblem_tol);

    auto& a = cfg.agent;
    a.net.hidden1 = ini.get_int("agent", "hidden1", a.net.hidden1);
    a.net.hidden2 = ini.get_int("agent", "hidden2", a.net.hidden2);
    a.net.sigma0 = ini.get_double("agent", "sigma0", a.net.sigma0);
    a.lr = ini.get_double("agent", "lr", a.lr);
    a.gamma = ini.get_double("agent", "gamma", a.gamma);
    a.reward_scale = ini.get_double("agent", "reward_scale", a.reward_scale);
    a.batch_size = ini.get_int("agent", "batch", a.batch_size);
    a.per.capacity = ini.get_int("agent", "buffer", a.per.capacity);
    a.warmup = ini.get_int("agent", "warmup", a.warmup);
    a.per.alpha = ini.get_double("agent", "per_alpha", a.per.alpha);
    a.per.priority_floor = ini.get_double("agent", "priority_floor", a.per.priority_floor);
    a.beta_start = ini.get_double("agent", "per_beta_start", a.beta_start);
    a.beta_end = ini.get_double("agent", "per_beta_end", a.beta_end);
    a.target_period = ini.get_int("agent", "target_period", a.target_period);
    a.tau_bar = ini.get_double("agent", "tau_bar", a.tau_bar);
    a.eps_start = ini.get_double("agent", "eps_start", a.eps_start);
    a.eps_end = ini.get_double("agent", "eps_end", a.eps_end);
    cfg.eps_anneal_fraction = ini.get_double("agent", "eps_anneal_fraction", cfg.eps_anneal_fraction);

    cfg.eval.episodes = ini.get_int("eval", "episodes", cfg.eval.episodes);

    ini.ensure_all_consumed();
    validate_experiment(cfg);
    return cfg;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) { return config_from_ini(IniFile::parse_file(path)); }
ExperimentConfig load_config_text(const std::string& text) { return config_from_ini(IniFile::parse_text(text)); }

std::string resolved_config_text(const ExperimentConfig& cfg) {
    const auto& e = cfg.env;
    const auto& a = cfg.agent;
    std::ostringstream o;
    o << "[run]\n";
    o << "episodes = " << cfg.episodes << "\n";
    o << "trace = " << (cfg.write_trace ? "true" : "false") << "\n";
    o << "\n[scenario]\n";
    o << "x_max = " << fmt_g17(e.region.x_max) << "\n";
    o << "y_max = " << fmt_g17(e.region.y_max) << "\n";
    o << "altitude = " << fmt_g17(e.altitude) << "\n";
    o << "start_x = " << fmt_g17(e.start_x) << "\n";
    o << "start_y = " << fmt_g17(e.start_y) << "\n";
    if (!e.nodes.empty()) {
        o << "node_positions = ";
        for (std::size_t i = 0; i < e.nodes.size(); ++i)
            o << (i ? "; " : "") << fmt_g17(e.nodes[i].x) << "," << fmt_g17(e.nodes[i].y);
        o << "\n";
    } else {
        o << "n_nodes = " << e.n_nodes << "\n";
        o << "node_seed = " << e.node_seed << "\n";
    }
    o << "v_min = " << fmt_g17(e.limits.v_min) << "\n";
    o << "v_max = " << fmt_g17(e.limits.v_max) << "\n";
    o << "a_max = " << fmt_g17(e.limits.a_max) << "\n";
    o << "slot_duration = " << fmt_g17(e.limits.slot_duration) << "\n";
    o << "n_slots = " << e.limits.n_slots << "\n";
    o << "coverage_distance = " << fmt_g17(e.coverage.d_threshold) << "\n";
    o << "coverage_3d = " << (e.coverage.use_3d ? "true" : "false") << "\n";
    o << "\n[channel]\n";
    o << "antennas = " << e.channel.n_antennas << "\n";
    o << "paths = " << e.channel.n_paths << "\n";
    o << "pathloss_ref_db = " << fmt_g17(linear_to_db(e.channel.pathloss_ref)) << "\n";
    o << "pathloss_exp = " << fmt_g17(e.channel.pathloss_exp) << "\n";
    o << "\n[link]\n";
    o << "bandwidth_hz = " << fmt_g17(e.link.bandwidth) << "\n";
    o << "noise_dbm = " << fmt_g17(watt_to_dbm(e.link.noise_power)) << "\n";
    o << "p_max_dbm = " << fmt_g17(watt_to_dbm(e.link.p_max)) << "\n";
    o << "volume_threshold_bits = " << fmt_g17(e.link.volume_threshold) << "\n";
    o << "\n[action]\n";
    o << "distance_levels = " << cfg.distance_level_count << "\n";
    o << "heading_levels = " << cfg.heading_level_count << "\n";
    o << "power_levels = " << cfg.power_level_count << "\n";
    o << "codebook_size = " << cfg.codebook_size << "\n";
    o << "\n[reward]\n";
    o << "omega = " << fmt_g17(e.omega) << "\n";
    o << "oob_penalty = " << fmt_g17(e.oob_penalty) << "\n";
    o << "volume_scale = " << fmt_g17(e.volume_scale) << "\n";
    o << "mode = " << (e.reward_mode == env::RewardMode::cumulative ? "cumulative" : "incremental") << "\n";
    o << "\n[env]\n";
    o << "obs = " << (e.obs_mode == env::ObsMode::compact ? "compact" : "raw") << "\n";
    o << "fairness_floor = " << (e.fairness_floor ? "true" : "false") << "\n";
    o << "fixed_codeword = " << e.fixed_codeword << "\n";
    o << "\n[sca]\n";
    o << "max_iters = " << e.sca.max_iters << "\n";
    o << "epsilon = " << fmt_g17(e.sca.epsilon) << "\n";
    o << "subproblem_tol = " << fmt_g17(e.sca.subproblem_tol) << "\n";
    o << "\n[agent]\n";
    o << "hidden1 = " << a.net.hidden1 << "\n";
    o << "hidden2 = " << a.net.hidden2 << "\n";
    o << "sigma0 = " << fmt_g17(a.net.sigma0) << "\n";
    o << "lr = " << fmt_g17(a.lr) << "\n";
    o << "gamma = " << fmt_g17(a.gamma) << "\n";
    o << "reward_scale = " << fmt_g17(a.reward_scale) << "\n";
    o << "batch = " << a.batch_size << "\n";
    o << "buffer = " << a.per.capacity << "\n";
    o << "warmup = " << a.warmup << "\n";
    o << "per_alpha = " << fmt_g17(a.per.alpha) << "\n";
    o << "priority_floor = " << fmt_g17(a.per.priority_floor) << "\n";
    o << "per_beta_start = " << fmt_g17(a.beta_start) << "\n";
    o << "per_beta_end = " << fmt_g17(a.beta_end) << "\n";
    o << "target_period = " << a.target_period << "\n";
    o << "tau_bar = " << fmt_g17(a.tau_bar) << "\n";
    o << "eps_start = " << fmt_g17(a.eps_start) << "\n";
    o << "eps_end = " << fmt_g17(a.eps_end) << "\n";
    o << "eps_anneal_fraction = " << fmt_g17(cfg.eps_anneal_fraction) << "\n";
    o << "\n[eval]\n";
    o << "episodes = " << cfg.eval.episodes << "\n";
    return o.str();
}

std::uint64_t ExperimentConfig::config_hash() const { return fnv1a64(resolved_config_text(*this)); }

env::EnvConfig env_config_for(const ExperimentConfig& cfg, Algo algo) {
    env::EnvConfig e = cfg.env;
    auto& sp = e.space;
    const double tau = e.limits.slot_duration;
    sp.distance_levels.clear();
    if (cfg.distance_level_count == 1) {
        sp.distance_levels.push_back(e.limits.v_min * tau);
    } else {
        for (int i = 0; i < cfg.distance_level_count; ++i)
            sp.distance_levels.push_back(
                (e.limits.v_min +
                 (e.limits.v_max - e.limits.v_min) * i / (cfg.distance_level_count - 1)) *
                tau);
    }
    sp.heading_levels.clear();
    for (int i = 0; i < cfg.heading_level_count; ++i)
        sp.heading_levels.push_back(2.0 * kPi * i / cfg.heading_level_count);
    sp.power_levels_w.clear();
    for (int i = 0; i < cfg.power_level_count; ++i)
        sp.power_levels_w.push_back(e.link.p_max * i / (cfg.power_level_count - 1));
    sp.n_nodes = e.nodes.empty() ? e.n_nodes : static_cast<int>(e.nodes.size());

    switch (algo) {
        case Algo::rla:
            e.beam_mode = env::BeamformerMode::sca;
            sp.codebook_size = 0;
            break;
        case Algo::alo:
        case Algo::ddqn:
            e.beam_mode = env::BeamformerMode::codebook_action;
            sp.codebook_size = cfg.codebook_size;
            break;
        case Algo::fbs:
            e.beam_mode = env::BeamformerMode::fixed_codeword;
            sp.codebook_size = cfg.codebook_size;  // codebook backs the fixed codeword
            break;
    }
    return e;
}

agent::AgentConfig agent_config_for(const ExperimentConfig& cfg, Algo algo, int obs_dim,
                                    const std::vector<int>& arities) {
    agent::AgentConfig a = cfg.agent;
    a.net.obs_dim = obs_dim;
    a.net.arities = arities;
    const int total_steps = cfg.episodes * cfg.env.limits.n_slots;
    a.beta_anneal_steps = std::max(1, total_steps - a.warmup);
    a.eps_anneal_steps = std::max(1, static_cast<int>(std::llround(cfg.eps_anneal_fraction * total_steps)));
    if (algo == Algo::ddqn) a = agent::make_ddqn_baseline(a);
    return a;
}

// ---------------------------------------------------------------------------
// Metrics CSV

std::string metrics_csv_header(std::uint64_t config_hash, const std::string& algo, std::uint64_t seed) {
    std::ostringstream o;
    o << "# config_hash=" << hex16(config_hash) << " algo=" << algo << " seed=" << seed << "\n";
    o << "episode,reward,sdc_bits,ee_bits_per_joule,jain,fairness_violations,oob_count,"
         "wall_ms,reward_mean50,sdc_mean50\n";
    return o.str();
}

namespace {
std::string csv_num(double v) { return std::isnan(v) ? "nan" : fmt_g17(v); }
}  // namespace

std::string metrics_csv_row(const MetricsRow& r) {
    std::ostringstream o;
    o << r.episode << "," << csv_num(r.reward) << "," << csv_num(r.sdc_bits) << ","
      << csv_num(r.ee_bits_per_joule) << "," << csv_num(r.jain) << "," << r.fairness_violations << ","
      << r.oob_count << "," << csv_num(r.wall_ms) << "," << csv_num(r.reward_mean50) << ","
      << csv_num(r.sdc_mean50) << "\n";
    return o.str();
}

// ---------------------------------------------------------------------------
// Rollout plumbing shared by train / eval / sweep

namespace {

env::FactoredAction fbs_action(const std::vector<std::uint8_t>& mask, const env::ActionSpace& space,
                               RngStream& rng) {
    std::vector<int> feasible;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) feasible.push_back(static_cast<int>(i));
    if (feasible.empty()) throw std::logic_error("empty feasibility mask");
    const int pick = feasible[rng.next_below(feasible.size())];
    const int n_head = static_cast<int>(space.heading_levels.size());
    env::FactoredAction a;
    a.distance_index = pick / n_head;
    a.heading_index = pick % n_head;
    a.power_index.assign(space.n_nodes, static_cast<int>(space.power_levels_w.size()) - 1);
    if (space.codebook_size > 0) a.beam_index.assign(space.n_nodes, 0);
    return a;
}

struct EpisodeStats {
    double reward = 0.0;
    int oob = 0;
    int floor_infeasible = 0;
};

MetricsRow finish_episode(const env::Environment& environment, int episode, const EpisodeStats& st,
                          double wall_ms, std::deque<double>& reward_win, std::deque<double>& sdc_win) {
    const auto& reports = environment.reports();
    const auto& cfg = environment.config();
    MetricsRow row;
    row.episode = episode;
    row.reward = st.reward;
    row.sdc_bits = link::sdc(reports);
    row.ee_bits_per_joule = std::numeric_limits<double>::quiet_NaN();
    try {
        row.ee_bits_per_joule = link::energy_efficiency(reports, cfg.limits.slot_duration);
    } catch (const std::domain_error&) {
    }
    row.jain = link::jain_index(environment.node_volumes());
    const auto fair = link::fairness_satisfied(reports, cfg.link.volume_threshold, cfg.space.n_nodes);
    row.fairness_violations = static_cast<int>(std::count(fair.begin(), fair.end(), false));
    row.oob_count = st.oob;
    row.wall_ms = wall_ms;
    auto push50 = [](std::deque<double>& w, double v) {
        w.push_back(v);
        if (w.size() > 50) w.pop_front();
        double s = 0.0;
        for (double x : w) s += x;
        return s / static_cast<double>(w.size());
    };
    row.reward_mean50 = push50(reward_win, st.reward);
    row.sdc_mean50 = push50(sdc_win, row.sdc_bits);
    return row;
}

void write_trace_record(std::ofstream& out, int episode, const env::FactoredAction& act,
                        const env::StepResult& res, double altitude) {
    ordered_json j;
    j["episode"] = episode;
    j["slot"] = res.report.slot;
    j["x"] = res.uav.x;
    j["y"] = res.uav.y;
    j["z"] = altitude;
    j["vx"] = res.uav.vx;
    j["vy"] = res.uav.vy;
    j["oob"] = res.out_of_bounds;
    j["floor_infeasible"] = res.floor_infeasible;
    ordered_json ja;
    ja["distance"] = act.distance_index;
    ja["heading"] = act.heading_index;
    ja["power"] = act.power_index;
    ja["beam"] = act.beam_index;
    j["action"] = ja;
    j["scheduled"] = res.scheduled_ids;
    j["rate_bps_hz"] = res.report.rate_bps_hz;
    j["volume_bits"] = res.report.volume_bits;
    j["power_w"] = res.report.power_w;
    ordered_json jr;
    jr["volume"] = res.breakdown.volume_term;
    jr["coverage"] = res.breakdown.coverage_bonus;
    jr["oob"] = res.breakdown.oob_penalty;
    jr["total"] = res.breakdown.total();
    j["reward"] = jr;
    out << j.dump() << "\n";
}

}  // namespace

RunArtifacts train(const ExperimentConfig& cfg, Algo algo, std::uint64_t seed,
                   const std::string& out_dir) {
    fs::create_directories(out_dir);
    const env::EnvConfig envcfg = env_config_for(cfg, algo);
    env::Environment environment(envcfg, seed);
    const std::string cfg_text = resolved_config_text(cfg);
    const std::uint64_t hash = cfg.config_hash();

    std::unique_ptr<agent::Agent> ag;
    if (algo != Algo::fbs)
        ag = std::make_unique<agent::Agent>(
            agent_config_for(cfg, algo, environment.observation_size(), envcfg.space.arities()), seed);
    RngStream fbs_base = RngStream(seed).substream(kFbsPolicyTag);

    RunArtifacts art;
    art.out_dir = out_dir;
    art.metrics_csv = (fs::path(out_dir) / "metrics.csv").string();
    art.trace_jsonl = cfg.write_trace ? (fs::path(out_dir) / "trace.jsonl").string() : "";
    art.checkpoint = (fs::path(out_dir) / "checkpoint.bin").string();
    art.resolved_config = (fs::path(out_dir) / "config.resolved.ini").string();

    {
        std::ofstream rc(art.resolved_config, std::ios::binary);
        if (!rc) throw std::runtime_error("cannot write " + art.resolved_config);
        rc << cfg_text;
    }
    std::ofstream metrics(art.metrics_csv, std::ios::binary);
    if (!metrics) throw std::runtime_error("cannot write " + art.metrics_csv);
    metrics << metrics_csv_header(hash, to_string(algo), seed);
    std::ofstream trace;
    if (cfg.write_trace) {
        trace.open(art.trace_jsonl, std::ios::binary);
        if (!trace) throw std::runtime_error("cannot write " + art.trace_jsonl);
        ordered_json meta;
        meta["meta"] = {{"format", 1},
                        {"config_hash", hex16(hash)},
                        {"algo", to_string(algo)},
                        {"seed", seed}};
        trace << meta.dump() << "\n";
    }

    std::deque<double> reward_win, sdc_win;
    for (int ep = 0; ep < cfg.episodes; ++ep) {
        const auto t0 = std::chrono::steady_clock::now();
        env::Observation obs = environment.reset(ep);
        RngStream fbs_ep = fbs_base.substream(static_cast<std::uint64_t>(ep));
        EpisodeStats st;
        while (!environment.done()) {
            const auto mask = environment.feasible_mask();
            env::FactoredAction act;
            if (ag)
                act = ag->select_action(obs, mask, envcfg.space, true);
            else
                act = fbs_action(mask, envcfg.space, fbs_ep);
            env::StepResult res = environment.step(act);
            if (ag) {
                env::Transition t;
                t.obs = obs;
                t.branch_actions = envcfg.space.to_branch_indices(act);
                t.reward = res.reward;
                t.next_obs = res.obs;
                t.done = res.done;
                ag->observe(std::move(t));
                ag->maybe_learn();
            }
            st.reward += res.reward;
            st.oob += res.out_of_bounds ? 1 : 0;
            st.floor_infeasible += res.floor_infeasible ? 1 : 0;
            if (trace.is_open()) write_trace_record(trace, ep, act, res, envcfg.altitude);
            obs = std::move(res.obs);
        }
        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        MetricsRow row = finish_episode(environment, ep, st, wall_ms, reward_win, sdc_win);
        metrics << metrics_csv_row(row);
        art.rows.push_back(row);
    }

    save_checkpoint(art.checkpoint, to_string(algo), cfg_text, seed, ag.get());
    return art;
}

EvalSummary run_rollouts(const ExperimentConfig& cfg, Algo algo, agent::Agent* agent,
                         std::uint64_t seed, int episodes,
                         std::optional<env::BeamformerMode> beam_override) {
    env::EnvConfig envcfg = env_config_for(cfg, algo);
    if (beam_override) envcfg.beam_mode = *beam_override;
    env::Environment environment(envcfg, seed);
    RngStream fbs_base = RngStream(seed).substream(kFbsPolicyTag);

    EvalSummary s;
    s.episodes = episodes;
    std::deque<double> reward_win, sdc_win;
    for (int ep = 0; ep < episodes; ++ep) {
        env::Observation obs = environment.reset(ep);
        RngStream fbs_ep = fbs_base.substream(static_cast<std::uint64_t>(ep));
        EpisodeStats st;
        while (!environment.done()) {
            const auto mask = environment.feasible_mask();
            env::FactoredAction act;
            if (agent)
                act = agent->select_action(obs, mask, envcfg.space, false);
            else
                act = fbs_action(mask, envcfg.space, fbs_ep);
            env::StepResult res = environment.step(act);
            st.reward += res.reward;
            st.oob += res.out_of_bounds ? 1 : 0;
            obs = std::move(res.obs);
        }
        s.rows.push_back(finish_episode(environment, ep, st, 0.0, reward_win, sdc_win));
    }

    double sum_r = 0, sum_sdc = 0, sq_sdc = 0, sum_jain = 0, sq_jain = 0, sum_ee = 0, sq_ee = 0;
    for (const auto& r : s.rows) {
        sum_r += r.reward;
        sum_sdc += r.sdc_bits;
        sq_sdc += r.sdc_bits * r.sdc_bits;
        sum_jain += r.jain;
        sq_jain += r.jain * r.jain;
        if (!std::isnan(r.ee_bits_per_joule)) {
            sum_ee += r.ee_bits_per_joule;
            sq_ee += r.ee_bits_per_joule * r.ee_bits_per_joule;
            ++s.ee_defined;
        }
    }
    const double n = static_cast<double>(s.rows.size());
    auto pstd = [](double sum, double sq, double cnt) {
        if (cnt <= 0) return 0.0;
        const double m = sum / cnt;
        return std::sqrt(std::max(0.0, sq / cnt - m * m));
    };
    s.mean_reward = n > 0 ? sum_r / n : 0.0;
    s.mean_sdc = n > 0 ? sum_sdc / n : 0.0;
    s.std_sdc = pstd(sum_sdc, sq_sdc, n);
    s.mean_jain = n > 0 ? sum_jain / n : 0.0;
    s.std_jain = pstd(sum_jain, sq_jain, n);
    s.mean_ee = s.ee_defined > 0 ? sum_ee / s.ee_defined : std::numeric_limits<double>::quiet_NaN();
    s.std_ee = s.ee_defined > 0 ? pstd(sum_ee, sq_ee, s.ee_defined) : 0.0;
    return s;
}

EvalSummary evaluate(const std::string& checkpoint_path, int episodes, std::uint64_t seed,
                     const std::string& out_dir) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const ExperimentConfig cfg = load_config_text(ck.config_text);
    const Algo algo = algo_from_string(ck.algo);

    std::unique_ptr<agent::Agent> ag;
    if (algo != Algo::fbs) {
        const env::EnvConfig envcfg = env_config_for(cfg, algo);
        env::Environment probe(envcfg, seed);
        ag = std::make_unique<agent::Agent>(
            agent_config_for(cfg, algo, probe.observation_size(), envcfg.space.arities()), ck.seed);
        const int n = ag->online().n_params();
        if (static_cast<int>(ck.data.size()) != 2 * n)
            throw std::runtime_error("checkpoint parameter count mismatch: file has " +
                                     std::to_string(ck.data.size()) + ", network needs " +
                                     std::to_string(2 * n));
        ag->online().params() = ck.data.head(n);
        ag->target().params() = ck.data.tail(n);
    }

    EvalSummary s = run_rollouts(cfg, algo, ag.get(), seed, episodes);

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream csv((fs::path(out_dir) / "eval_metrics.csv").string(), std::ios::binary);
        csv << metrics_csv_header(cfg.config_hash(), ck.algo, seed);
        for (const auto& r : s.rows) csv << metrics_csv_row(r);
        ordered_json j;
        j["algo"] = ck.algo;
        j["episodes"] = s.episodes;
        j["seed"] = seed;
        j["config_hash"] = hex16(cfg.config_hash());
        j["mean_reward"] = s.mean_reward;
        j["mean_sdc_bits"] = s.mean_sdc;
        j["std_sdc_bits"] = s.std_sdc;
        j["mean_ee_bits_per_joule"] = s.mean_ee;
        j["std_ee_bits_per_joule"] = s.std_ee;
        j["ee_defined_episodes"] = s.ee_defined;
        j["mean_jain"] = s.mean_jain;
        j["std_jain"] = s.std_jain;
        std::ofstream js((fs::path(out_dir) / "eval_summary.json").string(), std::ios::binary);
        js << j.dump(2) << "\n";
    }
    return s;
}

// ---------------------------------------------------------------------------
// Sweep

SweepAxis axis_from_string(const std::string& s) {
    const std::string t = lower(trim(s));
    if (t == "antennas") return SweepAxis::antennas;
    if (t == "power") return SweepAxis::power;
    if (t == "n_nodes") return SweepAxis::n_nodes;
    throw std::invalid_argument("unknown sweep axis '" + s + "' (expected antennas|power|n_nodes)");
}

namespace {
std::string value_slug(double v) {
    std::string s = fmt_g17(v);
    for (char& c : s)
        if (c == '.' || c == '-' || c == '+') c = 'p';
    return s;
}
}  // namespace

std::vector<SweepResultRow> sweep(const ExperimentConfig& base, SweepAxis axis,
                                  const std::vector<double>& values,
                                  const std::vector<std::string>& algos, std::uint64_t seed,
                                  const std::string& out_dir) {
    if (values.empty()) throw std::invalid_argument("sweep: no values given");
    if (algos.empty()) throw std::invalid_argument("sweep: no algorithms given");
    fs::create_directories(out_dir);
    const std::uint64_t eval_seed = seed ^ 0x65766c5eull;  // held out from training

    std::vector<SweepResultRow> rows;
    for (double v : values) {
        ExperimentConfig cfg = base;
        switch (axis) {
            case SweepAxis::antennas:
                cfg.env.channel.n_antennas = static_cast<int>(std::llround(v));
                break;
            case SweepAxis::power:
                cfg.env.link.p_max = dbm_to_watt(v);  // values in dBm
                break;
            case SweepAxis::n_nodes:
                cfg.env.n_nodes = static_cast<int>(std::llround(v));
                cfg.env.nodes.clear();
                break;
        }
        for (const std::string& algo_s : algos) {
            SweepResultRow row;
            row.value = v;
            row.algo = algo_s;
            EvalSummary s;
            if (algo_s == "fbs" || algo_s == "fbs-mmse") {
                const auto ov = algo_s == "fbs-mmse"
                                    ? std::optional<env::BeamformerMode>(env::BeamformerMode::mmse_oracle)
                                    : std::nullopt;
                s = run_rollouts(cfg, Algo::fbs, nullptr, eval_seed, cfg.eval.episodes, ov);
            } else {
                const Algo algo = algo_from_string(algo_s);
                const std::string sub =
                    (fs::path(out_dir) / (algo_s + "_" + value_slug(v))).string();
                RunArtifacts art = train(cfg, algo, seed, sub);
                s = evaluate(art.checkpoint, cfg.eval.episodes, eval_seed, "");
            }
            row.mean_sdc = s.mean_sdc;
            row.mean_ee = s.mean_ee;
            row.mean_jain = s.mean_jain;
            rows.push_back(row);
        }
    }

    const char* metric_names[3] = {"sdc", "ee", "jain"};
    for (int m = 0; m < 3; ++m) {
        std::ofstream f((fs::path(out_dir) / ("sweep_" + std::string(metric_names[m]) + ".csv")).string(),
                        std::ios::binary);
        f << "value";
        for (const auto& a : algos) f << "," << a;
        f << "\n";
        for (double v : values) {
            f << fmt_g17(v);
            for (const auto& a : algos) {
                for (const auto& r : rows)
                    if (r.value == v && r.algo == a) {
                        const double x = m == 0 ? r.mean_sdc : m == 1 ? r.mean_ee : r.mean_jain;
                        f << "," << csv_num(x);
                        break;
                    }
            }
            f << "\n";
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kMagic[8] = {'U', 'A', 'V', 'D', 'C', 'K', 'P', '1'};
static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");

void put_u64(std::ofstream& f, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    f.write(reinterpret_cast<const char*>(b), 8);
}
std::uint64_t take_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const std::string& algo,
                     const std::string& config_text, std::uint64_t seed, const agent::Agent* agent) {
    ordered_json h;
    h["format_version"] = 1;
    h["algo"] = algo;
    h["seed"] = seed;
    h["config_hash"] = hex16(fnv1a64(config_text));
    h["config_ini"] = config_text;

    RVec payload;
    ordered_json tensors = ordered_json::array();
    int online_params = 0;
    if (agent != nullptr) {
        // const access is enough here, but the accessors are non-const
        auto* mut = const_cast<agent::Agent*>(agent);
        const auto shapes = mut->online().tensor_shapes();
        online_params = mut->online().n_params();
        payload.resize(2 * online_params);
        payload.head(online_params) = mut->online().params();
        payload.tail(online_params) = mut->target().params();
        long off = 0;
        for (const char* net : {"online", "target"}) {
            for (const auto& [name, shape] : shapes) {
                const long count = static_cast<long>(shape.first) * shape.second;
                ordered_json t;
                t["name"] = std::string(net) + "." + name;
                t["rows"] = shape.first;
                t["cols"] = shape.second;
                t["offset"] = off;
                t["count"] = count;
                tensors.push_back(t);
                off += count;
            }
        }
        if (off != payload.size()) throw std::logic_error("tensor table does not cover the parameters");
    }
    h["online_params"] = online_params;
    h["tensors"] = tensors;
    h["checksum"] = hex16(fnv1a64(payload.data(), sizeof(double) * static_cast<std::size_t>(payload.size())));

    const std::string hs = h.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write(kMagic, 8);
    put_u64(f, hs.size());
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(sizeof(double) * payload.size()));
    if (!f) throw std::runtime_error("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    const std::uint64_t hlen = take_u64(bytes.data() + 8);
    if (16 + hlen > bytes.size()) throw std::runtime_error("truncated checkpoint header: " + path);
    ordered_json h;
    try {
        h = ordered_json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(hlen));
    } catch (const std::exception& e) {
        throw std::runtime_error("corrupt checkpoint header: " + std::string(e.what()));
    }
    if (h.at("format_version").get<int>() != 1)
        throw std::runtime_error("unsupported checkpoint format version");

    const std::size_t payload_bytes = bytes.size() - 16 - hlen;
    if (payload_bytes % sizeof(double) != 0)
        throw std::runtime_error("checkpoint payload is not a whole number of doubles");
    Checkpoint ck;
    ck.algo = h.at("algo").get<std::string>();
    ck.config_text = h.at("config_ini").get<std::string>();
    ck.seed = h.at("seed").get<std::uint64_t>();
    ck.online_params = h.at("online_params").get<int>();
    ck.data.resize(static_cast<long>(payload_bytes / sizeof(double)));
    std::memcpy(ck.data.data(), bytes.data() + 16 + hlen, payload_bytes);
    for (const auto& t : h.at("tensors"))
        ck.shapes.emplace_back(t.at("name").get<std::string>(),
                               std::make_pair(t.at("rows").get<int>(), t.at("cols").get<int>()));
    const std::string want = h.at("checksum").get<std::string>();
    const std::string got = hex16(fnv1a64(ck.data.data(), payload_bytes));
    if (want != got)
        throw std::runtime_error("checkpoint checksum mismatch: header " + want + ", payload " + got);
    long covered = 0;
    for (const auto& [name, shape] : ck.shapes) covered += static_cast<long>(shape.first) * shape.second;
    if (covered != ck.data.size())
        throw std::runtime_error("checkpoint tensor table does not match payload size");
    return ck;
}

// ---------------------------------------------------------------------------
// Trace export

void export_trace_csv(const std::string& trace_jsonl, const std::string& out_csv,
                      const scenario::KinematicLimits& limits) {
    std::ifstream in(trace_jsonl);
    if (!in) throw std::runtime_error("cannot open trace: " + trace_jsonl);
    std::ofstream out(out_csv, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_csv);
    out << "episode,slot,x,y,z,speed,scheduled\n";

    const double tol = 1e-9;
    int prev_episode = -1, prev_slot = -1;
    double prev_vx = 0.0, prev_vy = 0.0;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("trace line " + std::to_string(lineno) + ": " + e.what());
        }
        if (j.contains("meta")) continue;
        const int episode = j.at("episode").get<int>();
        const int slot = j.at("slot").get<int>();
        const double vx = j.at("vx").get<double>();
        const double vy = j.at("vy").get<double>();
        const double speed = std::hypot(vx, vy);
        if (speed < limits.v_min - tol || speed > limits.v_max + tol)
            throw std::runtime_error("trace line " + std::to_string(lineno) + ": speed " + fmt_g17(speed) +
                                     " outside [" + fmt_g17(limits.v_min) + ", " + fmt_g17(limits.v_max) + "]");
        // the acceleration bound binds once two moves are on record (mask semantics)
        if (episode == prev_episode && slot == prev_slot + 1 && prev_slot >= 2) {
            const double accel = std::hypot(vx - prev_vx, vy - prev_vy) / limits.slot_duration;
            if (accel > limits.a_max + tol)
                throw std::runtime_error("trace line " + std::to_string(lineno) + ": acceleration " +
                                         fmt_g17(accel) + " exceeds " + fmt_g17(limits.a_max));
        }
        prev_episode = episode;
        prev_slot = slot;
        prev_vx = vx;
        prev_vy = vy;
        out << episode << "," << slot << "," << fmt_g17(j.at("x").get<double>()) << ","
            << fmt_g17(j.at("y").get<double>()) << "," << fmt_g17(j.at("z").get<double>()) << ","
            << fmt_g17(speed) << "," << j.at("scheduled").size() << "\n";
    }
}

}  // namespace uavdc::harness
