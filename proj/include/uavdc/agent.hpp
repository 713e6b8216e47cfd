#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uavdc/common.hpp"
#include "uavdc/env.hpp"
#include "uavdc/rng.hpp"

namespace uavdc::agent {

using env::FactoredAction;
using env::Observation;
using env::Transition;

// Linear layer with optional factorized Gaussian noise on weights and biases.
// Parameters live in an external flat vector owned by the network, so the
// optimizer, soft updates, and finite-difference checks operate on one RVec.
class NoisyLinear {
  public:
    NoisyLinear() = default;
    NoisyLinear(int in, int out, bool noisy, int offset);

    int param_count() const;
    void init_params(RVec& flat, double sigma0, RngStream& rng) const;
    void sample_noise(RngStream& rng);

    RVec forward(const RVec& flat, const RVec& x, bool with_noise) const;
    // Accumulates parameter gradients into grad and returns dLoss/dx.
    RVec backward(const RVec& flat, const RVec& grad_in_dy, const RVec& x, bool with_noise,
                  RVec& grad) const;

    // Clamp noise scales to >= 0 after an optimizer step.
    void clamp_sigma(RVec& flat) const;
    void tensor_names(const std::string& prefix,
                      std::vector<std::pair<std::string, std::pair<int, int>>>& out) const;

    int in_dim() const { return in_; }
    int out_dim() const { return out_; }
    bool noisy() const { return noisy_; }

  private:
    int in_ = 0, out_ = 0, off_ = 0;
    bool noisy_ = false;
    RVec f_in_, f_out_;  // sign(e)*sqrt(|e|) transformed noise
};

struct NetConfig {
    int obs_dim = 0;
    int hidden1 = 128;
    int hidden2 = 128;
    std::vector<int> arities;
    bool dueling = true;
    bool noisy = true;
    double sigma0 = 0.5;
};

struct ForwardCache {
    RVec x, z1, a1, z2, a2;
    double value = 0.0;
    std::vector<RVec> adv;  // raw head outputs
    std::vector<RVec> q;    // per-branch Q
};

// Shared two-layer trunk; dueling value head plus one advantage head per
// branch (plain Q heads when dueling is off).
class QNetwork {
  public:
    QNetwork() = default;
    QNetwork(const NetConfig& cfg, RngStream& rng);

    ForwardCache forward(const RVec& obs, bool with_noise) const;
    void sample_noise(RngStream& rng);

    // dq: per-branch gradient dLoss/dQ_b[a_b] at the chosen index only.
    void backward(const ForwardCache& cache, const std::vector<int>& actions,
                  const std::vector<double>& dq, bool with_noise, RVec& grad) const;

    const RVec& params() const { return params_; }
    RVec& params() { return params_; }
    int n_params() const { return static_cast<int>(params_.size()); }
    void clamp_sigma();
    const NetConfig& config() const { return cfg_; }
    // name -> (rows, cols) in registration order, offsets implicit
    std::vector<std::pair<std::string, std::pair<int, int>>> tensor_shapes() const;

  private:
    NetConfig cfg_;
    NoisyLinear l1_, l2_, value_;
    std::vector<NoisyLinear> heads_;
    RVec params_;
};

std::vector<RVec> forward_q(const QNetwork& net, const Observation& obs, bool with_noise);

// Per-branch double-DQN targets: y_b = r (done) or r + gamma * Q'_b[argmax Q_b].
std::vector<double> double_target(double reward, double gamma, bool done,
                                  const std::vector<RVec>& q_next_online,
                                  const std::vector<RVec>& q_next_target);

struct SumTree {
    explicit SumTree(int capacity);
    void set(int leaf, double value);
    double get(int leaf) const;
    double total() const { return tree_[0]; }
    int find(double value) const;  // prefix-sum descent; half-open leaf ranges
    int capacity() const { return capacity_; }
    bool consistent(double rel_tol) const;

  private:
    int capacity_;
    std::vector<double> tree_;
};

struct PerConfig {
    int capacity = 20000;
    double alpha = 0.6;
    double priority_floor = 1e-3;
};

struct SampleBatch {
    std::vector<int> indices;
    std::vector<const Transition*> items;
    RVec weights;  // IS weights in (0, 1], max-normalized over the batch
};

class PerBuffer {
  public:
    explicit PerBuffer(const PerConfig& cfg);
    void insert(Transition t);  // enters at max-seen priority
    SampleBatch sample(int n, double beta, RngStream& rng);          // stratified by priority^alpha
    SampleBatch sample_uniform(int n, RngStream& rng);               // DDQN ablation
    void update_priorities(const std::vector<int>& indices, const std::vector<double>& mean_abs_td);
    int size() const { return size_; }
    const SumTree& tree() const { return tree_; }

  private:
    PerConfig cfg_;
    std::vector<Transition> data_;
    SumTree tree_;
    int write_ = 0;
    int size_ = 0;
    double max_raw_ = 1.0;
};

struct AgentConfig {
    NetConfig net;
    double lr = 5e-4;
    double gamma = 0.9;
    // Rewards are multiplied by this factor when forming TD targets, so the
    // network fits returns of moderate magnitude; action selection is
    // unaffected (argmax is invariant to positive scaling).
    double reward_scale = 1e-3;
    int batch_size = 64;
    int warmup = 256;
    PerConfig per;
    double beta_start = 0.4, beta_end = 1.0;
    int beta_anneal_steps = 9000;
    int target_period = 10;  // learning steps between soft target updates
    double tau_bar = 0.05;
    bool epsilon_greedy = false;
    double eps_start = 1.0, eps_end = 0.05;
    int eps_anneal_steps = 7200;
    bool uniform_replay = false;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
};

// Rainbow-style fusion agent minus the distributional/n-step parts: dueling +
// noisy + double + PER. make_ddqn_baseline turns the first three off (double
// targets stay) for the ablation baseline.
class Agent {
  public:
    Agent(const AgentConfig& cfg, std::uint64_t seed);

    FactoredAction select_action(const Observation& obs, const std::vector<std::uint8_t>& kinematic_mask,
                                 const env::ActionSpace& space, bool explore);
    void observe(Transition t);

    struct LearnInfo {
        bool learned = false;
        double loss = 0.0;
    };
    LearnInfo maybe_learn();

    // One optimizer step on the given batch; returns loss and per-transition
    // mean |TD|. Noise must already be sampled (or noisy off).
    std::pair<double, std::vector<double>> td_update(const std::vector<const Transition*>& batch,
                                                     const RVec& weights,
                                                     const std::vector<std::vector<double>>& targets);
    void soft_update();

    QNetwork& online() { return online_; }
    QNetwork& target() { return target_; }
    PerBuffer& buffer() { return buffer_; }
    const AgentConfig& config() const { return cfg_; }
    double epsilon() const;
    int learn_steps() const { return learn_steps_; }
    RngStream& rng() { return rng_; }

  private:
    AgentConfig cfg_;
    RngStream rng_;
    QNetwork online_, target_;
    PerBuffer buffer_;
    RVec adam_m_, adam_v_;
    int adam_t_ = 0;
    int learn_steps_ = 0;
    std::int64_t env_steps_ = 0;
};

AgentConfig make_ddqn_baseline(AgentConfig cfg);

// Loss and flat gradient without an optimizer step (finite-difference gate).
// mean_abs_td, when given, receives the per-transition mean |TD| (priorities).
double td_loss_and_grad(const QNetwork& net, const std::vector<const Transition*>& batch,
                        const RVec& weights, const std::vector<std::vector<double>>& targets,
                        bool with_noise, RVec& grad, std::vector<double>* mean_abs_td = nullptr);

}  // namespace uavdc::agent
