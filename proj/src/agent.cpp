#include "uavdc/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uavdc::agent {

namespace {

double noise_transform(double e) { return (e < 0.0 ? -1.0 : 1.0) * std::sqrt(std::abs(e)); }

int argmax_lowest(const RVec& q) {
    int best = 0;
    for (int i = 1; i < q.size(); ++i)
        if (q(i) > q(best)) best = i;
    return best;
}

}  // namespace

NoisyLinear::NoisyLinear(int in, int out, bool noisy, int offset)
    : in_(in), out_(out), off_(offset), noisy_(noisy), f_in_(RVec::Zero(in)), f_out_(RVec::Zero(out)) {}

int NoisyLinear::param_count() const {
    const int base = in_ * out_ + out_;
    return noisy_ ? 2 * base : base;
}

// layout: w_mu (out*in, row-major), b_mu (out), then w_sigma, b_sigma if noisy
void NoisyLinear::init_params(RVec& flat, double sigma0, RngStream& rng) const {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    for (int i = 0; i < in_ * out_; ++i) flat(off_ + i) = rng.uniform(-bound, bound);
    for (int i = 0; i < out_; ++i) flat(off_ + in_ * out_ + i) = rng.uniform(-bound, bound);
    if (noisy_) {
        const int s = off_ + in_ * out_ + out_;
        for (int i = 0; i < in_ * out_ + out_; ++i) flat(s + i) = sigma0 * bound;
    }
}

void NoisyLinear::sample_noise(RngStream& rng) {
    if (!noisy_) return;
    for (int i = 0; i < in_; ++i) f_in_(i) = noise_transform(rng.normal());
    for (int o = 0; o < out_; ++o) f_out_(o) = noise_transform(rng.normal());
}

RVec NoisyLinear::forward(const RVec& flat, const RVec& x, bool with_noise) const {
    using MapM = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    MapM w_mu(flat.data() + off_, out_, in_);
    Eigen::Map<const RVec> b_mu(flat.data() + off_ + in_ * out_, out_);
    RVec y = w_mu * x + b_mu;
    if (noisy_ && with_noise) {
        const int s = off_ + in_ * out_ + out_;
        MapM w_sig(flat.data() + s, out_, in_);
        Eigen::Map<const RVec> b_sig(flat.data() + s + in_ * out_, out_);
        y += f_out_.cwiseProduct(w_sig * f_in_.cwiseProduct(x)) + b_sig.cwiseProduct(f_out_);
    }
    return y;
}

RVec NoisyLinear::backward(const RVec& flat, const RVec& dy, const RVec& x, bool with_noise,
                           RVec& grad) const {
    using MapM = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using MapMW = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    MapM w_mu(flat.data() + off_, out_, in_);
    MapMW gw_mu(grad.data() + off_, out_, in_);
    Eigen::Map<RVec> gb_mu(grad.data() + off_ + in_ * out_, out_);

    gw_mu.noalias() += dy * x.transpose();
    gb_mu += dy;
    RVec dx = w_mu.transpose() * dy;

    if (noisy_ && with_noise) {
        const int s = off_ + in_ * out_ + out_;
        MapM w_sig(flat.data() + s, out_, in_);
        MapMW gw_sig(grad.data() + s, out_, in_);
        Eigen::Map<RVec> gb_sig(grad.data() + s + in_ * out_, out_);
        const RVec dy_f = dy.cwiseProduct(f_out_);
        gw_sig.noalias() += dy_f * f_in_.cwiseProduct(x).transpose();
        gb_sig += dy_f;
        dx += f_in_.cwiseProduct(w_sig.transpose() * dy_f);
    }
    return dx;
}

void NoisyLinear::clamp_sigma(RVec& flat) const {
    if (!noisy_) return;
    const int s = off_ + in_ * out_ + out_;
    for (int i = 0; i < in_ * out_ + out_; ++i) flat(s + i) = std::max(0.0, flat(s + i));
}

void NoisyLinear::tensor_names(const std::string& prefix,
                               std::vector<std::pair<std::string, std::pair<int, int>>>& out) const {
    out.push_back({prefix + ".w_mu", {out_, in_}});
    out.push_back({prefix + ".b_mu", {out_, 1}});
    if (noisy_) {
        out.push_back({prefix + ".w_sigma", {out_, in_}});
        out.push_back({prefix + ".b_sigma", {out_, 1}});
    }
}

QNetwork::QNetwork(const NetConfig& cfg, RngStream& rng) : cfg_(cfg) {
    if (cfg.obs_dim < 1 || cfg.arities.empty())
        throw std::invalid_argument("qnetwork: needs obs_dim >= 1 and >= 1 branch");
    int off = 0;
    l1_ = NoisyLinear(cfg.obs_dim, cfg.hidden1, cfg.noisy, off);
    off += l1_.param_count();
    l2_ = NoisyLinear(cfg.hidden1, cfg.hidden2, cfg.noisy, off);
    off += l2_.param_count();
    if (cfg.dueling) {
        value_ = NoisyLinear(cfg.hidden2, 1, cfg.noisy, off);
        off += value_.param_count();
    }
    heads_.reserve(cfg.arities.size());
    for (int a : cfg.arities) {
        if (a < 1) throw std::invalid_argument("qnetwork: branch arity must be >= 1");
        heads_.emplace_back(cfg.hidden2, a, cfg.noisy, off);
        off += heads_.back().param_count();
    }
    params_ = RVec::Zero(off);
    l1_.init_params(params_, cfg.sigma0, rng);
    l2_.init_params(params_, cfg.sigma0, rng);
    if (cfg.dueling) value_.init_params(params_, cfg.sigma0, rng);
    for (auto& h : heads_) h.init_params(params_, cfg.sigma0, rng);
}

void QNetwork::sample_noise(RngStream& rng) {
    l1_.sample_noise(rng);
    l2_.sample_noise(rng);
    if (cfg_.dueling) value_.sample_noise(rng);
    for (auto& h : heads_) h.sample_noise(rng);
}

ForwardCache QNetwork::forward(const RVec& obs, bool with_noise) const {
    if (obs.size() != cfg_.obs_dim) throw std::invalid_argument("qnetwork: observation size mismatch");
    ForwardCache c;
    c.x = obs;
    c.z1 = l1_.forward(params_, c.x, with_noise);
    c.a1 = c.z1.cwiseMax(0.0);
    c.z2 = l2_.forward(params_, c.a1, with_noise);
    c.a2 = c.z2.cwiseMax(0.0);
    if (cfg_.dueling) c.value = value_.forward(params_, c.a2, with_noise)(0);
    c.adv.reserve(heads_.size());
    c.q.reserve(heads_.size());
    for (const auto& h : heads_) {
        RVec adv = h.forward(params_, c.a2, with_noise);
        RVec q = cfg_.dueling ? RVec((adv.array() - adv.mean() + c.value).matrix()) : adv;
        c.adv.push_back(std::move(adv));
        c.q.push_back(std::move(q));
    }
    return c;
}

void QNetwork::backward(const ForwardCache& cache, const std::vector<int>& actions,
                        const std::vector<double>& dq, bool with_noise, RVec& grad) const {
    if (actions.size() != heads_.size() || dq.size() != heads_.size())
        throw std::invalid_argument("qnetwork backward: branch count mismatch");
    RVec da2 = RVec::Zero(cfg_.hidden2);
    double dvalue = 0.0;
    for (std::size_t b = 0; b < heads_.size(); ++b) {
        const int n = heads_[b].out_dim();
        RVec dadv = RVec::Zero(n);
        if (cfg_.dueling) {
            // Q[j] = V + A[j] - mean(A): chosen-index grad spreads through the mean
            for (int j = 0; j < n; ++j)
                dadv(j) = dq[b] * ((j == actions[b] ? 1.0 : 0.0) - 1.0 / n);
            dvalue += dq[b];
        } else {
            dadv(actions[b]) = dq[b];
        }
        da2 += heads_[b].backward(params_, dadv, cache.a2, with_noise, grad);
    }
    if (cfg_.dueling) {
        RVec dv(1);
        dv(0) = dvalue;
        da2 += value_.backward(params_, dv, cache.a2, with_noise, grad);
    }
    RVec dz2 = (cache.z2.array() > 0.0).select(da2, 0.0);
    RVec da1 = l2_.backward(params_, dz2, cache.a1, with_noise, grad);
    RVec dz1 = (cache.z1.array() > 0.0).select(da1, 0.0);
    l1_.backward(params_, dz1, cache.x, with_noise, grad);
}

void QNetwork::clamp_sigma() {
    l1_.clamp_sigma(params_);
    l2_.clamp_sigma(params_);
    if (cfg_.dueling) value_.clamp_sigma(params_);
    for (auto& h : heads_) h.clamp_sigma(params_);
}

std::vector<std::pair<std::string, std::pair<int, int>>> QNetwork::tensor_shapes() const {
    std::vector<std::pair<std::string, std::pair<int, int>>> out;
    l1_.tensor_names("trunk1", out);
    l2_.tensor_names("trunk2", out);
    if (cfg_.dueling) value_.tensor_names("value", out);
    for (std::size_t b = 0; b < heads_.size(); ++b)
        heads_[b].tensor_names("head" + std::to_string(b), out);
    return out;
}

std::vector<RVec> forward_q(const QNetwork& net, const Observation& obs, bool with_noise) {
    return net.forward(obs, with_noise).q;
}

std::vector<double> double_target(double reward, double gamma, bool done,
                                  const std::vector<RVec>& q_next_online,
                                  const std::vector<RVec>& q_next_target) {
    if (q_next_online.size() != q_next_target.size())
        throw std::invalid_argument("double_target: branch count mismatch");
    std::vector<double> y(q_next_online.size(), reward);
    if (done) return y;
    for (std::size_t b = 0; b < y.size(); ++b) {
        const int a = argmax_lowest(q_next_online[b]);
        y[b] = reward + gamma * q_next_target[b](a);
    }
    return y;
}

SumTree::SumTree(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("sum tree: capacity must be >= 1");
    tree_.assign(static_cast<std::size_t>(2 * capacity - 1), 0.0);
}

void SumTree::set(int leaf, double value) {
    if (leaf < 0 || leaf >= capacity_) throw std::out_of_range("sum tree: leaf out of range");
    if (!(value >= 0.0)) throw std::invalid_argument("sum tree: negative priority");
    int i = leaf + capacity_ - 1;
    double delta = value - tree_[static_cast<std::size_t>(i)];
    tree_[static_cast<std::size_t>(i)] = value;
    while (i != 0) {
        i = (i - 1) / 2;
        tree_[static_cast<std::size_t>(i)] += delta;
    }
}

double SumTree::get(int leaf) const { return tree_[static_cast<std::size_t>(leaf + capacity_ - 1)]; }

int SumTree::find(double value) const {
    int i = 0;
    while (i < capacity_ - 1) {
        const int left = 2 * i + 1;
        if (value < tree_[static_cast<std::size_t>(left)]) {
            i = left;
        } else {
            value -= tree_[static_cast<std::size_t>(left)];
            i = left + 1;
        }
    }
    return i - (capacity_ - 1);
}

bool SumTree::consistent(double rel_tol) const {
    for (int i = 0; i < capacity_ - 1; ++i) {
        const double l = tree_[static_cast<std::size_t>(2 * i + 1)];
        const double r = static_cast<std::size_t>(2 * i + 2) < tree_.size()
                             ? tree_[static_cast<std::size_t>(2 * i + 2)]
                             : 0.0;
        const double s = tree_[static_cast<std::size_t>(i)];
        if (std::abs(s - (l + r)) > rel_tol * std::max(1.0, std::abs(s))) return false;
    }
    return true;
}

PerBuffer::PerBuffer(const PerConfig& cfg)
    : cfg_(cfg), data_(static_cast<std::size_t>(cfg.capacity)), tree_(cfg.capacity) {
    if (cfg.capacity < 1) throw std::invalid_argument("per buffer: capacity must be >= 1");
    if (cfg.alpha < 0.0) throw std::invalid_argument("per buffer: alpha must be >= 0");
}

void PerBuffer::insert(Transition t) {
    data_[static_cast<std::size_t>(write_)] = std::move(t);
    tree_.set(write_, std::pow(max_raw_, cfg_.alpha));
    write_ = (write_ + 1) % cfg_.capacity;
    size_ = std::min(size_ + 1, cfg_.capacity);
}

SampleBatch PerBuffer::sample(int n, double beta, RngStream& rng) {
    if (n < 1 || n > size_) throw std::runtime_error("per buffer: batch larger than stored transitions");
    SampleBatch out;
    out.indices.resize(static_cast<std::size_t>(n));
    out.items.resize(static_cast<std::size_t>(n));
    out.weights = RVec::Zero(n);
    const double total = tree_.total();
    if (!(total > 0.0)) throw std::runtime_error("per buffer: empty priority mass");
    const double seg = total / n;
    for (int i = 0; i < n; ++i) {
        const double v = rng.uniform(seg * i, seg * (i + 1));
        int leaf = tree_.find(std::min(v, total * (1.0 - 1e-15)));
        leaf = std::min(leaf, size_ - 1);  // guard: unfilled leaves carry zero mass
        out.indices[static_cast<std::size_t>(i)] = leaf;
        out.items[static_cast<std::size_t>(i)] = &data_[static_cast<std::size_t>(leaf)];
        const double p = tree_.get(leaf) / total;
        out.weights(i) = std::pow(static_cast<double>(size_) * p, -beta);
    }
    out.weights /= out.weights.maxCoeff();
    return out;
}

SampleBatch PerBuffer::sample_uniform(int n, RngStream& rng) {
    if (n < 1 || n > size_) throw std::runtime_error("per buffer: batch larger than stored transitions");
    SampleBatch out;
    out.indices.resize(static_cast<std::size_t>(n));
    out.items.resize(static_cast<std::size_t>(n));
    out.weights = RVec::Ones(n);
    for (int i = 0; i < n; ++i) {
        const int idx = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(size_)));
        out.indices[static_cast<std::size_t>(i)] = idx;
        out.items[static_cast<std::size_t>(i)] = &data_[static_cast<std::size_t>(idx)];
    }
    return out;
}

void PerBuffer::update_priorities(const std::vector<int>& indices,
                                  const std::vector<double>& mean_abs_td) {
    if (indices.size() != mean_abs_td.size())
        throw std::invalid_argument("per buffer: priority update size mismatch");
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double raw = std::max(0.0, mean_abs_td[i]) + cfg_.priority_floor;
        max_raw_ = std::max(max_raw_, raw);
        tree_.set(indices[i], std::pow(raw, cfg_.alpha));
    }
}

Agent::Agent(const AgentConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(RngStream(seed).substream(0x6167656e)), buffer_(cfg.per) {
    RngStream init = RngStream(seed).substream(0x696e6974);
    online_ = QNetwork(cfg_.net, init);
    target_ = online_;
    adam_m_ = RVec::Zero(online_.n_params());
    adam_v_ = RVec::Zero(online_.n_params());
}

double Agent::epsilon() const {
    if (!cfg_.epsilon_greedy) return 0.0;
    const double t = std::min(1.0, static_cast<double>(env_steps_) /
                                       std::max(1, cfg_.eps_anneal_steps));
    return cfg_.eps_start + (cfg_.eps_end - cfg_.eps_start) * t;
}

FactoredAction Agent::select_action(const Observation& obs,
                                    const std::vector<std::uint8_t>& kinematic_mask,
                                    const env::ActionSpace& space, bool explore) {
    const auto arities = space.arities();
    const int ld = arities[0], lh = arities[1];
    if (static_cast<int>(kinematic_mask.size()) != ld * lh)
        throw std::invalid_argument("select_action: mask size mismatch");

    std::vector<int> idx(arities.size(), 0);

    if (explore && cfg_.epsilon_greedy && rng_.next_double() < epsilon()) {
        std::vector<int> feasible;
        for (int p = 0; p < ld * lh; ++p)
            if (kinematic_mask[static_cast<std::size_t>(p)]) feasible.push_back(p);
        const int pick = feasible[static_cast<std::size_t>(rng_.next_below(feasible.size()))];
        idx[0] = pick / lh;
        idx[1] = pick % lh;
        for (std::size_t b = 2; b < idx.size(); ++b)
            idx[b] = static_cast<int>(rng_.next_below(static_cast<std::uint64_t>(arities[b])));
        return space.from_branch_indices(idx);
    }

    if (cfg_.net.noisy && explore) online_.sample_noise(rng_);
    const auto q = forward_q(online_, obs, cfg_.net.noisy && explore);

    // joint argmax over feasible (distance, heading) pairs; ties -> lowest index
    double best = -1e300;
    for (int i = 0; i < ld; ++i)
        for (int j = 0; j < lh; ++j) {
            if (!kinematic_mask[static_cast<std::size_t>(i * lh + j)]) continue;
            const double v = q[0](i) + q[1](j);
            if (v > best) {
                best = v;
                idx[0] = i;
                idx[1] = j;
            }
        }
    for (std::size_t b = 2; b < q.size(); ++b) idx[b] = argmax_lowest(q[b]);
    return space.from_branch_indices(idx);
}

void Agent::observe(Transition t) {
    buffer_.insert(std::move(t));
    ++env_steps_;
}

double td_loss_and_grad(const QNetwork& net, const std::vector<const Transition*>& batch,
                        const RVec& weights, const std::vector<std::vector<double>>& targets,
                        bool with_noise, RVec& grad, std::vector<double>* mean_abs_td) {
    const auto n = static_cast<int>(batch.size());
    if (n < 1 || weights.size() != n || targets.size() != batch.size())
        throw std::invalid_argument("td update: batch shape mismatch");
    grad = RVec::Zero(net.n_params());
    if (mean_abs_td) mean_abs_td->assign(batch.size(), 0.0);
    double loss = 0.0;
    const double nb = static_cast<double>(targets[0].size());
    for (int i = 0; i < n; ++i) {
        const auto& tr = *batch[static_cast<std::size_t>(i)];
        const auto cache = net.forward(tr.obs, with_noise);
        std::vector<double> dq(cache.q.size(), 0.0);
        double sq = 0.0, sa = 0.0;
        for (std::size_t b = 0; b < cache.q.size(); ++b) {
            const double td = targets[static_cast<std::size_t>(i)][b] - cache.q[b](tr.branch_actions[b]);
            sq += td * td;
            sa += std::abs(td);
            dq[b] = -2.0 * weights(i) * td / (n * nb);
        }
        loss += weights(i) * sq / nb;
        if (mean_abs_td) (*mean_abs_td)[static_cast<std::size_t>(i)] = sa / nb;
        net.backward(cache, tr.branch_actions, dq, with_noise, grad);
    }
    return loss / n;
}

std::pair<double, std::vector<double>> Agent::td_update(const std::vector<const Transition*>& batch,
                                                        const RVec& weights,
                                                        const std::vector<std::vector<double>>& targets) {
    RVec grad;
    std::vector<double> mean_abs;
    const double loss =
        td_loss_and_grad(online_, batch, weights, targets, cfg_.net.noisy, grad, &mean_abs);
    if (!std::isfinite(loss)) throw std::runtime_error("td_update: non-finite training loss");

    ++adam_t_;
    const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, adam_t_);
    const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, adam_t_);
    adam_m_ = cfg_.adam_beta1 * adam_m_ + (1.0 - cfg_.adam_beta1) * grad;
    adam_v_ = cfg_.adam_beta2 * adam_v_ + (1.0 - cfg_.adam_beta2) * grad.cwiseProduct(grad);
    online_.params() -= (cfg_.lr * (adam_m_ / bc1).array() /
                         ((adam_v_ / bc2).array().sqrt() + cfg_.adam_eps))
                            .matrix();
    online_.clamp_sigma();
    return {loss, mean_abs};
}

void Agent::soft_update() {
    target_.params() = cfg_.tau_bar * online_.params() + (1.0 - cfg_.tau_bar) * target_.params();
}

Agent::LearnInfo Agent::maybe_learn() {
    LearnInfo info;
    if (buffer_.size() < std::max(cfg_.warmup, cfg_.batch_size)) return info;

    const double t = std::min(1.0, static_cast<double>(learn_steps_) /
                                       std::max(1, cfg_.beta_anneal_steps));
    const double beta = cfg_.beta_start + (cfg_.beta_end - cfg_.beta_start) * t;
    SampleBatch batch = cfg_.uniform_replay ? buffer_.sample_uniform(cfg_.batch_size, rng_)
                                            : buffer_.sample(cfg_.batch_size, beta, rng_);

    if (cfg_.net.noisy) {
        online_.sample_noise(rng_);   // selection pass at s'
        target_.sample_noise(rng_);
    }
    std::vector<std::vector<double>> targets(batch.items.size());
    for (std::size_t i = 0; i < batch.items.size(); ++i) {
        const auto& tr = *batch.items[i];
        const auto qo = forward_q(online_, tr.next_obs, cfg_.net.noisy);
        const auto qt = forward_q(target_, tr.next_obs, cfg_.net.noisy);
        targets[i] = double_target(tr.reward * cfg_.reward_scale, cfg_.gamma, tr.done, qo, qt);
    }

    if (cfg_.net.noisy) online_.sample_noise(rng_);  // training pass at s
    auto [loss, prios] = td_update(batch.items, batch.weights, targets);
    if (!cfg_.uniform_replay) buffer_.update_priorities(batch.indices, prios);

    ++learn_steps_;
    if (learn_steps_ % cfg_.target_period == 0) soft_update();
    info.learned = true;
    info.loss = loss;
    return info;
}

AgentConfig make_ddqn_baseline(AgentConfig cfg) {
    cfg.net.dueling = false;
    cfg.net.noisy = false;
    cfg.epsilon_greedy = true;
    cfg.uniform_replay = true;  // double targets stay on
    return cfg;
}

}  // namespace uavdc::agent
