#include <cmath>
#include <vector>

#include "doctest.h"
#include "uavdc/agent.hpp"

using namespace uavdc;
using namespace uavdc::agent;

namespace {

NetConfig tiny_net(bool dueling, bool noisy) {
    NetConfig c;
    c.obs_dim = 2;
    c.hidden1 = 3;
    c.hidden2 = 3;
    c.arities = {2, 3};
    c.dueling = dueling;
    c.noisy = noisy;
    return c;
}

Transition make_transition(const RVec& obs, std::vector<int> actions, double reward, const RVec& next,
                           bool done) {
    Transition t;
    t.obs = obs;
    t.branch_actions = std::move(actions);
    t.reward = reward;
    t.next_obs = next;
    t.done = done;
    return t;
}

env::ActionSpace space_for(const std::vector<int>& arities, int n_nodes, int codebook) {
    env::ActionSpace sp;
    for (int i = 0; i < arities[0]; ++i) sp.distance_levels.push_back(5.0 + i);
    for (int i = 0; i < arities[1]; ++i) sp.heading_levels.push_back(0.1 * i);
    for (int i = 0; i < arities[2]; ++i) sp.power_levels_w.push_back(0.05 * i);
    sp.n_nodes = n_nodes;
    sp.codebook_size = codebook;
    return sp;
}

}  // namespace

TEST_CASE("dueling aggregation on a hand-set 1-1-1 net") {
    NetConfig c;
    c.obs_dim = 1;
    c.hidden1 = 1;
    c.hidden2 = 1;
    c.arities = {3};
    c.dueling = true;
    c.noisy = false;
    RngStream rng(1);
    QNetwork net(c, rng);
    REQUIRE(net.n_params() == 12);
    // [l1.w, l1.b, l2.w, l2.b, value.w, value.b, head.w(3), head.b(3)]
    RVec p = RVec::Zero(12);
    p(1) = 1.0;  // a1 = relu(1)
    p(3) = 1.0;  // a2 = relu(1)
    p(5) = 1.0;  // V = 1
    p(9) = 1.0;  // A = (1, 2, 3)
    p(10) = 2.0;
    p(11) = 3.0;
    net.params() = p;
    RVec obs(1);
    obs(0) = 0.7;
    const auto q = forward_q(net, obs, false);
    REQUIRE(q.size() == 1);
    CHECK(q[0](0) == doctest::Approx(0.0));
    CHECK(q[0](1) == doctest::Approx(1.0));
    CHECK(q[0](2) == doctest::Approx(2.0));

    // adding a constant to every advantage of the branch leaves Q unchanged
    RVec shifted = p;
    for (int i = 9; i < 12; ++i) shifted(i) += 17.0;
    net.params() = shifted;
    const auto q2 = forward_q(net, obs, false);
    for (int i = 0; i < 3; ++i) CHECK(q2[0](i) == doctest::Approx(q[0](i)));
}

TEST_CASE("branch mean of dueling Q equals the state value") {
    RngStream rng(5);
    QNetwork net(tiny_net(true, false), rng);
    RVec obs(2);
    obs << 0.3, -0.8;
    const auto cache = net.forward(obs, false);
    for (const auto& q : cache.q) CHECK(q.mean() == doctest::Approx(cache.value).epsilon(1e-12));
}

TEST_CASE("noise off makes the forward pass deterministic") {
    RngStream rng(9);
    QNetwork net(tiny_net(true, true), rng);
    net.sample_noise(rng);
    RVec obs(2);
    obs << 1.0, 2.0;
    const auto a = forward_q(net, obs, false);
    net.sample_noise(rng);  // resampling must not matter with noise off
    const auto b = forward_q(net, obs, false);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK((a[i] - b[i]).norm() == 0.0);
}

TEST_CASE("zero noise scales make the noisy pass equal the mean pass") {
    RngStream rng(11);
    NetConfig c = tiny_net(false, true);
    QNetwork net(c, rng);
    net.sample_noise(rng);
    RVec obs(2);
    obs << -0.4, 0.9;
    const auto with_sigma = forward_q(net, obs, true);
    const auto mean_only = forward_q(net, obs, false);
    bool differs = false;
    for (std::size_t i = 0; i < with_sigma.size(); ++i)
        differs = differs || (with_sigma[i] - mean_only[i]).norm() > 1e-12;
    CHECK(differs);  // sigma0 > 0 and sampled noise: the paths must differ

    QNetwork probe = net;  // copies parameters and the sampled noise
    int off = 0;
    int zeroed = 0;
    for (const auto& [name, shape] : probe.tensor_shapes()) {
        const int count = shape.first * shape.second;
        if (name.find("sigma") != std::string::npos) {
            probe.params().segment(off, count).setZero();
            zeroed += count;
        }
        off += count;
    }
    REQUIRE(off == probe.n_params());
    REQUIRE(zeroed == probe.n_params() / 2);
    const auto a = forward_q(probe, obs, true);
    const auto b = forward_q(probe, obs, false);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK((a[i] - b[i]).norm() == 0.0);
}

TEST_CASE("double targets") {
    std::vector<RVec> q_online(1), q_target(1);
    q_online[0] = RVec(2);
    q_online[0] << 1.0, 2.0;
    q_target[0] = RVec(2);
    q_target[0] << 5.0, 3.0;
    const auto y = double_target(1.0, 0.9, false, q_online, q_target);
    REQUIRE(y.size() == 1);
    CHECK(y[0] == doctest::Approx(3.7));  // argmax online = 1, bootstrap 3

    const auto done = double_target(1.0, 0.9, true, q_online, q_target);
    CHECK(done[0] == doctest::Approx(1.0));

    // online == target degenerates to the plain max target
    const auto same = double_target(0.5, 0.9, false, q_target, q_target);
    CHECK(same[0] == doctest::Approx(0.5 + 0.9 * 5.0));

    // ties pick the lowest index
    std::vector<RVec> tie(1);
    tie[0] = RVec(3);
    tie[0] << 2.0, 2.0, 1.0;
    std::vector<RVec> tgt(1);
    tgt[0] = RVec(3);
    tgt[0] << 10.0, 20.0, 30.0;
    CHECK(double_target(0.0, 1.0, false, tie, tgt)[0] == doctest::Approx(10.0));
}

TEST_CASE("sum tree arithmetic") {
    SumTree t(4);
    t.set(0, 1.0);
    t.set(1, 2.0);
    t.set(2, 3.0);
    t.set(3, 4.0);
    CHECK(t.total() == doctest::Approx(10.0));
    CHECK(t.find(2.5) == 1);  // prefix sums (1, 3, 6, 10)
    CHECK(t.find(0.0) == 0);
    CHECK(t.find(0.999) == 0);
    CHECK(t.find(1.0) == 1);  // half-open leaf ranges
    CHECK(t.find(5.999) == 2);
    CHECK(t.find(6.0) == 3);
    CHECK(t.find(9.999) == 3);
    CHECK(t.consistent(1e-12));

    t.set(1, 0.5);
    CHECK(t.total() == doctest::Approx(8.5));
    CHECK(t.consistent(1e-12));
}

TEST_CASE("sum tree root stays the leaf sum over random updates") {
    SumTree t(16);
    RngStream r(3);
    std::vector<double> leaves(16, 0.0);
    for (int op = 0; op < 10000; ++op) {
        const int i = static_cast<int>(r.next_below(16));
        leaves[i] = r.uniform(0.0, 5.0);
        t.set(i, leaves[i]);
    }
    double sum = 0.0;
    for (double v : leaves) sum += v;
    CHECK(t.total() == doctest::Approx(sum).epsilon(1e-12));
    CHECK(t.consistent(1e-9));
}

TEST_CASE("uniform priorities sample uniformly (chi-square, 3 sigma)") {
    PerConfig pc;
    pc.capacity = 8;
    PerBuffer buf(pc);
    RVec obs = RVec::Zero(1);
    for (int i = 0; i < 8; ++i) buf.insert(make_transition(obs, {0}, 0.0, obs, false));

    RngStream r(17);
    std::vector<double> counts(8, 0.0);
    const int batches = 25000;
    for (int b = 0; b < batches; ++b) {
        const auto s = buf.sample(4, 0.4, r);
        for (int idx : s.indices) counts[static_cast<std::size_t>(idx)] += 1.0;
        for (int i = 0; i < s.weights.size(); ++i) CHECK(s.weights(i) == doctest::Approx(1.0));
    }
    const double n = 4.0 * batches;
    const double expect = n / 8.0;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
    // df = 7: mean 7, sd sqrt(14)
    CHECK(chi2 < 7.0 + 3.0 * std::sqrt(14.0));
}

TEST_CASE("priority updates drive the tree and the max-seen insert level") {
    PerConfig pc;
    pc.capacity = 8;
    pc.alpha = 0.6;
    pc.priority_floor = 1e-3;
    PerBuffer buf(pc);
    RVec obs = RVec::Zero(1);
    for (int i = 0; i < 4; ++i) buf.insert(make_transition(obs, {0}, 0.0, obs, false));
    // fresh inserts enter at max seen raw priority (1.0 initially)
    for (int i = 0; i < 4; ++i) CHECK(buf.tree().get(i) == doctest::Approx(1.0));

    buf.update_priorities({0, 1, 2, 3}, {0.5, 0.0, 2.0, 1.0});
    CHECK(buf.tree().get(0) == doctest::Approx(std::pow(0.5 + 1e-3, 0.6)));
    CHECK(buf.tree().get(1) == doctest::Approx(std::pow(1e-3, 0.6)));  // zero TD -> floor
    CHECK(buf.tree().get(2) == doctest::Approx(std::pow(2.0 + 1e-3, 0.6)));
    CHECK(buf.tree().get(3) == doctest::Approx(std::pow(1.0 + 1e-3, 0.6)));
    CHECK(buf.tree().consistent(1e-12));

    buf.insert(make_transition(obs, {0}, 0.0, obs, false));
    CHECK(buf.tree().get(4) == doctest::Approx(std::pow(2.0 + 1e-3, 0.6)));  // max seen

    RngStream r(3);
    const auto s = buf.sample(3, 0.7, r);
    for (int i = 0; i < s.weights.size(); ++i) {
        CHECK(s.weights(i) > 0.0);
        CHECK(s.weights(i) <= 1.0 + 1e-12);
    }
    CHECK_THROWS_AS((void)buf.sample(50, 0.4, r), std::runtime_error);
}

TEST_CASE("IS weights compensate sampling probability") {
    PerConfig pc;
    pc.capacity = 4;
    pc.alpha = 1.0;
    PerBuffer buf(pc);
    RVec obs = RVec::Zero(1);
    for (int i = 0; i < 4; ++i) buf.insert(make_transition(obs, {0}, 0.0, obs, false));
    buf.update_priorities({0, 1, 2, 3}, {0.999, 0.999, 0.999, 3.999});  // raw 1,1,1,4 -> p = 1/7,...,4/7
    RngStream r(5);
    bool saw_heavy = false;
    for (int t = 0; t < 50; ++t) {
        const auto s = buf.sample(2, 1.0, r);
        for (std::size_t i = 0; i < s.indices.size(); ++i) {
            // w_i = (N p_i)^-1 / max_j of the batch, all in (0, 1]
            CHECK(s.weights(static_cast<int>(i)) > 0.0);
            CHECK(s.weights(static_cast<int>(i)) <= 1.0 + 1e-12);
            saw_heavy = saw_heavy || s.indices[i] == 3;
        }
    }
    CHECK(saw_heavy);
}

TEST_CASE("soft update recurrence") {
    AgentConfig cfg;
    cfg.net = tiny_net(true, false);
    cfg.tau_bar = 0.05;
    Agent ag(cfg, 13);
    ag.online().params().setOnes();
    ag.target().params().setZero();
    ag.soft_update();
    CHECK(ag.target().params()(0) == doctest::Approx(0.05));
    CHECK((ag.target().params().array() - 0.05).abs().maxCoeff() < 1e-15);

    // gap shrinks by exactly (1 - tau_bar) per step
    double prev_gap = 1.0 - 0.05;
    for (int i = 0; i < 5; ++i) {
        ag.soft_update();
        const double gap = 1.0 - ag.target().params()(0);
        CHECK(gap == doctest::Approx(prev_gap * 0.95).epsilon(1e-12));
        prev_gap = gap;
    }

    AgentConfig full = cfg;
    full.tau_bar = 1.0;
    Agent ag2(full, 13);
    ag2.online().params().setConstant(0.37);
    ag2.target().params().setZero();
    ag2.soft_update();
    CHECK((ag2.target().params() - ag2.online().params()).norm() == 0.0);
}

TEST_CASE("select_action agrees with exhaustive enumeration") {
    AgentConfig cfg;
    cfg.net.obs_dim = 4;
    cfg.net.hidden1 = 8;
    cfg.net.hidden2 = 8;
    const int K = 2, CB = 3;
    cfg.net.arities = {3, 4, 3, 3, CB, CB};  // distance, heading, K powers, K beams
    cfg.net.dueling = true;
    cfg.net.noisy = false;
    Agent ag(cfg, 21);
    const auto space = space_for(cfg.net.arities, K, CB);

    RngStream r(22);
    for (int trial = 0; trial < 100; ++trial) {
        RVec obs(4);
        for (int i = 0; i < 4; ++i) obs(i) = r.uniform(-1, 1);
        std::vector<std::uint8_t> mask(3 * 4, 0);
        int feasible = 0;
        for (auto& m : mask) {
            m = r.next_below(2) ? 1 : 0;
            feasible += m;
        }
        if (feasible == 0) mask[r.next_below(12)] = 1;

        const auto act = ag.select_action(obs, mask, space, false);
        const auto q = forward_q(ag.online(), obs, false);

        int best_d = -1, best_h = -1;
        double best = -1e300;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j)
                if (mask[static_cast<std::size_t>(i * 4 + j)] && q[0](i) + q[1](j) > best) {
                    best = q[0](i) + q[1](j);
                    best_d = i;
                    best_h = j;
                }
        CHECK(act.distance_index == best_d);
        CHECK(act.heading_index == best_h);
        for (int k = 0; k < K; ++k) {
            int bp = 0;
            for (int i = 1; i < 3; ++i)
                if (q[2 + k](i) > q[2 + k](bp)) bp = i;
            CHECK(act.power_index[static_cast<std::size_t>(k)] == bp);
            int bb = 0;
            for (int i = 1; i < CB; ++i)
                if (q[2 + K + k](i) > q[2 + K + k](bb)) bb = i;
            CHECK(act.beam_index[static_cast<std::size_t>(k)] == bb);
        }
        // determinism with noise off
        const auto again = ag.select_action(obs, mask, space, false);
        CHECK(again.distance_index == act.distance_index);
        CHECK(again.heading_index == act.heading_index);
    }
}

TEST_CASE("single feasible pair and all-equal ties") {
    AgentConfig cfg;
    cfg.net.obs_dim = 2;
    cfg.net.hidden1 = 3;
    cfg.net.hidden2 = 3;
    cfg.net.arities = {2, 2, 2};
    cfg.net.dueling = false;
    cfg.net.noisy = false;
    Agent ag(cfg, 31);
    const auto space = space_for(cfg.net.arities, 1, 0);
    RVec obs = RVec::Zero(2);

    std::vector<std::uint8_t> only(4, 0);
    only[3] = 1;  // (distance 1, heading 1)
    const auto act = ag.select_action(obs, only, space, false);
    CHECK(act.distance_index == 1);
    CHECK(act.heading_index == 1);

    // all-equal Q: zero parameters make every head constant -> index 0
    ag.online().params().setZero();
    std::vector<std::uint8_t> all(4, 1);
    const auto tie = ag.select_action(obs, all, space, false);
    CHECK(tie.distance_index == 0);
    CHECK(tie.heading_index == 0);
    CHECK(tie.power_index[0] == 0);
}

TEST_CASE("analytic gradient matches central finite differences") {
    for (const bool dueling : {false, true}) {
        for (const bool noisy : {false, true}) {
            AgentConfig cfg;
            cfg.net = tiny_net(dueling, noisy);
            RngStream rng(101);
            QNetwork net(cfg.net, rng);
            if (noisy) net.sample_noise(rng);

            RngStream tr(7);
            std::vector<Transition> storage;
            for (int i = 0; i < 4; ++i) {
                RVec o(2), nx(2);
                o << tr.uniform(-1, 1), tr.uniform(-1, 1);
                nx << tr.uniform(-1, 1), tr.uniform(-1, 1);
                storage.push_back(make_transition(
                    o, {static_cast<int>(tr.next_below(2)), static_cast<int>(tr.next_below(3))},
                    tr.uniform(-1, 1), nx, false));
            }
            std::vector<const Transition*> batch;
            for (const auto& t : storage) batch.push_back(&t);
            RVec weights(4);
            weights << 1.0, 0.7, 0.4, 1.0;
            std::vector<std::vector<double>> targets(4, std::vector<double>{0.3, -0.2});

            RVec grad = RVec::Zero(net.n_params());
            (void)td_loss_and_grad(net, batch, weights, targets, noisy, grad);

            double max_rel = 0.0;
            const double h = 1e-6;
            for (int p = 0; p < net.n_params(); ++p) {
                QNetwork plus = net, minus = net;
                plus.params()(p) += h;
                minus.params()(p) -= h;
                RVec scratch = RVec::Zero(net.n_params());
                const double lp = td_loss_and_grad(plus, batch, weights, targets, noisy, scratch);
                scratch.setZero();
                const double lm = td_loss_and_grad(minus, batch, weights, targets, noisy, scratch);
                const double fd = (lp - lm) / (2.0 * h);
                const double rel = std::abs(fd - grad(p)) / std::max(1e-6, std::abs(fd) + std::abs(grad(p)));
                max_rel = std::max(max_rel, rel);
            }
            CHECK(max_rel < 1e-4);
        }
    }
}

TEST_CASE("zero TD error leaves parameters unchanged and priorities at the floor") {
    AgentConfig cfg;
    cfg.net = tiny_net(true, false);
    Agent ag(cfg, 41);
    RngStream r(42);

    std::vector<Transition> storage;
    for (int i = 0; i < 3; ++i) {
        RVec o(2), nx(2);
        o << r.uniform(-1, 1), r.uniform(-1, 1);
        nx << r.uniform(-1, 1), r.uniform(-1, 1);
        storage.push_back(make_transition(
            o, {static_cast<int>(r.next_below(2)), static_cast<int>(r.next_below(3))}, 0.0, nx, false));
    }
    std::vector<const Transition*> batch;
    std::vector<std::vector<double>> targets;
    for (const auto& t : storage) {
        batch.push_back(&t);
        const auto q = forward_q(ag.online(), t.obs, false);
        std::vector<double> y;
        for (std::size_t b = 0; b < q.size(); ++b)
            y.push_back(q[b](t.branch_actions[b]));
        targets.push_back(y);
    }
    RVec weights = RVec::Ones(3);
    const RVec before = ag.online().params();
    const auto [loss, tds] = ag.td_update(batch, weights, targets);
    CHECK(loss == doctest::Approx(0.0));
    for (double td : tds) CHECK(td == doctest::Approx(0.0));
    CHECK((ag.online().params() - before).norm() == 0.0);
}

TEST_CASE("zero learning rate keeps parameters bit-identical through learning") {
    AgentConfig cfg;
    cfg.net = tiny_net(true, true);
    cfg.lr = 0.0;
    cfg.warmup = 8;
    cfg.batch_size = 4;
    Agent ag(cfg, 51);
    const RVec before = ag.online().params();
    RngStream r(52);
    for (int i = 0; i < 40; ++i) {
        RVec o(2), nx(2);
        o << r.uniform(-1, 1), r.uniform(-1, 1);
        nx << r.uniform(-1, 1), r.uniform(-1, 1);
        ag.observe(make_transition(
            o, {static_cast<int>(r.next_below(2)), static_cast<int>(r.next_below(3))},
            r.uniform(-1, 1), nx, i % 10 == 9));
        ag.maybe_learn();
    }
    CHECK(ag.learn_steps() > 0);
    bool identical = true;
    for (int i = 0; i < before.size(); ++i)
        identical = identical && ag.online().params()(i) == before(i);
    CHECK(identical);
}

TEST_CASE("ddqn baseline differs from the fusion agent in exactly the named switches") {
    AgentConfig cfg;
    cfg.net = tiny_net(true, true);
    const AgentConfig dd = make_ddqn_baseline(cfg);
    CHECK_FALSE(dd.net.dueling);
    CHECK_FALSE(dd.net.noisy);
    CHECK(dd.epsilon_greedy);
    CHECK(dd.uniform_replay);
    // shared knobs untouched
    CHECK(dd.lr == cfg.lr);
    CHECK(dd.gamma == cfg.gamma);
    CHECK(dd.batch_size == cfg.batch_size);
    CHECK(dd.tau_bar == cfg.tau_bar);
    CHECK(dd.target_period == cfg.target_period);
}

TEST_CASE("epsilon schedule endpoints and midpoint") {
    AgentConfig cfg;
    cfg.net = tiny_net(false, false);
    cfg = make_ddqn_baseline(cfg);
    cfg.eps_start = 1.0;
    cfg.eps_end = 0.05;
    cfg.eps_anneal_steps = 100;
    Agent ag(cfg, 61);
    CHECK(ag.epsilon() == doctest::Approx(1.0));
    RVec o = RVec::Zero(2);
    for (int i = 0; i < 50; ++i) ag.observe(make_transition(o, {0, 0}, 0.0, o, false));
    CHECK(ag.epsilon() == doctest::Approx(0.5 * (1.0 + 0.05)));
    for (int i = 0; i < 100; ++i) ag.observe(make_transition(o, {0, 0}, 0.0, o, false));
    CHECK(ag.epsilon() == doctest::Approx(0.05));
}

TEST_CASE("epsilon 0 ddqn selects like the no-noise single-head fusion agent") {
    AgentConfig plain;
    plain.net = tiny_net(false, false);
    plain.epsilon_greedy = false;
    Agent fusion(plain, 71);

    AgentConfig dd = make_ddqn_baseline(plain);
    dd.eps_start = 0.0;
    dd.eps_end = 0.0;
    Agent baseline(dd, 71);  // same seed -> same initialization

    const auto space = space_for(plain.net.arities, 1, 0);
    RngStream r(72);
    for (int t = 0; t < 50; ++t) {
        RVec obs(2);
        obs << r.uniform(-1, 1), r.uniform(-1, 1);
        std::vector<std::uint8_t> mask(plain.net.arities[0] * plain.net.arities[1], 1);
        const auto a = fusion.select_action(obs, mask, space, true);
        const auto b = baseline.select_action(obs, mask, space, true);
        CHECK(a.distance_index == b.distance_index);
        CHECK(a.heading_index == b.heading_index);
        CHECK(a.power_index == b.power_index);
    }
}
