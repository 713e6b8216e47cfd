#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "uavdc/beamforming.hpp"
#include "uavdc/link.hpp"
#include "uavdc/rng.hpp"

using namespace uavdc;
using namespace uavdc::beam;

namespace {

CVec random_unit(int m, RngStream& r) {
    CVec v(m);
    for (int i = 0; i < m; ++i) v(i) = r.cnormal();
    return v / v.norm();
}

BeamInstance random_instance(int m, int s, RngStream& r, bool correlated = false) {
    BeamInstance ins;
    ins.noise_power = 1e-13;
    ins.channels.resize(m, s);
    CVec base(m);
    for (int i = 0; i < m; ++i) base(i) = r.cnormal();
    for (int k = 0; k < s; ++k) {
        CVec h(m);
        for (int i = 0; i < m; ++i) h(i) = r.cnormal();
        if (correlated && k > 0) h = base + 0.1 * h;  // nearly parallel channels
        const double gain = std::pow(10.0, r.uniform(-5.0, -3.5));  // amplitude scale
        ins.channels.col(k) = gain * h;
        ins.powers.push_back(r.uniform(0.02, 0.1));
        ins.node_ids.push_back(k);
    }
    return ins;
}

// interference-plus-noise and total Grams, evaluated with explicit loops
CMat gram_of(const BeamInstance& ins, int skip) {
    const int m = ins.m();
    CMat g = CMat::Zero(m, m);
    for (int j = 0; j < ins.size(); ++j) {
        if (j == skip) continue;
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b)
                g(a, b) += ins.powers[static_cast<std::size_t>(j)] * ins.channels(a, j) *
                           std::conj(ins.channels(b, j));
    }
    for (int a = 0; a < m; ++a) g(a, a) += ins.noise_power;
    return g;
}

double tr_prod(const CMat& a, const CMat& w) {  // Re tr(A W) by explicit loops
    Complex t(0, 0);
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t += a(i, j) * w(j, i);
    return t.real();
}

CMat random_psd(int m, RngStream& r) {  // PSD with trace <= 1
    CMat g(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) g(i, j) = r.cnormal();
    CMat w = g * g.adjoint();
    return w * (r.uniform(0.1, 1.0) / w.trace().real());
}

}  // namespace

TEST_CASE("mmse single node is the matched filter") {
    RngStream r(1);
    BeamInstance ins = random_instance(4, 1, r);
    const auto set = mmse_beamformers(ins);
    const CVec h = ins.channels.col(0);
    const double want_sinr = ins.powers[0] * h.squaredNorm() / ins.noise_power;
    CHECK(set.beams[0].rate_bps_hz == doctest::Approx(std::log2(1.0 + want_sinr)).epsilon(1e-12));
    // direction matches h up to a global phase
    const Complex c = h.normalized().dot(set.beams[0].w);
    CHECK(std::abs(c) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(set.beams[0].w.norm() == doctest::Approx(1.0));
}

TEST_CASE("mmse with orthogonal channels nulls the interference") {
    BeamInstance ins;
    ins.noise_power = 1e-13;
    ins.channels = CMat::Zero(2, 2);
    ins.channels(0, 0) = 1e-4;
    ins.channels(1, 1) = 1e-4;
    ins.powers = {0.1, 0.1};
    ins.node_ids = {0, 1};
    const auto set = mmse_beamformers(ins);
    const double want = std::log2(1.0 + 0.1 * 1e-8 / 1e-13);
    for (int k = 0; k < 2; ++k) {
        CHECK(set.beams[k].rate_bps_hz == doctest::Approx(want).epsilon(1e-12));
        CHECK(std::abs(set.beams[k].w(k)) == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("mmse beats 1e5 random unit vectors per node") {
    RngStream r(42);
    BeamInstance ins = random_instance(4, 3, r);
    const auto set = mmse_beamformers(ins);
    std::vector<double> p = ins.powers;
    for (int k = 0; k < 3; ++k) {
        double best = 0.0;
        RngStream rs(1000 + k);
        for (int t = 0; t < 100000; ++t) {
            const CVec w = random_unit(4, rs);
            best = std::max(best, link::sinr(w, ins.channels, p, k, ins.noise_power));
        }
        const double mmse_sinr = link::sinr(set.beams[k].w, ins.channels, p, k, ins.noise_power);
        CHECK(mmse_sinr >= best - 1e-9 * best);
        CHECK(set.beams[k].rate_bps_hz == doctest::Approx(std::log2(1.0 + mmse_sinr)).epsilon(1e-9));
    }
}

TEST_CASE("relaxed rate on rank-one lifts equals the vector rate") {
    RngStream r(7);
    BeamInstance ins = random_instance(4, 3, r);
    for (int k = 0; k < 3; ++k) {
        const CVec w = random_unit(4, r);
        const CMat W = w * w.adjoint();
        const double s = link::sinr(w, ins.channels, ins.powers, k, ins.noise_power);
        CHECK(relaxed_rate(W, ins, k) == doctest::Approx(std::log2(1.0 + s)).epsilon(1e-10));
    }
}

TEST_CASE("surrogate equals an independent term-by-term re-derivation") {
    RngStream r(12);
    BeamInstance ins = random_instance(3, 2, r);
    for (int k = 0; k < 2; ++k) {
        const CMat W = random_psd(3, r);
        const CMat Wl = random_psd(3, r);
        const CMat A = gram_of(ins, -1);
        const CMat B = gram_of(ins, k);
        const double al = tr_prod(B, Wl);
        const double want =
            std::log2(tr_prod(A, W)) - std::log2(al) - (tr_prod(B, W) - al) / (al * std::log(2.0));
        CHECK(taylor_lower_bound(W, Wl, ins, k) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("surrogate is tight at the expansion point and a global lower bound") {
    RngStream r(3);
    for (int trial = 0; trial < 200; ++trial) {
        BeamInstance ins = random_instance(3, 2, r, trial % 2 == 1);
        const int k = static_cast<int>(r.next_below(2));
        const CMat Wl = random_psd(3, r);
        const CMat W = random_psd(3, r);
        CHECK(std::abs(taylor_lower_bound(Wl, Wl, ins, k) - relaxed_rate(Wl, ins, k)) < 1e-9);
        CHECK(taylor_lower_bound(W, Wl, ins, k) <= relaxed_rate(W, ins, k) + 1e-9);
    }
}

TEST_CASE("subproblem solver dominates random sampling and the expansion point") {
    RngStream r(21);
    for (int trial = 0; trial < 10; ++trial) {
        BeamInstance ins = random_instance(3, 2, r, trial % 2 == 1);
        SdpIterate it;
        for (int k = 0; k < ins.size(); ++k) {
            const CVec h = ins.channels.col(k);
            it.W.push_back(h * h.adjoint() / h.squaredNorm());
        }
        const auto res = solve_sdr_subproblem(it, ins);
        for (int k = 0; k < ins.size(); ++k) {
            const double solver_val = taylor_lower_bound(res.iterate.W[k], it.W[k], ins, k);
            CHECK(solver_val >= taylor_lower_bound(it.W[k], it.W[k], ins, k) - 1e-9);
            RngStream rs(500 + 10 * trial + k);
            for (int t = 0; t < 20000; ++t) {
                CMat W = t % 3 == 0 ? random_psd(3, rs) : CMat();
                if (W.size() == 0) {
                    const CVec v = random_unit(3, rs);
                    W = rs.uniform(0.2, 1.0) * (v * v.adjoint());
                }
                CHECK(solver_val >= taylor_lower_bound(W, it.W[k], ins, k) - 1e-8);
            }
        }
    }
}

TEST_CASE("single-node SCA attains the matched-filter optimum") {
    RngStream r(5);
    BeamInstance ins = random_instance(4, 1, r);
    const auto set = sca_optimize(ins);
    const double want = std::log2(1.0 + ins.powers[0] * ins.channels.col(0).squaredNorm() / ins.noise_power);
    CHECK(set.beams[0].rate_bps_hz == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("SCA relaxed objective is non-decreasing across iterations") {
    RngStream r(33);
    for (int trial = 0; trial < 8; ++trial) {
        BeamInstance ins = random_instance(4, 3, r, trial % 2 == 1);
        SdpIterate it;
        it.W.clear();
        for (int k = 0; k < ins.size(); ++k) {
            const CVec h = ins.channels.col(k);
            it.W.push_back(h * h.adjoint() / h.squaredNorm());
        }
        auto relaxed_sum = [&](const SdpIterate& s) {
            double v = 0.0;
            for (int k = 0; k < ins.size(); ++k) v += relaxed_rate(s.W[k], ins, k);
            return v;
        };
        double prev = relaxed_sum(it);
        for (int l = 0; l < 12; ++l) {
            const auto res = solve_sdr_subproblem(it, ins);
            it = res.iterate;
            const double cur = relaxed_sum(it);
            CHECK(cur >= prev - 1e-9);
            prev = cur;
        }
    }
}

TEST_CASE("SCA per-node rates match the MMSE oracle within 1e-3") {
    RngStream r(61);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 2 + 2 * static_cast<int>(r.next_below(3));  // 2, 4, 6
        const int s = 1 + static_cast<int>(r.next_below(3));
        BeamInstance ins = random_instance(m, s, r, trial % 3 == 2);
        const auto sca = sca_optimize(ins);
        const auto mmse = mmse_beamformers(ins);
        for (int k = 0; k < s; ++k)
            CHECK(std::abs(sca.beams[k].rate_bps_hz - mmse.beams[k].rate_bps_hz) <= 1e-3);
    }
}

TEST_CASE("rank-one recovery is exact on rank-one inputs") {
    RngStream r(19);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 3;
        const CVec v = random_unit(m, r);
        SdpIterate it;
        it.W.push_back(v * v.adjoint());
        CVec probe = random_unit(m, r);
        if (std::abs(probe.dot(v)) < 1e-3) continue;  // keep the probe informative
        const auto rec = rank_one_recover(it, {probe});
        // recovers v up to a global phase
        CHECK(std::abs(rec[0].dot(v)) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(rec[0].norm() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("recovered vector satisfies the trace-consistency identity") {
    RngStream r(29);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 4;
        // random PSD of rank 2
        const CVec v1 = random_unit(m, r), v2 = random_unit(m, r);
        CMat W = 0.6 * (v1 * v1.adjoint()) + 0.4 * (v2 * v2.adjoint());
        const CVec a = random_unit(m, r);
        SdpIterate it;
        it.W.push_back(W);
        const auto rec = rank_one_recover(it, {a});
        const double lhs = rec[0].squaredNorm();
        const double rhs = (a.adjoint() * W * W * a)(0).real() / (a.adjoint() * W * a)(0).real();
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
}

TEST_CASE("recovery preserves the relaxed rate on near-rank-one matrices") {
    RngStream r(37);
    for (int trial = 0; trial < 20; ++trial) {
        BeamInstance ins = random_instance(4, 2, r);
        const int k = static_cast<int>(r.next_below(2));
        const CVec v1 = random_unit(4, r), v2 = random_unit(4, r);
        const double eps = 1e-9;
        CMat W = (1.0 - eps) * (v1 * v1.adjoint()) + eps * (v2 * v2.adjoint());
        SdpIterate it;
        it.W.push_back(W);
        const auto rec = rank_one_recover(it, {ins.channels.col(k)});
        const CMat Wbar = rec[0] * rec[0].adjoint();
        CHECK(std::abs(relaxed_rate(Wbar, ins, k) - relaxed_rate(W, ins, k)) < 1e-6);
    }
}

TEST_CASE("zero probe overlap falls back to the dominant eigenvector") {
    SdpIterate it;
    CMat W = CMat::Zero(2, 2);
    W(1, 1) = 1.0;
    it.W.push_back(W);
    CVec probe = CVec::Zero(2);
    probe(0) = 1.0;  // orthogonal to the support
    const auto rec = rank_one_recover(it, {probe});
    CHECK(std::abs(rec[0](1)) == doctest::Approx(1.0));
}

TEST_CASE("fairness floors flag infeasibility without moving the argmax") {
    RngStream r(47);
    BeamInstance ins = random_instance(4, 2, r);
    const auto base = sca_optimize(ins);
    CHECK_FALSE(base.floor_infeasible);

    BeamInstance relaxed = ins;
    relaxed.rate_floors = {0.0, 0.0};
    const auto with_floor = sca_optimize(relaxed);
    CHECK_FALSE(with_floor.floor_infeasible);
    for (int k = 0; k < 2; ++k)
        CHECK(with_floor.beams[k].rate_bps_hz == doctest::Approx(base.beams[k].rate_bps_hz).epsilon(1e-12));

    BeamInstance impossible = ins;
    impossible.rate_floors = {1e6, 1e6};  // unreachable bits/s/Hz
    const auto flagged = sca_optimize(impossible);
    CHECK(flagged.floor_infeasible);
    for (int k = 0; k < 2; ++k)
        CHECK(flagged.beams[k].rate_bps_hz == doctest::Approx(base.beams[k].rate_bps_hz).epsilon(1e-12));
}

TEST_CASE("solutions are invariant to a joint channel/noise rescaling") {
    RngStream r(53);
    BeamInstance ins = random_instance(4, 2, r);
    BeamInstance scaled = ins;
    const double c = 37.5;
    scaled.channels *= c;
    scaled.noise_power *= c * c;
    const auto a = sca_optimize(ins), b = sca_optimize(scaled);
    const auto ma = mmse_beamformers(ins), mb = mmse_beamformers(scaled);
    for (int k = 0; k < 2; ++k) {
        CHECK(a.beams[k].rate_bps_hz == doctest::Approx(b.beams[k].rate_bps_hz).epsilon(1e-9));
        CHECK(ma.beams[k].rate_bps_hz == doctest::Approx(mb.beams[k].rate_bps_hz).epsilon(1e-9));
    }
}

TEST_CASE("DFT codebook structure") {
    const auto trivial = build_dft_codebook(1, 4);
    for (const auto& w : trivial.words) {
        CHECK(w.size() == 1);
        CHECK(w(0) == Complex(1.0, 0.0));
    }

    const auto two = build_dft_codebook(2, 2);
    CHECK(std::abs(two.words[0](0) - Complex(1.0 / std::sqrt(2.0), 0)) < 1e-12);
    CHECK(std::abs(two.words[0](1) - Complex(1.0 / std::sqrt(2.0), 0)) < 1e-12);
    CHECK(std::abs(two.words[1](0) - Complex(1.0 / std::sqrt(2.0), 0)) < 1e-12);
    CHECK(std::abs(two.words[1](1) - Complex(-1.0 / std::sqrt(2.0), 0)) < 1e-12);

    for (const auto& [m, size] : {std::pair{4, 8}, std::pair{8, 8}, std::pair{3, 5}}) {
        const auto cb = build_dft_codebook(m, size);
        REQUIRE(cb.size() == size);
        for (int i = 0; i < size; ++i) {
            CHECK(cb.words[i].norm() == doctest::Approx(1.0).epsilon(1e-12));
            for (int j = 0; j < size; ++j) {
                const double got = std::abs(cb.words[i].dot(cb.words[j]));
                const double d = kPi * (i - j) / size;
                const double want =
                    i == j ? 1.0 : std::abs(std::sin(m * d) / (m * std::sin(d)));
                CHECK(got == doctest::Approx(want).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("best codeword selection") {
    RngStream r(71);
    BeamInstance single = random_instance(4, 1, r);
    Codebook one;
    one.words.push_back(random_unit(4, r));
    CHECK(best_codeword(single, 0, one) == 0);

    // interference-free instance whose matched filter is in the codebook
    Codebook planted;
    planted.words.push_back(random_unit(4, r));
    planted.words.push_back(single.channels.col(0).normalized());
    planted.words.push_back(random_unit(4, r));
    CHECK(best_codeword(single, 0, planted) == 1);

    // ties resolve to the lowest index
    Codebook dup;
    dup.words.push_back(planted.words[1]);
    dup.words.push_back(planted.words[1]);
    CHECK(best_codeword(single, 0, dup) == 0);

    // random instance: matches a linear scan over link::sinr
    BeamInstance ins = random_instance(4, 3, r);
    const auto cb = build_dft_codebook(4, 8);
    for (int k = 0; k < 3; ++k) {
        int want = 0;
        double best = -1.0;
        for (int i = 0; i < cb.size(); ++i) {
            const double s = link::sinr(cb.words[i], ins.channels, ins.powers, k, ins.noise_power);
            if (s > best) {
                best = s;
                want = i;
            }
        }
        CHECK(best_codeword(ins, k, cb) == want);
    }
}

TEST_CASE("instance JSON round trip and validation") {
    const std::string text = R"({
        "noise_power": 1e-13,
        "nodes": [
            {"id": 3, "power": 0.1, "channel": [[1e-4, 0], [0, -2e-4]]},
            {"id": 5, "power": 0.05, "channel": [[0, 1e-4], [3e-4, 0]]}
        ],
        "rate_floors": [0.5, 0.25]
    })";
    const BeamInstance ins = instance_from_json(text);
    CHECK(ins.m() == 2);
    CHECK(ins.size() == 2);
    CHECK(ins.node_ids == std::vector<int>{3, 5});
    CHECK(ins.powers == std::vector<double>{0.1, 0.05});
    CHECK(ins.channels(1, 0) == Complex(0, -2e-4));
    CHECK(ins.channels(0, 1) == Complex(0, 1e-4));
    CHECK(ins.rate_floors == std::vector<double>{0.5, 0.25});

    const auto set = mmse_beamformers(ins);
    const std::string out = set_to_json(set);
    CHECK(out.find("beamformers") != std::string::npos);
    CHECK(out.find("rate_bps_hz") != std::string::npos);
    CHECK(out.find("diagnostics") != std::string::npos);

    CHECK_THROWS((void)instance_from_json("{\"noise_power\": 1}"));
    CHECK_THROWS((void)instance_from_json(
        R"({"noise_power": 1, "nodes": [{"id": 0, "power": 1, "channel": []}]})"));
}
