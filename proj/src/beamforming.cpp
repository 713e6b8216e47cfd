#include "uavdc/beamforming.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "uavdc/link.hpp"

namespace uavdc::beam {

namespace {

constexpr double kLog2e = 1.4426950408889634;  // 1/ln 2

// A_k = sum_i P_i h_i h_i^H + sigma^2 I (signal+interference+noise Gram);
// B_k = A_k - P_k h_k h_k^H (interference+noise).
CMat gram_all(const BeamInstance& ins) {
    CMat a = ins.noise_power * CMat::Identity(ins.m(), ins.m());
    for (int i = 0; i < ins.size(); ++i)
        a += ins.powers[static_cast<std::size_t>(i)] * ins.channels.col(i) * ins.channels.col(i).adjoint();
    return a;
}

CMat gram_without(const CMat& a, const BeamInstance& ins, int k) {
    return a - ins.powers[static_cast<std::size_t>(k)] * ins.channels.col(k) * ins.channels.col(k).adjoint();
}

double re_trace(const CMat& x, const CMat& w) { return (x * w).trace().real(); }

double quad(const CMat& x, const CVec& v) { return (v.adjoint() * x * v).value().real(); }

struct NodeSubproblem {
    CMat A, L;
    double c0 = 0.0;  // surrogate offset: log2(e) - log2(a_l)

    double f(const CMat& w) const { return std::log2(re_trace(A, w)) - re_trace(L, w); }
    double f(double x, double y) const { return std::log2(x) - y; }
    double surrogate(const CMat& w) const { return f(w) + c0; }
};

NodeSubproblem make_subproblem(const CMat& a_all, const BeamInstance& ins, int k, const CMat& w_l) {
    NodeSubproblem sp;
    sp.A = a_all;
    const CMat b = gram_without(a_all, ins, k);
    const double a_l = re_trace(b, w_l);
    if (!(a_l > 0.0)) throw std::runtime_error("solve_sdr_subproblem: non-positive linearization point");
    sp.L = (kLog2e / a_l) * b;
    sp.c0 = kLog2e - std::log2(a_l);
    return sp;
}

// Maximizes f(W) = log2(tr(A W)) - tr(L W) over {W PSD, tr W <= 1}. Since f
// sees W only through x = tr(A W) and y = tr(L W), the optimum sits on the
// southeast frontier of the attainable (x, y) set, traced by top eigenvectors
// of c A - L as c >= 0 varies; f along that frontier is unimodal in c. Golden
// section over log c, then closed-form trace re-optimization; the expansion
// point and matched filter serve as safety candidates.
CMat maximize_node(const NodeSubproblem& sp, const CMat& w_l, const CVec& h, double tol) {
    const Eigen::Index m = sp.A.rows();
    CMat best_w = w_l;
    double best_f = sp.f(w_l);

    auto consider = [&](const CMat& w) {
        const double v = sp.f(w);
        if (v > best_f) {
            best_f = v;
            best_w = w;
        }
    };

    const double hn = h.squaredNorm();
    if (hn > 1e-300) consider((h * h.adjoint()) / hn);

    Eigen::SelfAdjointEigenSolver<CMat> es_a(sp.A);
    const double lam_a = es_a.eigenvalues().maxCoeff();
    const double x_lb = std::exp2(std::min(best_f, std::log2(lam_a)));  // x* >= 2^{f*}
    double u_lo = std::log(1.0 / (std::log(2.0) * lam_a));
    double u_hi = std::log(1.0 / (std::log(2.0) * std::max(x_lb, 1e-300)));
    if (u_hi < u_lo) std::swap(u_lo, u_hi);
    u_lo -= 1e-3;  // cover boundary optima
    u_hi += 1e-3;

    Eigen::SelfAdjointEigenSolver<CMat> es;
    double best_u = u_hi;
    double best_phi = -1e300;
    auto phi = [&](double u) {
        CMat g = std::exp(u) * sp.A - sp.L;
        es.compute(g);
        const Eigen::Index top = m - 1;
        if (es.eigenvalues()(top) <= 0.0) return -1e300;
        const CVec v = es.eigenvectors().col(top);
        const double val = sp.f(quad(sp.A, v), quad(sp.L, v));
        if (val > best_phi) {
            best_phi = val;
            best_u = u;
        }
        return val;
    };

    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = u_lo, b = u_hi;
    double c1 = b - invphi * (b - a), c2 = a + invphi * (b - a);
    double f1 = phi(c1), f2 = phi(c2);
    const double u_tol = std::max(tol, 1e-13);
    for (int it = 0; it < 256 && (b - a) > u_tol; ++it) {
        if (f1 < f2) {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + invphi * (b - a);
            f2 = phi(c2);
        } else {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - invphi * (b - a);
            f1 = phi(c1);
        }
    }

    if (best_phi > -1e299) {
        CMat g = std::exp(best_u) * sp.A - sp.L;
        es.compute(g);
        const CVec v = es.eigenvectors().col(m - 1);
        const double y = quad(sp.L, v);
        consider(v * v.adjoint());
        if (y > 0.0) {
            const double t = std::min(1.0, 1.0 / (std::log(2.0) * y));  // interior trace optimum
            consider(t * (v * v.adjoint()));
        }
    }
    return best_w;
}

CVec recover_one(const CMat& w, const CVec& probe) {
    CVec a = probe;
    double s = quad(w, a);
    if (!(s > 1e-12)) {
        Eigen::SelfAdjointEigenSolver<CMat> es(w);
        a = es.eigenvectors().col(w.rows() - 1);
        s = quad(w, a);
        if (!(s > 0.0)) return CVec::Zero(w.rows());
    }
    CVec out = (w * a) / std::sqrt(s);
    const double n = out.norm();
    if (n > 1.0) out /= n;  // numerical guard; construction keeps ||w|| <= 1
    return out;
}

}  // namespace

void BeamInstance::validate() const {
    if (channels.cols() < 1) throw std::invalid_argument("beam instance: needs >= 1 scheduled node");
    if (channels.rows() < 1) throw std::invalid_argument("beam instance: needs >= 1 antenna");
    if (powers.size() != static_cast<std::size_t>(channels.cols()))
        throw std::invalid_argument("beam instance: power/channel size mismatch");
    if (node_ids.size() != powers.size())
        throw std::invalid_argument("beam instance: node id/channel size mismatch");
    if (!rate_floors.empty() && rate_floors.size() != powers.size())
        throw std::invalid_argument("beam instance: rate floor size mismatch");
    if (!(noise_power > 0.0)) throw std::invalid_argument("beam instance: noise power must be > 0");
    for (double p : powers)
        if (p < 0.0) throw std::invalid_argument("beam instance: negative power");
}

BeamformerSet mmse_beamformers(const BeamInstance& instance) {
    instance.validate();
    const CMat r = gram_all(instance);
    Eigen::LDLT<CMat> ldlt(r);
    BeamformerSet out;
    out.beams.resize(static_cast<std::size_t>(instance.size()));
    for (int k = 0; k < instance.size(); ++k) {
        const CVec h = instance.channels.col(k);
        CVec w = ldlt.solve(h);
        const double q = h.dot(w).real();  // h^H R^{-1} h, real and >= 0
        const double n = w.norm();
        if (n > 0.0) w /= n;
        auto& beam = out.beams[static_cast<std::size_t>(k)];
        beam.node_id = instance.node_ids[static_cast<std::size_t>(k)];
        beam.w = w;
        const double pk = instance.powers[static_cast<std::size_t>(k)];
        // Sherman-Morrison: SINR = P q / (1 - P q) with q = h^H R^{-1} h
        const double pq = std::min(pk * q, 1.0 - 1e-15);
        beam.rate_bps_hz = std::log2(1.0 + pq / (1.0 - pq));
        out.objective += beam.rate_bps_hz;
    }
    return out;
}

double relaxed_rate(const CMat& W, const BeamInstance& instance, int k) {
    const CMat a = gram_all(instance);
    const CMat b = gram_without(a, instance, k);
    return std::log2(re_trace(a, W)) - std::log2(re_trace(b, W));
}

double taylor_lower_bound(const CMat& W, const CMat& W_l, const BeamInstance& instance, int k) {
    const CMat a = gram_all(instance);
    const CMat b = gram_without(a, instance, k);
    const double a_l = re_trace(b, W_l);
    if (!(a_l > 0.0)) throw std::invalid_argument("taylor_lower_bound: degenerate expansion point");
    return std::log2(re_trace(a, W)) - std::log2(a_l) - kLog2e * (re_trace(b, W) - a_l) / a_l;
}

SubproblemResult solve_sdr_subproblem(const SdpIterate& W_l, const BeamInstance& instance,
                                      double tolerance) {
    instance.validate();
    if (W_l.W.size() != static_cast<std::size_t>(instance.size()))
        throw std::invalid_argument("solve_sdr_subproblem: iterate/instance size mismatch");

    const CMat a_all = gram_all(instance);
    SubproblemResult res;
    res.iterate.W.resize(W_l.W.size());
    res.iterate.iteration = W_l.iteration + 1;
    for (int k = 0; k < instance.size(); ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const NodeSubproblem sp = make_subproblem(a_all, instance, k, W_l.W[ku]);
        CMat w = maximize_node(sp, W_l.W[ku], instance.channels.col(k), tolerance);
        w = 0.5 * (w + w.adjoint().eval());  // keep exactly Hermitian
        // Monotone safeguard on the true relaxed rate: a candidate that wins
        // on the surrogate by less than the evaluation noise of a nearly
        // nulled interference trace can still lose on the relaxed rate, so
        // keep the expansion point unless the candidate genuinely improves.
        if (relaxed_rate(w, instance, k) < relaxed_rate(W_l.W[ku], instance, k)) w = W_l.W[ku];
        const double val = sp.surrogate(w);
        res.objective += val;
        if (!instance.rate_floors.empty() && instance.rate_floors[ku] > 0.0 &&
            val < instance.rate_floors[ku] - 1e-9)
            res.floor_infeasible = true;  // floor dropped: val is already the unconstrained max
        res.iterate.W[ku] = std::move(w);
    }
    return res;
}

std::vector<CVec> rank_one_recover(const SdpIterate& W_star, const std::vector<CVec>& probes) {
    if (probes.size() != W_star.W.size())
        throw std::invalid_argument("rank_one_recover: probe count mismatch");
    std::vector<CVec> out(W_star.W.size());
    for (std::size_t k = 0; k < W_star.W.size(); ++k) out[k] = recover_one(W_star.W[k], probes[k]);
    return out;
}

BeamformerSet sca_optimize(const BeamInstance& instance, const ScaParams& params) {
    instance.validate();
    const int s = instance.size();

    SdpIterate cur;
    cur.W.resize(static_cast<std::size_t>(s));
    std::vector<CVec> probes(static_cast<std::size_t>(s));
    const CMat a_all = gram_all(instance);
    for (int k = 0; k < s; ++k) {
        const CVec h = instance.channels.col(k);
        probes[static_cast<std::size_t>(k)] = h;
        const double hn = h.squaredNorm();
        CMat w = hn > 1e-300 ? CMat((h * h.adjoint()) / hn)
                             : CMat(CMat::Identity(instance.m(), instance.m()) / instance.m());
        if (hn > 1e-300) {
            // Interference-whitened matched filter. The Taylor surrogate is
            // nearly flat in the suppression direction when the expansion
            // point is interference-dominated, so a matched-filter-only start
            // can creep for thousands of iterations; whitening gives the
            // suppression-side candidate and the better start wins.
            const CMat b = gram_without(a_all, instance, k);
            const CVec v = b.ldlt().solve(h);
            const double vn = v.squaredNorm();
            if (vn > 1e-300 && v.allFinite()) {
                const CMat cand = CMat((v * v.adjoint()) / vn);
                if (relaxed_rate(cand, instance, k) > relaxed_rate(w, instance, k)) w = cand;
            }
        }
        cur.W[static_cast<std::size_t>(k)] = std::move(w);
    }

    auto relaxed_sum = [&](const SdpIterate& it) {
        double v = 0.0;
        for (int k = 0; k < s; ++k) v += relaxed_rate(it.W[static_cast<std::size_t>(k)], instance, k);
        return v;
    };

    BeamformerSet out;
    double prev = relaxed_sum(cur);
    for (int l = 0; l < params.max_iters; ++l) {
        SubproblemResult r = solve_sdr_subproblem(cur, instance, params.subproblem_tol);
        cur = std::move(r.iterate);
        out.floor_infeasible = out.floor_infeasible || r.floor_infeasible;
        out.iterations = l + 1;
        const double obj = relaxed_sum(cur);
        const double gain = obj - prev;
        prev = obj;
        if (gain < params.epsilon) break;
    }
    out.objective = prev;

    const std::vector<CVec> ws = rank_one_recover(cur, probes);
    out.beams.resize(static_cast<std::size_t>(s));
    out.rank_ratio.resize(static_cast<std::size_t>(s), 0.0);
    Eigen::SelfAdjointEigenSolver<CMat> es;
    for (int k = 0; k < s; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        CVec w = ws[ku];
        if (w.squaredNorm() < 1e-30) {
            const CVec h = instance.channels.col(k);
            w = h.squaredNorm() > 1e-300 ? CVec(h / h.norm()) : CVec(CVec::Unit(instance.m(), 0));
        }
        out.beams[ku].node_id = instance.node_ids[ku];
        out.beams[ku].w = w;
        out.beams[ku].rate_bps_hz =
            link::rate(link::sinr(w, instance.channels, instance.powers, k, instance.noise_power));
        es.compute(cur.W[ku]);
        const auto& ev = es.eigenvalues();
        const double l1 = ev(ev.size() - 1);
        const double l2 = ev.size() > 1 ? std::max(0.0, ev(ev.size() - 2)) : 0.0;
        out.rank_ratio[ku] = l1 > 0.0 ? l2 / l1 : 0.0;
    }
    return out;
}

Codebook build_dft_codebook(int m, int size) {
    if (m < 1 || size < 1) throw std::invalid_argument("build_dft_codebook: m and size must be >= 1");
    Codebook cb;
    cb.words.resize(static_cast<std::size_t>(size));
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    for (int i = 0; i < size; ++i) {
        CVec w(m);
        for (int t = 0; t < m; ++t) w(t) = std::polar(scale, 2.0 * kPi * i * t / size);
        cb.words[static_cast<std::size_t>(i)] = std::move(w);
    }
    return cb;
}

int best_codeword(const BeamInstance& instance, int node_index, const Codebook& codebook) {
    instance.validate();
    if (node_index < 0 || node_index >= instance.size())
        throw std::invalid_argument("best_codeword: node index out of range");
    if (codebook.size() < 1) throw std::invalid_argument("best_codeword: empty codebook");
    int best = 0;
    double best_sinr = -1.0;
    for (int i = 0; i < codebook.size(); ++i) {
        const double s = link::sinr(codebook.words[static_cast<std::size_t>(i)], instance.channels,
                                    instance.powers, node_index, instance.noise_power);
        if (s > best_sinr) {
            best_sinr = s;
            best = i;
        }
    }
    return best;
}

BeamInstance instance_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    BeamInstance ins;
    ins.noise_power = j.at("noise_power").get<double>();
    const auto& nodes = j.at("nodes");
    if (!nodes.is_array() || nodes.empty())
        throw std::invalid_argument("beam instance json: 'nodes' must be a non-empty array");
    const auto first_ch = nodes[0].at("channel");
    const int m = j.contains("m") ? j.at("m").get<int>() : static_cast<int>(first_ch.size());
    ins.channels.resize(m, static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const auto& nd = nodes[k];
        ins.node_ids.push_back(nd.at("id").get<int>());
        ins.powers.push_back(nd.at("power").get<double>());
        const auto& ch = nd.at("channel");
        if (static_cast<int>(ch.size()) != m)
            throw std::invalid_argument("beam instance json: channel length mismatch");
        for (int t = 0; t < m; ++t)
            ins.channels(t, static_cast<Eigen::Index>(k)) =
                Complex(ch[t].at(0).get<double>(), ch[t].at(1).get<double>());
    }
    if (j.contains("rate_floors")) ins.rate_floors = j.at("rate_floors").get<std::vector<double>>();
    ins.validate();
    return ins;
}

std::string set_to_json(const BeamformerSet& set) {
    nlohmann::ordered_json j;
    j["beamformers"] = nlohmann::ordered_json::array();
    for (const auto& b : set.beams) {
        nlohmann::ordered_json w = nlohmann::ordered_json::array();
        for (Eigen::Index t = 0; t < b.w.size(); ++t)
            w.push_back({b.w(t).real(), b.w(t).imag()});
        j["beamformers"].push_back({{"id", b.node_id}, {"w", w}, {"rate_bps_hz", b.rate_bps_hz}});
    }
    j["diagnostics"] = {{"iterations", set.iterations},
                        {"objective", set.objective},
                        {"floor_infeasible", set.floor_infeasible},
                        {"rank_ratio", set.rank_ratio}};
    return j.dump(2);
}

}  // namespace uavdc::beam
