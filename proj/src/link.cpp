#include "uavdc/link.hpp"

#include <cmath>
#include <stdexcept>

namespace uavdc::link {

double sinr(const CVec& w, const CMat& h_sched, const std::vector<double>& powers_sched,
            int target, double noise_power) {
    if (w.squaredNorm() <= 0.0) throw std::invalid_argument("sinr: zero beamforming vector");
    if (target < 0 || target >= h_sched.cols()) throw std::invalid_argument("sinr: target out of range");
    if (static_cast<Eigen::Index>(powers_sched.size()) != h_sched.cols())
        throw std::invalid_argument("sinr: power/channel size mismatch");

    const Complex ws = w.dot(h_sched.col(target));  // w^H h_target
    const double signal = powers_sched[static_cast<std::size_t>(target)] * std::norm(ws);
    double interference = 0.0;
    for (Eigen::Index j = 0; j < h_sched.cols(); ++j) {
        if (j == target) continue;
        interference += powers_sched[static_cast<std::size_t>(j)] * std::norm(w.dot(h_sched.col(j)));
    }
    return signal / (interference + noise_power * w.squaredNorm());
}

double rate(double sinr_value) { return std::log2(1.0 + sinr_value); }

double slot_volume(double rate_bps_hz, bool scheduled, double tau, double bandwidth) {
    return scheduled ? tau * bandwidth * rate_bps_hz : 0.0;
}

double sdc(const std::vector<SlotLinkReport>& reports) {
    double total = 0.0;
    for (const auto& r : reports)
        for (double v : r.volume_bits) total += v;
    return total;
}

std::vector<bool> fairness_satisfied(const std::vector<SlotLinkReport>& reports, double volume_threshold,
                                     int n_nodes) {
    std::vector<double> totals(static_cast<std::size_t>(n_nodes), 0.0);
    for (const auto& r : reports)
        for (std::size_t k = 0; k < r.volume_bits.size() && k < totals.size(); ++k)
            totals[k] += r.volume_bits[k];
    std::vector<bool> ok(totals.size());
    for (std::size_t k = 0; k < totals.size(); ++k) ok[k] = totals[k] >= volume_threshold;
    return ok;
}

double jain_index(const std::vector<double>& totals) {
    if (totals.empty()) throw std::invalid_argument("jain_index: empty totals");
    double s = 0.0, s2 = 0.0;
    for (double d : totals) {
        s += d;
        s2 += d * d;
    }
    if (s2 == 0.0) return 1.0;  // nobody served: perfectly fair by convention
    return (s * s) / (static_cast<double>(totals.size()) * s2);
}

double energy_efficiency(const std::vector<SlotLinkReport>& reports, double tau) {
    double energy = 0.0;
    for (const auto& r : reports)
        for (std::size_t k = 0; k < r.power_w.size(); ++k)
            if (k < r.scheduled.size() && r.scheduled[k]) energy += r.power_w[k] * tau;
    if (energy <= 0.0) throw std::domain_error("energy_efficiency: no transmissions (undefined)");
    return sdc(reports) / energy;
}

}  // namespace uavdc::link
