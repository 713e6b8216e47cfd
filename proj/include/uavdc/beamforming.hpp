#pragma once

#include <string>
#include <vector>

#include "uavdc/common.hpp"

namespace uavdc::beam {

// One receive-beamforming problem instance: the scheduled set at a slot.
struct BeamInstance {
    CMat channels;                   // M x S, one column per scheduled node
    std::vector<double> powers;      // watts, aligned with columns
    std::vector<int> node_ids;       // aligned with columns
    double noise_power = 1e-13;      // sigma^2
    std::vector<double> rate_floors; // bits/s/Hz residual floors; empty = off

    int m() const { return static_cast<int>(channels.rows()); }
    int size() const { return static_cast<int>(channels.cols()); }
    void validate() const;
};

struct NodeBeam {
    int node_id = 0;
    CVec w;                   // ||w|| <= 1
    double rate_bps_hz = 0.0; // true rate achieved by w on the instance
};

struct BeamformerSet {
    std::vector<NodeBeam> beams;
    int iterations = 0;
    double objective = 0.0;          // final relaxed objective, sum over nodes
    bool floor_infeasible = false;
    std::vector<double> rank_ratio;  // lambda2/lambda1 of each final iterate
};

// Lifted variables W_k, one per scheduled node. Hermitian, PSD, trace <= 1.
struct SdpIterate {
    std::vector<CMat> W;
    int iteration = 0;
};

struct SubproblemResult {
    SdpIterate iterate;
    double objective = 0.0;       // sum of surrogate values at the output
    bool floor_infeasible = false;
};

// w_k proportional to (sum_j P_j h_j h_j^H + sigma^2 I)^{-1} h_k, unit norm,
// with exact per-node SINR-optimal rates. The closed-form oracle.
BeamformerSet mmse_beamformers(const BeamInstance& instance);

// Rate of the lifted variable under the relaxed objective:
// log2(tr(A_k W)) - log2(tr(B_k W)), A_k = sum_i P_i h_i h_i^H + sigma^2 I,
// B_k = A_k - P_k h_k h_k^H. Equals log2(1+SINR) on rank-one W.
double relaxed_rate(const CMat& W, const BeamInstance& instance, int k);

// Concave surrogate: first log kept, second log linearized at W_l. Equals
// relaxed_rate(W_l) at W = W_l and lower-bounds relaxed_rate everywhere.
double taylor_lower_bound(const CMat& W, const CMat& W_l, const BeamInstance& instance, int k);

// Maximizes the surrogate per node over {W PSD, tr W <= 1}. The per-node
// fairness floor (when rate_floors is non-empty) never moves the argmax --
// the objective is the floored quantity -- so it is checked after solving and
// reported via floor_infeasible.
SubproblemResult solve_sdr_subproblem(const SdpIterate& W_l, const BeamInstance& instance,
                                      double tolerance = 1e-10);

// w = (a^H W a)^{-1/2} W a per node; falls back to the dominant eigenvector
// when the probe quadratic form is numerically zero.
std::vector<CVec> rank_one_recover(const SdpIterate& W_star, const std::vector<CVec>& probes);

struct ScaParams {
    int max_iters = 20;
    double epsilon = 1e-4;      // stop when relaxed-objective gain drops below
    double subproblem_tol = 1e-10;
};

// Successive convex approximation, started per node from the better of the
// matched filter and the interference-whitened matched filter. Returned rates
// are true link rates of the extracted vectors.
BeamformerSet sca_optimize(const BeamInstance& instance, const ScaParams& params = {});

struct Codebook {
    std::vector<CVec> words;
    int size() const { return static_cast<int>(words.size()); }
};

// codeword i entry t = (1/sqrt(m)) exp(j 2 pi i t / size)
Codebook build_dft_codebook(int m, int size);

// Index of the codeword maximizing the node's SINR; ties -> lowest index.
int best_codeword(const BeamInstance& instance, int node_index, const Codebook& codebook);

// JSON interchange for the CLI: complex numbers as [re, im] pairs.
BeamInstance instance_from_json(const std::string& text);
std::string set_to_json(const BeamformerSet& set);

}  // namespace uavdc::beam
