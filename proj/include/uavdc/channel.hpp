#pragma once

#include <vector>

#include "uavdc/common.hpp"
#include "uavdc/rng.hpp"
#include "uavdc/scenario.hpp"

namespace uavdc::channel {

struct ChannelParams {
    int n_antennas = 8;       // M
    int n_paths = 3;          // C; path 0 is the line-of-sight path
    double pathloss_ref = 1e-3;   // beta0, gain at 1 m
    double pathloss_exp = 2.2;    // alpha

    void validate() const;
};

struct ChannelVector {
    int node_id = 0;
    int slot = 0;
    CVec entries;  // M x 1
};

struct ChannelMatrix {
    int slot = 0;
    std::vector<int> node_ids;
    CMat columns;  // M x K, column k is node_ids[k]'s channel
};

// Half-wavelength ULA response: entry i = exp(j*pi*i*sin(aoa)), entry 0 = 1.
CVec steering_vector(double aoa, int m);

// Path 0: line-of-sight elevation asin(H / d3D). Paths >= 1: uniform in
// [-pi/2, pi/2] drawn from the stream (one draw per call).
double aoa_of_path(const scenario::UavState& uav, const scenario::GroundNode& node,
                   int path_index, RngStream& stream);

// h = sqrt(chi / C) * Theta * xi with chi = beta0 * d3D^-alpha. Exposed so
// tests can evaluate the composition with fixed small-scale coefficients.
CVec compose_channel(double chi, const CMat& steering, const CVec& xi);

// Draws AoAs for paths 1..C-1 and xi ~ CN(0, I_C) from the stream, in that
// order. Rejects degenerate geometry (d3D ~ 0).
ChannelVector channel_vector(const scenario::UavState& uav, const scenario::GroundNode& node,
                             const ChannelParams& params, RngStream stream);

// One column per node; per-node randomness comes from stream.substream(node.id),
// so the matrix is independent of evaluation order.
ChannelMatrix channel_matrix(const scenario::UavState& uav,
                             const std::vector<scenario::GroundNode>& nodes,
                             const ChannelParams& params, const RngStream& slot_stream);

}  // namespace uavdc::channel
