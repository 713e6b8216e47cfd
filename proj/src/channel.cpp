#include "uavdc/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace uavdc::channel {

void ChannelParams::validate() const {
    if (n_antennas < 1) throw std::invalid_argument("channel: n_antennas must be >= 1");
    if (n_paths < 1) throw std::invalid_argument("channel: n_paths must be >= 1");
    if (pathloss_ref <= 0.0) throw std::invalid_argument("channel: pathloss_ref must be > 0");
    if (pathloss_exp < 0.0) throw std::invalid_argument("channel: pathloss_exp must be >= 0");
}

CVec steering_vector(double aoa, int m) {
    if (m < 1) throw std::invalid_argument("steering_vector: m must be >= 1");
    CVec v(m);
    const double s = std::sin(aoa);
    for (int i = 0; i < m; ++i) v(i) = std::polar(1.0, kPi * i * s);
    return v;
}

double aoa_of_path(const scenario::UavState& uav, const scenario::GroundNode& node,
                   int path_index, RngStream& stream) {
    if (path_index == 0) {
        const double d = scenario::distance_3d(uav, node);
        if (d < 1e-9) throw std::invalid_argument("aoa_of_path: degenerate geometry (d3D ~ 0)");
        return std::asin(uav.altitude / d);
    }
    return stream.uniform(-kPi / 2.0, kPi / 2.0);
}

CVec compose_channel(double chi, const CMat& steering, const CVec& xi) {
    if (steering.cols() != xi.size()) throw std::invalid_argument("compose_channel: path count mismatch");
    const double c = static_cast<double>(xi.size());
    return std::sqrt(chi / c) * (steering * xi);
}

ChannelVector channel_vector(const scenario::UavState& uav, const scenario::GroundNode& node,
                             const ChannelParams& params, RngStream stream) {
    params.validate();
    const double d = scenario::distance_3d(uav, node);
    if (d < 1e-9) throw std::invalid_argument("channel_vector: degenerate geometry (d3D ~ 0)");
    const double chi = params.pathloss_ref * std::pow(d, -params.pathloss_exp);

    CMat steering(params.n_antennas, params.n_paths);
    for (int c = 0; c < params.n_paths; ++c)
        steering.col(c) = steering_vector(aoa_of_path(uav, node, c, stream), params.n_antennas);

    CVec xi(params.n_paths);
    for (int c = 0; c < params.n_paths; ++c) xi(c) = stream.cnormal();

    ChannelVector out;
    out.node_id = node.id;
    out.slot = uav.slot;
    out.entries = compose_channel(chi, steering, xi);
    return out;
}

ChannelMatrix channel_matrix(const scenario::UavState& uav,
                             const std::vector<scenario::GroundNode>& nodes,
                             const ChannelParams& params, const RngStream& slot_stream) {
    ChannelMatrix out;
    out.slot = uav.slot;
    out.columns.resize(params.n_antennas, static_cast<Eigen::Index>(nodes.size()));
    out.node_ids.reserve(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        auto h = channel_vector(uav, nodes[k], params,
                                slot_stream.substream(static_cast<std::uint64_t>(nodes[k].id)));
        out.columns.col(static_cast<Eigen::Index>(k)) = h.entries;
        out.node_ids.push_back(nodes[k].id);
    }
    return out;
}

}  // namespace uavdc::channel
