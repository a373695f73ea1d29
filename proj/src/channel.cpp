#include "ntn/channel.hpp"

#include <algorithm>
#include <cmath>

namespace ntn {

using std::numbers::pi;

namespace {

constexpr double kMinAngle = 1e-3;

double clamp_angle(double a) { return std::clamp(a, kMinAngle, pi - kMinAngle); }

double laplace(Rng& rng, double scale)
{
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    const double x = u(rng);
    const double s = x < 0 ? -1.0 : 1.0;
    return -scale * s * std::log(std::max(1e-300, 1.0 - 2.0 * std::abs(x)));
}

ComplexVec ula(int n, double phase_step)
{
    ComplexVec v(n);
    const double norm = 1.0 / std::sqrt(static_cast<double>(n));
    for (int k = 0; k < n; ++k)
        v(k) = std::polar(norm, phase_step * k);
    return v;
}

} // namespace

void ArrayGeometry::validate() const
{
    if (nt_x < 1 || nt_y < 1 || nr_x < 1 || nr_y < 1)
        throw InvalidArgument("array: antenna counts must be >= 1");
    if (!(d_t > 0.0) || !(d_r > 0.0) || !(wavelength > 0.0))
        throw InvalidArgument("array: spacings and wavelength must be positive");
}

ArrayGeometry ArrayGeometry::half_wavelength(int nt_x, int nt_y, int nr_x, int nr_y, double wavelength)
{
    return {nt_x, nt_y, nr_x, nr_y, wavelength / 2, wavelength / 2, wavelength};
}

void ChannelConfig::validate() const
{
    if (num_paths < 1)
        throw InvalidArgument("channel: num_paths must be >= 1");
    if (!(angle_spread >= 0.0) || !(delay_spread >= 0.0) || !(symbol_duration > 0.0))
        throw InvalidArgument("channel: spreads must be non-negative and symbol duration positive");
    if (std::isnan(rician_k_db))
        throw InvalidArgument("channel: rician_k_db must be a number");
}

ComplexVec upa_steering(int nx, int ny, double spacing, double wavelength, const AnglePair& a)
{
    if (!(a.theta >= 0.0 && a.theta <= pi) || !(a.phi >= 0.0 && a.phi <= pi))
        throw InvalidArgument("steering vector: angles must lie in [0, pi]");
    const double k = 2.0 * pi / wavelength * spacing;
    const ComplexVec x = ula(nx, k * std::sin(a.phi) * std::cos(a.theta));
    const ComplexVec y = ula(ny, k * std::cos(a.phi));
    return kron_vec(x, y);
}

ComplexVec steering_tx(const ArrayGeometry& g, const AnglePair& a)
{
    return upa_steering(g.nt_x, g.nt_y, g.d_t, g.wavelength, a);
}

ComplexVec steering_rx(const ArrayGeometry& g, const AnglePair& a)
{
    return upa_steering(g.nr_x, g.nr_y, g.d_r, g.wavelength, a);
}

MultipathProfile sample_paths(Rng& rng, const GeometrySample& geo, const ChannelConfig& cfg, double wavelength)
{
    cfg.validate();
    MultipathProfile prof;
    prof.symbol_duration = cfg.symbol_duration;

    const double speed = geo.sat_velocity.norm();
    const Vec3 vel_dir = speed > 0.0 ? Vec3(geo.sat_velocity / speed) : Vec3::Zero();
    auto doppler_for = [&](const Vec3& dir) { return speed / wavelength * vel_dir.dot(dir); };

    std::uniform_real_distribution<double> phase(0.0, 2.0 * pi);
    const bool pure_los = std::isinf(cfg.rician_k_db) && cfg.rician_k_db > 0;
    const double k_lin = pure_los ? 0.0 : std::pow(10.0, cfg.rician_k_db / 10.0);
    const int L = cfg.num_paths;

    double los_power = 1.0;
    double nlos_power = 0.0;
    if (L > 1 && !pure_los) {
        los_power = k_lin / (k_lin + 1.0);
        nlos_power = 1.0 / ((k_lin + 1.0) * (L - 1));
    }

    PathParams los;
    los.alpha = std::polar(std::sqrt(los_power), phase(rng));
    los.aod = {clamp_angle(geo.boresight_aod.theta), clamp_angle(geo.boresight_aod.phi)};
    los.aoa = {clamp_angle(geo.boresight_aoa.theta), clamp_angle(geo.boresight_aoa.phi)};
    los.doppler = doppler_for(geo.los);
    los.delay = 0.0;
    prof.paths.push_back(los);

    std::normal_distribution<double> normal(0.0, std::sqrt(nlos_power / 2.0));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // truncated exponential on [0, delay_spread]
    const double mean_delay = cfg.delay_spread / 2.0;
    const double trunc = mean_delay > 0 ? 1.0 - std::exp(-cfg.delay_spread / mean_delay) : 0.0;

    for (int l = 1; l < L; ++l) {
        PathParams p;
        if (pure_los)
            p.alpha = 0.0;
        else
            p.alpha = {normal(rng), normal(rng)};
        p.aod = {clamp_angle(los.aod.theta + laplace(rng, cfg.angle_spread)),
                 clamp_angle(los.aod.phi + laplace(rng, cfg.angle_spread))};
        p.aoa = {clamp_angle(los.aoa.theta + laplace(rng, cfg.angle_spread)),
                 clamp_angle(los.aoa.phi + laplace(rng, cfg.angle_spread))};
        p.delay = mean_delay > 0 ? -mean_delay * std::log(1.0 - unit(rng) * trunc) : 0.0;
        p.delay = std::min(p.delay, cfg.delay_spread);
        // departure direction in earth-fixed axes
        const Vec3 dir = geo.sat_frame.transpose() * angles_to_direction(p.aod);
        p.doppler = doppler_for(dir);
        prof.paths.push_back(p);
    }
    return prof;
}

ComplexMat channel_matrix(const MultipathProfile& p, const ArrayGeometry& g, long n, int m)
{
    if (n < 0 || m < 0)
        throw InvalidArgument("channel_matrix: slot and RB indices must be non-negative");
    ComplexMat h = ComplexMat::Zero(g.nr(), g.nt());
    const double ts = p.symbol_duration;
    for (const auto& path : p.paths) {
        const double cycles = static_cast<double>(n) * ts * path.doppler - static_cast<double>(m) / ts * path.delay;
        const cd coeff = path.alpha * std::polar(1.0, 2.0 * pi * cycles);
        h.noalias() += coeff * (steering_rx(g, path.aoa) * steering_tx(g, path.aod).adjoint());
    }
    return h;
}

ChannelRealization::ChannelRealization(MultipathProfile profile, ArrayGeometry geometry)
    : profile_(std::move(profile)), array_(geometry)
{
    array_.validate();
    path_outer_.reserve(profile_.paths.size());
    for (const auto& path : profile_.paths)
        path_outer_.push_back(steering_rx(array_, path.aoa) * steering_tx(array_, path.aod).adjoint());
}

const ComplexMat& ChannelRealization::at(long n, int m) const
{
    const auto key = std::make_pair(n, m);
    if (auto it = cache_.find(key); it != cache_.end())
        return it->second;
    if (n < 0 || m < 0)
        throw InvalidArgument("ChannelRealization::at: negative index");
    ComplexMat h = ComplexMat::Zero(array_.nr(), array_.nt());
    const double ts = profile_.symbol_duration;
    for (std::size_t l = 0; l < profile_.paths.size(); ++l) {
        const auto& path = profile_.paths[l];
        const double cycles = static_cast<double>(n) * ts * path.doppler - static_cast<double>(m) / ts * path.delay;
        h.noalias() += (path.alpha * std::polar(1.0, 2.0 * pi * cycles)) * path_outer_[l];
    }
    return cache_.emplace(key, std::move(h)).first->second;
}

std::vector<ComplexMat> ChannelRealization::slot(long n, int num_rbs) const
{
    std::vector<ComplexMat> out;
    out.reserve(num_rbs);
    for (int m = 0; m < num_rbs; ++m)
        out.push_back(at(n, m));
    return out;
}

} // namespace ntn
