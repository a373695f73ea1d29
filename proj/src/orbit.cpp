#include "ntn/orbit.hpp"

#include <algorithm>
#include <cmath>

namespace ntn {

using std::numbers::pi;

double OrbitConfig::mean_motion() const { return std::sqrt(mu / std::pow(semi_major_axis(), 3)); }

double OrbitConfig::period() const { return 2.0 * pi / mean_motion(); }

void OrbitConfig::validate() const
{
    if (!(altitude > 0.0))
        throw InvalidArgument("orbit: altitude must be positive");
    if (!(inclination >= 0.0 && inclination <= pi))
        throw InvalidArgument("orbit: inclination must lie in [0, pi]");
    if (!(mu > 0.0) || !(earth_radius > 0.0))
        throw InvalidArgument("orbit: mu and earth_radius must be positive");
}

Vec3 angles_to_direction(const AnglePair& a)
{
    return {std::sin(a.phi) * std::cos(a.theta), std::cos(a.phi), std::sin(a.phi) * std::sin(a.theta)};
}

AnglePair direction_to_angles(const Vec3& u)
{
    const Vec3 n = u.normalized();
    return {std::atan2(n.z(), n.x()), std::acos(std::clamp(n.y(), -1.0, 1.0))};
}

static Eigen::Matrix3d rot_z(double angle)
{
    return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

OrbitState propagate(const OrbitConfig& o, double t)
{
    const double a = o.semi_major_axis();
    const double n = o.mean_motion();
    const double u = o.initial_phase + n * t;
    const Vec3 p_hat(std::cos(o.raan), std::sin(o.raan), 0.0);
    const Vec3 q_hat(-std::cos(o.inclination) * std::sin(o.raan), std::cos(o.inclination) * std::cos(o.raan),
                     std::sin(o.inclination));

    OrbitState s;
    s.inertial_position = a * (std::cos(u) * p_hat + std::sin(u) * q_hat);
    s.inertial_velocity = a * n * (-std::sin(u) * p_hat + std::cos(u) * q_hat);

    const Eigen::Matrix3d to_fixed = rot_z(-o.earth_rotation_rate * t);
    const Vec3 omega(0.0, 0.0, o.earth_rotation_rate);
    s.position = EcefPosition::from(to_fixed * s.inertial_position);
    s.velocity = to_fixed * (s.inertial_velocity - omega.cross(s.inertial_position));
    return s;
}

GeometrySample geometry(const EcefPosition& sat, const Vec3& sat_vel, const EcefPosition& ue)
{
    const Vec3 s = sat.vec();
    const Vec3 g = ue.vec();
    const Vec3 to_sat = s - g;
    const double d = to_sat.norm();
    if (!(d > 0.0) || !(g.norm() > 0.0) || !(s.norm() > 0.0))
        throw InvalidArgument("geometry: satellite and UE positions must be distinct and non-zero");

    GeometrySample out;
    out.slant_distance = d;
    out.sat_velocity = sat_vel;
    out.los = -to_sat / d;

    const Vec3 up = g.normalized();
    out.elevation = std::asin(std::clamp(to_sat.dot(up) / d, -1.0, 1.0));

    Vec3 east = Vec3::UnitZ().cross(up);
    if (east.norm() < 1e-12)
        east = Vec3::UnitX(); // UE on the polar axis
    east.normalize();
    const Vec3 north = up.cross(east);
    out.ue_frame.row(0) = east;
    out.ue_frame.row(1) = north;
    out.ue_frame.row(2) = up;

    const Vec3 nadir = -s.normalized();
    Vec3 along = sat_vel - sat_vel.dot(nadir) * nadir;
    if (along.norm() < 1e-9) {
        along = Vec3::UnitZ().cross(nadir);
        if (along.norm() < 1e-12)
            along = Vec3::UnitX();
    }
    along.normalize();
    out.sat_frame.row(0) = along;
    out.sat_frame.row(1) = nadir.cross(along);
    out.sat_frame.row(2) = nadir;

    out.boresight_aoa = direction_to_angles(out.ue_frame * (to_sat / d));
    out.boresight_aod = direction_to_angles(out.sat_frame * out.los);
    return out;
}

double pathloss(double distance, double carrier_freq)
{
    if (!(distance > 0.0) || !(carrier_freq > 0.0))
        throw InvalidArgument("pathloss: distance and frequency must be positive");
    const double lambda = kSpeedOfLight / carrier_freq;
    const double r = lambda / (4.0 * pi * distance);
    return r * r;
}

bool in_service(double elevation, double min_elevation) { return elevation > min_elevation; }

OrbitConfig orbit_through(const EcefPosition& ue, double altitude, double inclination, double t_overhead,
                          const OrbitConfig& base)
{
    OrbitConfig o = base;
    o.altitude = altitude;
    o.inclination = inclination;
    o.validate();

    const Vec3 d = rot_z(o.earth_rotation_rate * t_overhead) * ue.vec().normalized();
    const double sin_u = d.z() / std::sin(inclination); // sin(latitude) / sin(inclination)
    if (std::abs(sin_u) > 1.0)
        throw InvalidArgument("orbit_through: inclination too small to reach the UE latitude");
    const double u = std::asin(sin_u);
    const double lon = std::atan2(d.y(), d.x());
    o.raan = lon - std::atan2(std::cos(inclination) * std::sin(u), std::cos(u));
    o.initial_phase = u - o.mean_motion() * t_overhead;
    return o;
}

std::optional<ServiceWindow> find_service_window(const OrbitConfig& o, const EcefPosition& ue,
                                                 double min_elevation, double t_begin, double t_end,
                                                 double scan_step)
{
    auto elev = [&](double t) {
        const OrbitState s = propagate(o, t);
        return geometry(s.position, s.velocity, ue).elevation;
    };
    auto refine = [&](double lo, double hi, bool rising) {
        // invariant: in_service(lo) != in_service(hi)
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (in_service(elev(mid), min_elevation) == rising)
                hi = mid;
            else
                lo = mid;
        }
        return 0.5 * (lo + hi);
    };

    double prev_t = t_begin;
    bool prev_in = in_service(elev(t_begin), min_elevation);
    std::optional<double> rise;
    if (prev_in)
        rise = t_begin;
    for (double t = t_begin + scan_step; t <= t_end + 1e-9; t += scan_step) {
        const bool now_in = in_service(elev(t), min_elevation);
        if (!rise && now_in)
            rise = refine(prev_t, t, true);
        else if (rise && !now_in)
            return ServiceWindow{*rise, refine(prev_t, t, false)};
        prev_t = t;
        prev_in = now_in;
    }
    if (rise)
        return ServiceWindow{*rise, t_end};
    return std::nullopt;
}

} // namespace ntn
