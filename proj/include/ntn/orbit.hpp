#pragma once

#include <numbers>
#include <optional>

#include "ntn/numkit.hpp"

namespace ntn {

using Vec3 = Eigen::Vector3d;

inline constexpr double kSpeedOfLight = 299792458.0;

/// Circular Keplerian orbit with uniform earth rotation. The earth-fixed
/// frame coincides with the inertial frame at t = 0.
struct OrbitConfig {
    double altitude = 600e3;
    double inclination = 53.0 * std::numbers::pi / 180.0;
    double raan = 0.0;
    double initial_phase = 0.0; // argument of latitude at t = 0
    double mu = 3.986004418e14;
    double earth_radius = 6371.0e3;
    double earth_rotation_rate = 7.2921159e-5;

    double semi_major_axis() const { return earth_radius + altitude; }
    double mean_motion() const;
    double period() const;
    void validate() const;
};

struct EcefPosition {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 vec() const { return {x, y, z}; }
    static EcefPosition from(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
};

struct OrbitState {
    EcefPosition position;
    Vec3 velocity;          // earth-relative, earth-fixed axes
    Vec3 inertial_position; // inertial frame
    Vec3 inertial_velocity; // inertial frame
};

/// Angle pair in the array convention used by the steering vectors: a unit
/// direction u in array coordinates is (sin(phi)cos(theta), cos(phi), sin(phi)sin(theta)),
/// so the boresight (array z axis) is theta = phi = pi/2.
struct AnglePair {
    double theta = std::numbers::pi / 2;
    double phi = std::numbers::pi / 2;
    bool operator==(const AnglePair&) const = default;
};

Vec3 angles_to_direction(const AnglePair& a);
AnglePair direction_to_angles(const Vec3& unit_dir);

/// Rows are the array x, y, z axes expressed in earth-fixed coordinates.
using ArrayFrame = Eigen::Matrix3d;

struct GeometrySample {
    double slant_distance = 0.0;
    double elevation = 0.0;
    Vec3 sat_velocity = Vec3::Zero(); // earth-relative
    Vec3 los = Vec3::UnitZ();         // unit vector, satellite -> UE
    AnglePair boresight_aod;          // LOS in the satellite array frame
    AnglePair boresight_aoa;          // LOS (towards the satellite) in the UE array frame
    ArrayFrame sat_frame = ArrayFrame::Identity();
    ArrayFrame ue_frame = ArrayFrame::Identity();
};

OrbitState propagate(const OrbitConfig& o, double t);

/// Satellite array: z to nadir, x along the earth-relative velocity.
/// UE array: z to local zenith, x to local east.
GeometrySample geometry(const EcefPosition& sat, const Vec3& sat_vel, const EcefPosition& ue);

/// Free-space path gain (lambda / (4 pi d))^2, linear.
double pathloss(double distance, double carrier_freq);

bool in_service(double elevation, double min_elevation = std::numbers::pi / 6);

/// Orbit whose ground track passes through the zenith of `ue` at `t_overhead`
/// on an ascending pass.
OrbitConfig orbit_through(const EcefPosition& ue, double altitude, double inclination, double t_overhead,
                          const OrbitConfig& base = {});

struct ServiceWindow {
    double rise = 0.0;
    double set = 0.0;
    double duration() const { return set - rise; }
};

/// First contiguous interval in [t_begin, t_end] with elevation above `min_elevation`.
std::optional<ServiceWindow> find_service_window(const OrbitConfig& o, const EcefPosition& ue,
                                                 double min_elevation, double t_begin, double t_end,
                                                 double scan_step = 1.0);

} // namespace ntn
