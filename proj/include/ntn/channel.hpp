#pragma once

#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "ntn/numkit.hpp"
#include "ntn/orbit.hpp"

namespace ntn {

struct ArrayGeometry {
    int nt_x = 4;
    int nt_y = 4;
    int nr_x = 2;
    int nr_y = 2;
    double d_t = 0.0375; // lambda/2 at 4 GHz
    double d_r = 0.0375;
    double wavelength = 0.075;

    int nt() const { return nt_x * nt_y; }
    int nr() const { return nr_x * nr_y; }
    void validate() const;
    static ArrayGeometry half_wavelength(int nt_x, int nt_y, int nr_x, int nr_y, double wavelength);
};

struct PathParams {
    cd alpha{1.0, 0.0};
    double doppler = 0.0; // Hz
    double delay = 0.0;   // s
    AnglePair aod;
    AnglePair aoa;
};

struct MultipathProfile {
    std::vector<PathParams> paths;
    double symbol_duration = 66.7e-6;
};

struct ChannelConfig {
    int num_paths = 4;
    double rician_k_db = 10.0; // +inf gives a pure line-of-sight channel
    double angle_spread = 5.0 * std::numbers::pi / 180.0; // Laplacian scale of NLOS angle offsets
    double delay_spread = 100e-9;
    double symbol_duration = 66.7e-6;

    void validate() const;
};

/// Uniform planar array response: kron(x-factor, y-factor), each factor with
/// the 1/sqrt(n) prefactor. Angles must lie in [0, pi].
ComplexVec upa_steering(int nx, int ny, double spacing, double wavelength, const AnglePair& a);
ComplexVec steering_tx(const ArrayGeometry& g, const AnglePair& a);
ComplexVec steering_rx(const ArrayGeometry& g, const AnglePair& a);

/// Path 0 is the line-of-sight path at the boresight angles; the remaining
/// paths scatter around it. E[sum |alpha|^2] = 1.
MultipathProfile sample_paths(Rng& rng, const GeometrySample& geo, const ChannelConfig& cfg, double wavelength);

/// H = sum_l alpha_l exp(j 2 pi [n Ts v_l - (m / Ts) tau_l]) a_r(aoa_l) a_t(aod_l)^H
ComplexMat channel_matrix(const MultipathProfile& p, const ArrayGeometry& g, long n, int m);

/// Multipath profile plus a lazily filled cache of H(n, m).
class ChannelRealization {
public:
    ChannelRealization() = default;
    ChannelRealization(MultipathProfile profile, ArrayGeometry geometry);

    const MultipathProfile& profile() const { return profile_; }
    const ArrayGeometry& array() const { return array_; }
    const ComplexMat& at(long n, int m) const;
    std::vector<ComplexMat> slot(long n, int num_rbs) const;
    void clear_cache() const { cache_.clear(); }

private:
    MultipathProfile profile_;
    ArrayGeometry array_;
    // per-path steering outer products, computed once
    std::vector<ComplexMat> path_outer_;
    mutable std::map<std::pair<long, int>, ComplexMat> cache_;
};

} // namespace ntn
