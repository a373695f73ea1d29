#include <doctest.h>

#include "oracles.hpp"

using namespace ntn;
using oracle::cd;
using std::numbers::pi;

namespace {

double dist(const ComplexVec& a, const std::vector<cd>& b)
{
    double m = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a(i) - b[std::size_t(i)]));
    return m;
}

MultipathProfile random_profile(int L, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> ang(0.2, pi - 0.2), u(-1, 1);
    MultipathProfile p;
    for (int l = 0; l < L; ++l) {
        PathParams q;
        q.alpha = cd(u(rng), u(rng));
        q.doppler = 3e4 * u(rng);
        q.delay = 1e-7 * (1 + u(rng));
        q.aod = {ang(rng), ang(rng)};
        q.aoa = {ang(rng), ang(rng)};
        p.paths.push_back(q);
    }
    return p;
}

GeometrySample overhead()
{
    return geometry({6971e3, 0, 0}, Vec3(0, 7500, 0), {6371e3, 0, 0});
}

} // namespace

TEST_CASE("steering_tx")
{
    ArrayGeometry g1{1, 1, 1, 1, 0.0375, 0.0375, 0.075};
    const auto s = steering_tx(g1, {0.7, 1.1});
    REQUIRE(s.size() == 1);
    CHECK(std::abs(s(0) - cd(1, 0)) < 1e-15);

    ArrayGeometry g2{2, 1, 1, 1, 0.0375, 0.0375, 0.075};
    const auto v = steering_tx(g2, {0.0, pi / 2});
    CHECK(std::abs(v(0) - cd(1 / std::sqrt(2.0), 0)) < 1e-15);
    CHECK(std::abs(v(1) - cd(-1 / std::sqrt(2.0), 0)) < 1e-15);

    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> a(0.0, pi);
    ArrayGeometry g;
    for (int t = 0; t < 50; ++t) {
        const double th = a(rng), ph = a(rng);
        CHECK(dist(steering_tx(g, {th, ph}), oracle::steering(4, 4, g.d_t, g.wavelength, th, ph)) < 1e-12);
    }
    CHECK_THROWS_AS(steering_tx(g, {-0.1, 1.0}), InvalidArgument);
    CHECK_THROWS_AS(steering_tx(g, {1.0, pi + 0.1}), InvalidArgument);
}

TEST_CASE("steering_rx")
{
    ArrayGeometry g1{1, 1, 1, 1, 0.0375, 0.0375, 0.075};
    CHECK(std::abs(steering_rx(g1, {1.0, 1.0})(0) - cd(1, 0)) < 1e-15);

    ArrayGeometry g{1, 1, 1, 2, 0.0375, 0.0375, 0.075};
    const auto v = steering_rx(g, {0.4, pi / 3});
    CHECK(std::abs(v(0) - cd(1 / std::sqrt(2.0), 0)) < 1e-15);
    CHECK(std::abs(v(1) - cd(0, 1 / std::sqrt(2.0))) < 1e-15);

    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> a(0.0, pi);
    ArrayGeometry big{3, 5, 3, 4, 0.0375, 0.03, 0.075};
    for (int t = 0; t < 100; ++t) {
        const AnglePair p{a(rng), a(rng)};
        CHECK(std::abs(steering_rx(big, p).norm() - 1.0) < 1e-12);
        CHECK(std::abs(steering_tx(big, p).norm() - 1.0) < 1e-12);
    }
}

TEST_CASE("sample_paths")
{
    const auto geo = overhead();
    const double lambda = 0.075;
    Rng rng(41);

    ChannelConfig los_only;
    los_only.num_paths = 1;
    los_only.rician_k_db = std::numeric_limits<double>::infinity();
    const auto p1 = sample_paths(rng, geo, los_only, lambda);
    REQUIRE(p1.paths.size() == 1);
    CHECK(std::abs(p1.paths[0].alpha) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(p1.paths[0].aod == AnglePair{geo.boresight_aod.theta, geo.boresight_aod.phi});

    ChannelConfig cfg;
    double total = 0.0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        const auto p = sample_paths(rng, geo, cfg, lambda);
        REQUIRE(p.paths.size() == 4);
        for (const auto& q : p.paths) {
            total += std::norm(q.alpha);
            CHECK(q.delay >= 0.0);
            CHECK(q.delay <= cfg.delay_spread);
            CHECK(q.aod.theta > 0.0);
            CHECK(q.aod.theta < pi);
        }
    }
    CHECK(total / draws == doctest::Approx(1.0).epsilon(0.05));

    // satellite closing straight in on the UE
    auto g = geo;
    g.sat_velocity = 7000.0 * g.los;
    const auto pr = sample_paths(rng, g, cfg, lambda);
    CHECK(pr.paths[0].doppler == doctest::Approx(7000.0 / lambda));
}

TEST_CASE("channel_matrix")
{
    ArrayGeometry g;
    MultipathProfile one;
    one.paths.push_back(PathParams{cd(1, 0), 0.0, 0.0, {1.1, 1.4}, {1.9, 0.8}});
    const ComplexMat h = channel_matrix(one, g, 3, 5);
    const ComplexVec ar = steering_rx(g, {1.9, 0.8}), at = steering_tx(g, {1.1, 1.4});
    CHECK((h - ar * at.adjoint()).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(beam_gain(h, ar, at) == doctest::Approx(1.0));

    std::mt19937_64 rng(43);
    const auto prof = random_profile(2, rng);
    auto scaled = prof;
    for (auto& p : scaled.paths)
        p.alpha *= cd(0.3, -2.0);
    const ComplexMat h0 = channel_matrix(prof, g, 7, 2);
    CHECK((channel_matrix(scaled, g, 7, 2) - cd(0.3, -2.0) * h0).cwiseAbs().maxCoeff() < 1e-12);

    for (auto [n, m] : {std::pair{0L, 0}, {7L, 2}, {41L, 11}}) {
        const ComplexMat hm = channel_matrix(prof, g, n, m);
        double err = 0.0;
        for (int r = 0; r < g.nr(); ++r)
            for (int t = 0; t < g.nt(); ++t)
                err = std::max(err, std::abs(hm(r, t) - oracle::channel_entry(prof, g, n, m, r, t)));
        CHECK(err < 1e-10);
    }
}

TEST_CASE("channel invariants")
{
    std::mt19937_64 rng(47);
    ArrayGeometry g;
    const auto prof = random_profile(3, rng);
    for (int n : {0, 5, 90})
        for (int m : {0, 3}) {
            Eigen::JacobiSVD<ComplexMat> svd(channel_matrix(prof, g, n, m));
            svd.setThreshold(1e-10);
            CHECK(svd.rank() <= 3);
        }

    auto still = prof;
    for (auto& p : still.paths)
        p.doppler = 0.0;
    CHECK((channel_matrix(still, g, 0, 4) - channel_matrix(still, g, 77, 4)).cwiseAbs().maxCoeff() < 1e-12);
    auto flat = prof;
    for (auto& p : flat.paths)
        p.delay = 0.0;
    CHECK((channel_matrix(flat, g, 9, 0) - channel_matrix(flat, g, 9, 11)).cwiseAbs().maxCoeff() < 1e-12);

    const ChannelRealization real(prof, g);
    CHECK((real.at(12, 3) - channel_matrix(prof, g, 12, 3)).cwiseAbs().maxCoeff() < 1e-12);
    const auto slot = real.slot(12, 6);
    REQUIRE(slot.size() == 6);
    CHECK((slot[3] - real.at(12, 3)).cwiseAbs().maxCoeff() == 0.0);
}
