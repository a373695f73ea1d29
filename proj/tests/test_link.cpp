#include <doctest.h>

#include "oracles.hpp"

using namespace ntn;
using oracle::cd;
using std::numbers::pi;

TEST_CASE("noise_power")
{
    LinkBudget lb;
    lb.noise_temp = 0.0;
    CHECK(noise_power(lb) == 0.0);
    lb.noise_temp = 290.0;
    CHECK(noise_power(lb) == doctest::Approx(1.380649e-23 * 290 * 1.8e5).epsilon(1e-14));
    CHECK(noise_power(lb) == doctest::Approx(7.207e-16).epsilon(1e-3));
    LinkBudget wide = lb;
    wide.rb_bandwidth *= 2;
    CHECK(noise_power(wide) == doctest::Approx(2 * noise_power(lb)).epsilon(1e-15));
}

TEST_CASE("beam gain of a matched single path")
{
    ArrayGeometry g;
    for (cd alpha : {cd(1, 0), cd(0.3, -0.4), cd(-2.5, 1.5)}) {
        MultipathProfile p;
        p.paths.push_back(PathParams{alpha, 1200.0, 0.0, {1.2, 1.7}, {0.9, 2.2}});
        const ComplexMat h = channel_matrix(p, g, 0, 0);
        const double gain = beam_gain(h, steering_rx(g, {0.9, 2.2}), steering_tx(g, {1.2, 1.7}));
        CHECK(std::abs(gain - std::norm(alpha)) < 1e-9);
    }
}

TEST_CASE("snr")
{
    ArrayGeometry g;
    LinkBudget lb;
    const double pg = pathloss(600e3, lb.carrier);

    MultipathProfile p;
    p.paths.push_back(PathParams{cd(1, 0), 0.0, 0.0, {1.2, 1.7}, {0.9, 2.2}});
    const ComplexMat h = channel_matrix(p, g, 0, 0);
    const BeamConfig matched{{1.2, 1.7}, {0.9, 2.2}};
    const double want = lb.effective_tx_power() * pg / (g.nr() * noise_power(lb));
    CHECK(snr(h, matched, g, lb, pg) == doctest::Approx(want).epsilon(1e-12));

    // receive beam orthogonal to the only column direction of H
    ArrayGeometry g2{1, 1, 2, 1, 0.0375, 0.0375, 0.075};
    ComplexMat h2(2, 1);
    h2 << 1.0, 1.0;
    // 2x1 receive array at theta = 0, phi = pi/2 is (1, -1)/sqrt(2)
    const BeamConfig null_beam{{1.0, 1.0}, {0.0, pi / 2}};
    CHECK(beam_gain(h2, steering_rx(g2, null_beam.rx), steering_tx(g2, null_beam.tx)) < 1e-30);
    CHECK(snr(h2, null_beam, g2, lb, 1.0) < 1e-30 * snr(h2, {{1.0, 1.0}, {pi / 2, pi / 2}}, g2, lb, 1.0));

    std::mt19937_64 rng(53);
    std::uniform_real_distribution<double> a(0.05, pi - 0.05);
    for (int t = 0; t < 20; ++t) {
        const ComplexMat hr = oracle::random_cmat(g.nr(), g.nt(), rng);
        const BeamConfig b{{a(rng), a(rng)}, {a(rng), a(rng)}};
        CHECK(snr(hr, b, g, lb, pg) == doctest::Approx(oracle::snr(hr, b, g, lb, pg)).epsilon(1e-10));
        // global phase of either beam does not matter
        const ComplexVec wr = steering_rx(g, b.rx), wt = steering_tx(g, b.tx);
        CHECK(snr_with_vectors(hr, cd(0, 1) * wr, std::polar(1.0, 0.7) * wt, lb, pg) ==
              doctest::Approx(snr(hr, b, g, lb, pg)).epsilon(1e-12));
        // bounded by the spectral norm
        Eigen::JacobiSVD<ComplexMat> svd(hr);
        CHECK(beam_gain(hr, wr, wt) <= std::pow(svd.singularValues()(0), 2) * (1 + 1e-12));
    }
    CHECK_THROWS_AS(snr(ComplexMat::Zero(2, 2), matched, g, lb, pg), InvalidArgument);
}

TEST_CASE("rate")
{
    CHECK(rate(0.0, 180e3) == 0.0);
    CHECK(std::abs(rate(1.0, 180e3) - 180000.0) < 1e-9);
    CHECK(std::abs(rate(3.0, 180e3) - 360000.0) < 1e-9);
    double prev = -1, slope = std::numeric_limits<double>::infinity();
    for (double s = 0.0; s < 100.0; s += 0.5) {
        const double r = rate(s, 180e3);
        CHECK(r > prev);
        if (prev >= 0) {
            CHECK(r - prev <= slope);
            slope = r - prev;
        }
        prev = r;
    }
}

TEST_CASE("apply_offsets")
{
    const OffsetGrid grid = OffsetGrid::standard();
    REQUIRE(grid.size() == 7);
    CHECK(grid.values[grid.zero_index()] == 0.0);
    const int z = grid.zero_index();
    const AnglePair base{1.0, 2.0};
    CHECK(apply_offsets(base, {z, z}, grid) == base);

    OffsetGrid plus{{0.0, 0.05}};
    const AnglePair edge = apply_offsets(AnglePair{pi - 0.01, 1.0}, {1, 0}, plus);
    CHECK(edge.theta == pi - kAngleMargin);
    const AnglePair low = apply_offsets(AnglePair{0.0005, 1.0}, {0, 0}, plus);
    CHECK(low.theta == kAngleMargin);

    OffsetGrid zeros{{0.0, 0.0, 0.0}};
    const AnglePair once = apply_offsets(base, {6, 1}, grid);
    CHECK(apply_offsets(once, {2, 1}, zeros) == once);
    CHECK_THROWS_AS(apply_offsets(base, {7, 0}, grid), InvalidArgument);
}

TEST_CASE("rb pool and expansion")
{
    const RbPool pool = RbPool::contiguous(60, 3);
    REQUIRE(pool.num_groups() == 3);
    std::vector<int> seen(60, 0);
    for (const auto& grp : pool.groups) {
        CHECK(grp.size() == 20);
        for (int m : grp)
            ++seen[std::size_t(m)];
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));

    const RbAllocation a = expand_groups(pool, 0b011, 0b110);
    CHECK(a.selected_count() == 20);
    for (int m = 0; m < 60; ++m)
        CHECK(a.bits[std::size_t(m)] == (m >= 20 && m < 40));
    CHECK(count_groups(0b101) == 2);
    CHECK_THROWS_AS(RbPool::contiguous(2, 3), InvalidArgument);
}

TEST_CASE("group_rates")
{
    ArrayGeometry g;
    LinkBudget lb;
    const RbPool pool = RbPool::contiguous(6, 3);
    const BeamConfig b{{1.2, 1.7}, {0.9, 2.2}};

    const std::vector<ComplexMat> zeros(6, ComplexMat::Zero(g.nr(), g.nt()));
    const auto z = group_rates(zeros, b, g, pool, lb, 1e-15);
    CHECK(std::all_of(z.group_rate.begin(), z.group_rate.end(), [](double r) { return r == 0.0; }));

    std::mt19937_64 rng(59);
    const ComplexMat h = oracle::random_cmat(g.nr(), g.nt(), rng);
    const auto same = group_rates(std::vector<ComplexMat>(6, h), b, g, pool, lb, 1e-15);
    const double per_rb = rate(snr(h, b, g, lb, 1e-15), lb.rb_bandwidth);
    for (double r : same.group_rate)
        CHECK(r == doctest::Approx(2 * per_rb).epsilon(1e-12));

    std::vector<ComplexMat> hs;
    for (int m = 0; m < 6; ++m)
        hs.push_back(oracle::random_cmat(g.nr(), g.nt(), rng));
    const auto gr = group_rates(hs, b, g, pool, lb, 1e-15);
    for (int k = 0; k < 3; ++k) {
        double s = 0.0;
        for (int m : pool.groups[std::size_t(k)])
            s += lb.rb_bandwidth * std::log2(1 + oracle::snr(hs[std::size_t(m)], b, g, lb, 1e-15));
        CHECK(gr.group_rate[std::size_t(k)] == doctest::Approx(s).epsilon(1e-10));
    }
}
