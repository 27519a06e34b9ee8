#include "semtsdf/gp.hpp"

#include "doctest.h"

#include <random>

using namespace semtsdf;

namespace {

KernelSpec unit_kernel() {
    KernelSpec k;
    k.lengthscale = 0.3;
    k.signal_variance = 1.0;
    k.cutoff_radius = 100.0;  // effectively no cutoff for these checks
    return k;
}

GpStats random_stats(std::mt19937_64& rng, int n, double voxel = 0.1) {
    std::uniform_int_distribution<int> cell(-30, 30);
    std::uniform_real_distribution<double> label(-0.4, 0.4);
    std::uniform_int_distribution<int> count(1, 5);
    GpStats s;
    s.voxel_size = voxel;
    while (s.size() < n) {
        GridKey k(cell(rng), cell(rng));
        if (s.find(k) >= 0) continue;
        s.append(k, count(rng), label(rng));
    }
    return s;
}

Mat dense_precision(const KernelSpec& k, const GpStats& s, double sigma2) {
    Mat Zinv = kernel_gram(k, s.pts, s.pts);
    for (int i = 0; i < s.size(); ++i) Zinv(i, i) += sigma2 / s.counts[i];
    return Zinv.inverse();
}

}  // namespace

TEST_CASE("repeated observation at one point collapses correctly") {
    // two measurements 1 and 3 at the same cell, sigma2 = 1:
    // posterior mean 4/3 and variance 1/3 at that cell.
    KernelSpec k = unit_kernel();
    GpStats s;
    s.voxel_size = 0.1;
    s.append(GridKey(0, 0), 2.0, 2.0);

    Points q(2, 1);
    q.col(0) = Eigen::Vector2d(0.0, 0.0);
    GpPosterior post = compressed_posterior(k, s, 1.0, q);
    CHECK(post.mean[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(post.cov(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // same result from the raw two-row solve
    Points X(2, 2);
    X.col(0) = X.col(1) = Eigen::Vector2d(0.0, 0.0);
    Vec y(2);
    y << 1.0, 3.0;
    GpPosterior full = full_gp_posterior(k, 0.0, X, y, 1.0, q);
    CHECK(full.mean[0] == doctest::Approx(post.mean[0]).epsilon(1e-12));
    CHECK(full.cov(0, 0) == doctest::Approx(post.cov(0, 0)).epsilon(1e-12));
}

TEST_CASE("nonzero prior mean enters through the residual") {
    KernelSpec k = unit_kernel();
    GpStats s;
    s.voxel_size = 0.1;
    s.prior_mean = 0.5;
    s.append(GridKey(0, 0), 2.0, 2.0);
    Points q(2, 1);
    q.col(0) = Eigen::Vector2d(0.0, 0.0);
    GpPosterior post = compressed_posterior(k, s, 1.0, q);
    // mu = mu0 + k/(k + 1/2) * (zeta - mu0) = 0.5 + (2/3) * 1.5
    CHECK(post.mean[0] == doctest::Approx(0.5 + (2.0 / 3.0) * 1.5).epsilon(1e-12));

    // far away from data the posterior returns to the prior
    Points far(2, 1);
    far.col(0) = Eigen::Vector2d(1000.0, 1000.0);
    KernelSpec kc = KernelSpec::defaults_for_voxel(0.1);
    GpPosterior pfar = compressed_posterior(kc, s, 1.0, far);
    CHECK(pfar.mean[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(pfar.cov(0, 0) == doctest::Approx(kc.signal_variance).epsilon(1e-15));
}

TEST_CASE("full and compressed posteriors agree on duplicated data") {
    std::mt19937_64 rng(42);
    KernelSpec k = KernelSpec::defaults_for_voxel(0.1);
    std::uniform_int_distribution<int> cell(-8, 8);
    std::uniform_real_distribution<double> label(-0.4, 0.4);

    // raw observations with heavy duplication
    std::vector<GridKey> keys;
    std::vector<double> values;
    for (int i = 0; i < 60; ++i) {
        keys.emplace_back(cell(rng), cell(rng));
        values.push_back(label(rng));
    }
    Points X(2, 60);
    Vec y(60);
    GpStats s;
    s.voxel_size = 0.1;
    for (int i = 0; i < 60; ++i) {
        X.col(i) = keys[static_cast<std::size_t>(i)].world(0.1);
        y[i] = values[static_cast<std::size_t>(i)];
        int at = s.find(keys[static_cast<std::size_t>(i)]);
        if (at < 0) {
            s.append(keys[static_cast<std::size_t>(i)], 1.0, values[static_cast<std::size_t>(i)]);
        } else {
            double m = s.counts[at];
            s.means[at] += (values[static_cast<std::size_t>(i)] - s.means[at]) / (m + 1.0);
            s.counts[at] = m + 1.0;
        }
    }

    Points q = 0.8 * Points::Random(2, 9);
    GpPosterior full = full_gp_posterior(k, 0.0, X, y, 0.5, q);
    GpPosterior comp = compressed_posterior(k, s, 0.5, q);
    CHECK((full.mean - comp.mean).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((full.cov - comp.cov).lpNorm<Eigen::Infinity>() < 1e-10);

    GpMarginals marg = compressed_marginals(k, s, 0.5, q);
    CHECK((marg.mean - comp.mean).lpNorm<Eigen::Infinity>() < 1e-12);
    for (int i = 0; i < q.cols(); ++i)
        CHECK(marg.var[i] == doctest::Approx(comp.cov(i, i)).epsilon(1e-10));
}

TEST_CASE("merge accumulates counts and count-weighted means") {
    GpStats s;
    s.voxel_size = 0.1;
    ObservationBatch b1;
    b1.keys = {GridKey(1, 1), GridKey(2, 2)};
    b1.counts = {2, 1};
    b1.means = {1.0, -0.2};
    s = merge_batch(std::move(s), b1);
    REQUIRE(s.size() == 2);

    ObservationBatch b2;
    b2.keys = {GridKey(1, 1), GridKey(3, 3)};
    b2.counts = {1, 4};
    b2.means = {4.0, 0.1};
    s = merge_batch(std::move(s), b2);
    REQUIRE(s.size() == 3);
    CHECK(s.counts[0] == doctest::Approx(3.0));
    CHECK(s.means[0] == doctest::Approx(2.0));  // (2*1 + 1*4) / 3
    CHECK(s.keys[2] == GridKey(3, 3));          // appended in batch order

    // credibility weighting scales the added counts, not the means
    s = merge_batch(std::move(s), b2, 0.5);
    CHECK(s.counts[0] == doctest::Approx(3.5));
    CHECK(s.means[0] == doctest::Approx((3.0 * 2.0 + 0.5 * 4.0) / 3.5));
    CHECK(s.counts[2] == doctest::Approx(4.0 + 2.0));

    // the pts matrix tracks appended keys
    CHECK((s.pts.col(2) - GridKey(3, 3).world(0.1)).norm() == 0.0);
}

TEST_CASE("rank-one count update matches the dense inverse") {
    std::mt19937_64 rng(7);
    KernelSpec k = KernelSpec::defaults_for_voxel(0.1);
    GpStats s = random_stats(rng, 20);
    double sigma2 = 0.7;
    PrecisionCache cache = build_precision(k, s, sigma2);
    CHECK((cache.Z - dense_precision(k, s, sigma2)).lpNorm<Eigen::Infinity>() < 1e-9);

    double m_old = s.counts[5];
    double m_new = m_old + 3.0;
    cache = update_precision_existing(std::move(cache), 5, m_old, m_new, sigma2);
    s.counts[5] = m_new;
    CHECK((cache.Z - dense_precision(k, s, sigma2)).lpNorm<Eigen::Infinity>() < 1e-9);

    // no-op when the count does not change
    PrecisionCache same = update_precision_existing(cache, 3, s.counts[3], s.counts[3], sigma2);
    CHECK((same.Z - cache.Z).lpNorm<Eigen::Infinity>() == 0.0);

    CHECK_THROWS_AS(update_precision_existing(cache, 3, 5.0, 4.0, sigma2), InvalidInputError);
}

TEST_CASE("block extension matches the dense inverse") {
    std::mt19937_64 rng(11);
    KernelSpec k = KernelSpec::defaults_for_voxel(0.1);
    GpStats s = random_stats(rng, 15);
    double sigma2 = 1.3;
    PrecisionCache cache = build_precision(k, s, sigma2);

    ObservationBatch fresh;
    fresh.keys = {GridKey(40, 40), GridKey(41, 40), GridKey(40, 41)};
    fresh.counts = {2, 1, 3};
    fresh.means = {0.1, 0.2, -0.1};
    PrecisionCache ext = extend_precision_new_points(cache, s, fresh, k, sigma2);
    GpStats grown = merge_batch(s, fresh);
    CHECK((ext.Z - dense_precision(k, grown, sigma2)).lpNorm<Eigen::Infinity>() < 1e-9);

    // extension from empty statistics
    GpStats none;
    none.voxel_size = 0.1;
    PrecisionCache from_empty =
        extend_precision_new_points(PrecisionCache{}, none, fresh, k, sigma2);
    CHECK((from_empty.Z - dense_precision(k, merge_batch(none, fresh), sigma2))
              .lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("incremental merge with cache equals rebuild from scratch") {
    std::mt19937_64 rng(13);
    KernelSpec k = KernelSpec::defaults_for_voxel(0.1);
    const double sigma2 = 0.9;
    std::uniform_int_distribution<int> cell(-6, 6);
    std::uniform_real_distribution<double> label(-0.3, 0.3);
    std::uniform_int_distribution<int> count(1, 3);

    GpStats inc;
    inc.voxel_size = 0.1;
    PrecisionCache cache;
    GpStats plain;
    plain.voxel_size = 0.1;

    for (int round = 0; round < 8; ++round) {
        ObservationBatch b;
        while (b.size() < 6) {
            GridKey key(cell(rng), cell(rng));
            bool dup = false;
            for (const GridKey& existing : b.keys) dup = dup || existing == key;
            if (dup) continue;
            b.keys.push_back(key);
            b.counts.push_back(count(rng));
            b.means.push_back(label(rng));
        }
        merge_batch_with_cache(inc, cache, b, k, sigma2);
        plain = merge_batch(std::move(plain), b);

        REQUIRE(inc.size() == plain.size());
        for (int i = 0; i < inc.size(); ++i) {
            CHECK(inc.keys[static_cast<std::size_t>(i)] == plain.keys[static_cast<std::size_t>(i)]);
            CHECK(inc.counts[i] == doctest::Approx(plain.counts[i]).epsilon(1e-14));
            CHECK(inc.means[i] == doctest::Approx(plain.means[i]).epsilon(1e-14));
        }
        CHECK((cache.Z - dense_precision(k, inc, sigma2)).lpNorm<Eigen::Infinity>() < 1e-8);
    }

    Points q = 0.6 * Points::Random(2, 5);
    GpPosterior cached = compressed_posterior(k, inc, sigma2, q, &cache);
    GpPosterior fresh = compressed_posterior(k, inc, sigma2, q);
    CHECK((cached.mean - fresh.mean).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK((cached.cov - fresh.cov).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("weighted merge keeps real-valued counts") {
    GpStats s;
    s.voxel_size = 0.1;
    ObservationBatch b;
    b.keys = {GridKey(0, 0)};
    b.counts = {3};
    b.means = {1.2};
    WeightedBatch w = WeightedBatch::from(b, 0.25);
    CHECK(w.counts[0] == doctest::Approx(0.75));
    s = merge_weighted(std::move(s), w);
    CHECK(s.counts[0] == doctest::Approx(0.75));
    CHECK(s.means[0] == doctest::Approx(1.2));
    CHECK_THROWS_AS((void)WeightedBatch::from(b, 0.0), InvalidInputError);
}

TEST_CASE("batch validation rejects malformed input") {
    ObservationBatch mismatched;
    mismatched.keys = {GridKey(0, 0)};
    mismatched.counts = {1, 2};
    mismatched.means = {0.0};
    CHECK_THROWS_AS(mismatched.validate(), InvalidInputError);

    ObservationBatch zero;
    zero.keys = {GridKey(0, 0)};
    zero.counts = {0};
    zero.means = {0.0};
    CHECK_THROWS_AS(zero.validate(), InvalidInputError);

    ObservationBatch dup;
    dup.keys = {GridKey(1, 1), GridKey(1, 1)};
    dup.counts = {1, 1};
    dup.means = {0.0, 0.0};
    CHECK_THROWS_AS(dup.validate(), InvalidInputError);

    GpStats s;
    s.append(GridKey(2, 2), 1.0, 0.0);
    CHECK_THROWS_AS(s.append(GridKey(2, 2), 1.0, 0.0), InvalidInputError);
    CHECK_THROWS_AS(s.append(GridKey(3, 3), 0.0, 0.0), InvalidInputError);
}
