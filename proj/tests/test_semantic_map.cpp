#include "semtsdf/semantic_map.hpp"

#include "doctest.h"

#include <cmath>

using namespace semtsdf;

namespace {

MapParams small_params(double voxel = 0.1, int num_classes = 2) {
    MapParams p;
    p.kernel = KernelSpec::defaults_for_voxel(voxel);
    p.sigma2 = 0.01;
    p.truncation = 0.3;
    p.num_classes = num_classes;
    p.tree.voxel_size = voxel;
    p.tree.prior_mean = 0.3;
    p.tree.max_leaf_points = 100;
    return p;
}

// annulus of grid cells labeled with the exact distance to a circle
ObservationBatch circle_batch(double radius, double band, double voxel) {
    ObservationBatch b;
    int span = static_cast<int>(std::ceil((radius + band) / voxel)) + 1;
    for (int iy = -span; iy <= span; ++iy)
        for (int ix = -span; ix <= span; ++ix) {
            double d = std::hypot(ix * voxel, iy * voxel) - radius;
            if (std::abs(d) > band) continue;
            b.keys.push_back(GridKey(ix, iy));
            b.counts.push_back(1);
            b.means.push_back(d);
        }
    return b;
}

}  // namespace

TEST_CASE("surface-conditioned class weights") {
    // phi(0) vs phi(1): the ratio collapses to 1/(1+exp(-1/2))
    std::vector<double> p = surface_class_posterior({0.0, 1.0}, {1.0, 1.0});
    CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-0.5))).epsilon(1e-12));
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-12));

    // equal means: the tighter class wins in proportion to 1/sigma
    p = surface_class_posterior({0.0, 0.0}, {1.0, 2.0});
    CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // an exact on-surface class takes all the mass
    p = surface_class_posterior({0.0, 0.5}, {0.0, 1.0});
    CHECK(p[0] == doctest::Approx(1.0));
    CHECK(p[1] == doctest::Approx(0.0));

    // several exact classes split it evenly
    p = surface_class_posterior({0.0, 0.0, 0.2}, {0.0, 0.0, 1.0});
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));
    CHECK(p[2] == doctest::Approx(0.0));

    // exactly-known but off-surface classes contribute nothing; if that
    // leaves no mass the posterior collapses to uniform
    p = surface_class_posterior({0.3, 0.4}, {0.0, 0.0});
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));

    CHECK_THROWS_AS(surface_class_posterior({0.0}, {1.0, 1.0}), InvalidInputError);
    CHECK_THROWS_AS(surface_class_posterior({}, {}), InvalidInputError);
    CHECK_THROWS_AS(surface_class_posterior({0.0}, {-1.0}), InvalidInputError);
}

TEST_CASE("map queries match the flat compressed posterior") {
    MapParams mp = small_params();
    mp.tree.max_leaf_points = 100000;  // keep a single leaf
    SemanticMap map(Vec::Zero(2), 8.0, mp);

    ObservationBatch b = circle_batch(1.0, 0.25, 0.1);
    map.ingest({{1, b}});
    REQUIRE(map.has_class(1));
    CHECK(!map.has_class(2));
    CHECK(map.observed_classes() == std::vector<int>{1});

    GpStats flat = merge_batch(GpStats{}, b);
    flat.prior_mean = mp.tree.prior_mean;
    flat.voxel_size = mp.tree.voxel_size;

    for (double x : {0.0, 0.4, 0.95, 1.3}) {
        Vec q(2);
        q << x, 0.35;
        GpMarginals ref = compressed_marginals(mp.kernel, flat, mp.sigma2, q);
        TsdfEstimate est = map.query_tsdf(1, q);
        CHECK(est.mean == doctest::Approx(ref.mean[0]).epsilon(1e-10));
        // the query floors the variance at zero (the cutoff kernel can push a
        // marginal variance a hair negative under dense coverage)
        CHECK(est.stddev ==
              doctest::Approx(std::sqrt(std::max(ref.var[0], 0.0))).epsilon(1e-10));
    }

    // unobserved classes answer with the prior
    Vec q(2);
    q << 0.0, 0.0;
    TsdfEstimate prior = map.query_tsdf(2, q);
    CHECK(prior.mean == doctest::Approx(mp.tree.prior_mean));
    CHECK(prior.stddev == doctest::Approx(1.0));

    CHECK_THROWS_AS(map.ingest({{3, b}}), InvalidInputError);  // only 2 classes
    CHECK_THROWS_AS(map.ingest({{0, b}}), InvalidInputError);
}

TEST_CASE("class posterior needs at least one observed class") {
    MapParams mp = small_params();
    SemanticMap map(Vec::Zero(2), 8.0, mp);
    Vec q(2);
    q << 0.0, 1.0;
    CHECK_THROWS_AS(map.class_posterior(q), InvalidInputError);

    map.ingest({{1, circle_batch(1.0, 0.25, 0.1)}});
    std::map<int, double> post = map.class_posterior(q);
    REQUIRE(post.size() == 1);
    CHECK(post.at(1) == doctest::Approx(1.0));

    // a second, far-away class gets almost no on-surface mass at q
    ObservationBatch far;
    for (int i = 0; i < 5; ++i) {
        far.keys.push_back(GridKey(25 + i, 25));
        far.counts.push_back(1);
        far.means.push_back(0.29);
    }
    map.ingest({{2, far}});
    post = map.class_posterior(q);
    REQUIRE(post.size() == 2);
    CHECK(post.at(1) > post.at(2));
    CHECK(post.at(1) + post.at(2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero level set of a disk comes out at the right radius") {
    MapParams mp = small_params();
    SemanticMap map(Vec::Zero(2), 8.0, mp);
    map.ingest({{1, circle_batch(1.5, 0.3, 0.1)}});

    SurfaceContours contours = map.extract_surface(0.05, 0.5);
    REQUIRE(contours.count(1) == 1);
    REQUIRE(!contours.at(1).empty());

    std::size_t vertices = 0;
    for (const auto& line : contours.at(1))
        for (const Eigen::Vector2d& v : line) {
            ++vertices;
            CHECK(std::abs(v.norm() - 1.5) < 0.1);
        }
    CHECK(vertices > 20);

    CHECK_THROWS_AS(map.extract_surface(0.0, 0.5), InvalidInputError);
}

TEST_CASE("environment-fitted roots cover the padded workspace") {
    Environment env;
    env.bbox = {Eigen::Vector2d(0, 0), Eigen::Vector2d(20, 18)};
    env.num_classes = 2;
    env.obstacles = {{}, {}};

    MapParams mp = small_params(0.3);
    mp.tree.voxel_size = 0.3;
    SemanticMap map = SemanticMap::for_environment(env, mp, 1.2);
    CHECK((map.root_ctr() - Eigen::Vector2d(10, 9)).norm() < 1e-12);
    // 20 + 2*1.2 = 22.4, rounded up to the next multiple of 0.3
    CHECK(map.root_side() == doctest::Approx(22.5));

    CHECK_THROWS_AS(SemanticMap::for_environment(env, mp, -0.1), ConfigError);
}

TEST_CASE("clipping removes cells outside the root box") {
    ObservationBatch b;
    b.keys = {GridKey(0, 0), GridKey(10, 0), GridKey(0, 40)};
    b.counts = {1, 2, 3};
    b.means = {0.1, 0.2, 0.3};

    Vec ctr = Vec::Zero(2);
    ObservationBatch kept = clip_batch_to_box(b, ctr, 2.0, 0.1);
    REQUIRE(kept.size() == 2);
    CHECK(kept.keys[0] == GridKey(0, 0));
    CHECK(kept.keys[1] == GridKey(10, 0));  // exactly on the face stays
    CHECK(kept.counts[1] == 2);
    CHECK(kept.means[1] == doctest::Approx(0.2));

    Vec bad = Vec::Zero(3);
    CHECK_THROWS_AS(clip_batch_to_box(b, bad, 2.0, 0.1), InvalidInputError);
}

TEST_CASE("map clones are independent") {
    MapParams mp = small_params();
    SemanticMap map(Vec::Zero(2), 8.0, mp);
    map.ingest({{1, circle_batch(1.0, 0.2, 0.1)}});
    SemanticMap copy = map.clone();

    map.ingest({{2, circle_batch(0.5, 0.2, 0.1)}});
    CHECK(map.observed_classes().size() == 2);
    CHECK(copy.observed_classes() == std::vector<int>{1});
}
