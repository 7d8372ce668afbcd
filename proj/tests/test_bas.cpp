#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <deque>
#include <random>

#include "fsfg/bas.hpp"
#include "fsfg/synthetic.hpp"

using namespace fsfg;

namespace {

BinaryMask make_mask(int h, int w, std::initializer_list<double> vals) {
    BinaryMask m;
    m.h = h;
    m.w = w;
    m.values = Eigen::ArrayXd(static_cast<Eigen::Index>(h) * w);
    std::copy(vals.begin(), vals.end(), m.values.data());
    return m;
}

// Independent 8-neighbourhood flood fill: returns the largest component
// with the (row_min, col_min) lexicographic tie-break.
BinaryMask flood_fill_oracle(const BinaryMask& m) {
    const int h = m.h, w = m.w;
    std::vector<int> comp(h * w, -1);
    struct Info {
        int size = 0;
        int rmin = 1 << 30, cmin = 1 << 30;
    };
    std::vector<Info> infos;
    for (int s = 0; s < h * w; ++s) {
        if (m.values(s) == 0.0 || comp[s] >= 0) continue;
        const int id = static_cast<int>(infos.size());
        infos.push_back({});
        std::deque<int> q{s};
        comp[s] = id;
        while (!q.empty()) {
            const int p = q.front();
            q.pop_front();
            const int i = p / w, j = p % w;
            infos[id].size++;
            infos[id].rmin = std::min(infos[id].rmin, i);
            if (i == infos[id].rmin) infos[id].cmin = std::min(infos[id].cmin, j);
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    const int ni = i + di, nj = j + dj;
                    if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
                    const int np = ni * w + nj;
                    if (m.values(np) != 0.0 && comp[np] < 0) {
                        comp[np] = id;
                        q.push_back(np);
                    }
                }
        }
    }
    // recompute exact (row_min, col_min) per component
    std::vector<std::pair<int, int>> tl(infos.size(), {1 << 30, 1 << 30});
    for (int s = 0; s < h * w; ++s)
        if (comp[s] >= 0) {
            const int i = s / w, j = s % w;
            auto& t = tl[comp[s]];
            if (i < t.first || (i == t.first && j < t.second)) t = {i, j};
        }
    int best = -1;
    for (std::size_t id = 0; id < infos.size(); ++id)
        if (best < 0 || infos[id].size > infos[best].size ||
            (infos[id].size == infos[best].size && tl[id] < tl[best]))
            best = static_cast<int>(id);
    BinaryMask out;
    out.h = h;
    out.w = w;
    out.values = Eigen::ArrayXd::Zero(h * w);
    if (best >= 0)
        for (int s = 0; s < h * w; ++s)
            if (comp[s] == best) out.values(s) = 1.0;
    return out;
}

}  // namespace

TEST_CASE("aggregate_channels sums over the channel axis") {
    FeatureArray f(2, 1, 1);
    f.at(0, 0, 0) = 1.0;
    f.at(1, 0, 0) = 2.0;
    CHECK(bas::aggregate_channels(f).values(0) == doctest::Approx(3.0));

    FeatureArray z(3, 2, 2);
    CHECK(bas::aggregate_channels(z).values.abs().maxCoeff() == 0.0);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    FeatureArray r(4, 3, 3);
    for (auto& v : r.values) v = d(rng);
    ActivationMap a = bas::aggregate_channels(r);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0;
            for (int k = 0; k < 4; ++k) acc += r.at(k, i, j);
            CHECK(a.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("adaptive_threshold is the spatial mean") {
    ActivationMap a{2, 2, Eigen::ArrayXd{{4.0, 0.0, 0.0, 0.0}}};
    CHECK(bas::adaptive_threshold(a) == doctest::Approx(1.0));
    ActivationMap c{3, 3, Eigen::ArrayXd::Constant(9, 2.5)};
    CHECK(bas::adaptive_threshold(c) == doctest::Approx(2.5));
    // permutation invariance
    ActivationMap p = a;
    std::swap(p.values(0), p.values(3));
    CHECK(bas::adaptive_threshold(p) == doctest::Approx(bas::adaptive_threshold(a)));
}

TEST_CASE("foreground_mask uses a strict comparison") {
    ActivationMap c{2, 2, Eigen::ArrayXd::Constant(4, 3.0)};
    CHECK(bas::foreground_mask(c, 3.0).values.abs().maxCoeff() == 0.0);

    ActivationMap a{2, 2, Eigen::ArrayXd{{4.0, 0.0, 0.0, 0.0}}};
    BinaryMask m = bas::foreground_mask(a, 1.0);
    CHECK(m.values(0) == 1.0);
    CHECK(m.values(1) == 0.0);
    CHECK(m.values(2) == 0.0);
    CHECK(m.values(3) == 0.0);

    std::mt19937_64 rng(2);
    std::normal_distribution<double> d;
    ActivationMap r{5, 5, Eigen::ArrayXd(25)};
    for (auto& v : r.values) v = d(rng);
    for (double v : bas::foreground_mask(r, 0.1).values) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("largest_connected_component") {
    SUBCASE("single cell is its own component") {
        BinaryMask m = make_mask(2, 2, {1, 0, 0, 0});
        CHECK(bas::largest_connected_component(m).values.isApprox(m.values));
    }
    SUBCASE("diagonal neighbours join under 8-connectivity") {
        BinaryMask m = make_mask(2, 2, {1, 0, 0, 1});
        CHECK(bas::largest_connected_component(m).count() == 2);
    }
    SUBCASE("smaller component is dropped") {
        // sizes 5 (top row) and 3 (bottom-right corner, separated)
        BinaryMask m = make_mask(4, 5, {1, 1, 1, 1, 1,
                                        0, 0, 0, 0, 0,
                                        0, 0, 0, 1, 1,
                                        0, 0, 0, 1, 0});
        BinaryMask out = bas::largest_connected_component(m);
        CHECK(out.count() == 5);
        for (int j = 0; j < 5; ++j) CHECK(out.at(0, j) == 1.0);
    }
    SUBCASE("all-zero stays all-zero") {
        BinaryMask m = make_mask(3, 3, {0, 0, 0, 0, 0, 0, 0, 0, 0});
        CHECK(bas::largest_connected_component(m).count() == 0);
    }
    SUBCASE("matches the flood-fill oracle on random masks") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 200; ++trial) {
            const double density = 0.1 + 0.8 * (trial / 199.0);
            BinaryMask m;
            m.h = m.w = 11;
            m.values = Eigen::ArrayXd(121);
            std::bernoulli_distribution b(density);
            for (auto& v : m.values) v = b(rng) ? 1.0 : 0.0;
            CHECK(bas::largest_connected_component(m).values.isApprox(
                flood_fill_oracle(m).values));
        }
    }
}

TEST_CASE("tight_bbox") {
    BinaryMask m;
    m.h = m.w = 11;
    m.values = Eigen::ArrayXd::Zero(121);
    m.values(2 * 11 + 3) = 1.0;
    CHECK(bas::tight_bbox(m) == BBox{2, 3, 2, 3});

    BinaryMask z;
    z.h = z.w = 11;
    z.values = Eigen::ArrayXd::Zero(121);
    CHECK(bas::tight_bbox(z) == BBox{0, 0, 10, 10});

    std::mt19937_64 rng(4);
    std::bernoulli_distribution b(0.3);
    for (int trial = 0; trial < 50; ++trial) {
        BinaryMask r;
        r.h = 7;
        r.w = 9;
        r.values = Eigen::ArrayXd(63);
        for (auto& v : r.values) v = b(rng) ? 1.0 : 0.0;
        if (r.count() == 0) continue;
        int rmin = 7, cmin = 9, rmax = -1, cmax = -1;
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 9; ++j)
                if (r.at(i, j) != 0.0) {
                    rmin = std::min(rmin, i);
                    cmin = std::min(cmin, j);
                    rmax = std::max(rmax, i);
                    cmax = std::max(cmax, j);
                }
        CHECK(bas::tight_bbox(r) == BBox{rmin, cmin, rmax, cmax});
    }
}

TEST_CASE("to_image_box maps feature cells to pixel spans") {
    CHECK(bas::to_image_box({0, 0, 10, 10}, 11, 11, 84, 84) == ImageBBox{0, 0, 83, 83});
    CHECK(bas::to_image_box({0, 0, 0, 0}, 2, 2, 84, 84) == ImageBBox{0, 0, 41, 41});
    const int lo = static_cast<int>(std::floor(5.0 * 84 / 11));
    const int hi = static_cast<int>(std::ceil(6.0 * 84 / 11)) - 1;
    CHECK(bas::to_image_box({5, 5, 5, 5}, 11, 11, 84, 84) == ImageBBox{lo, lo, hi, hi});
}

TEST_CASE("crop_and_zoom") {
    SUBCASE("full-image box at source size is the identity") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> d(0.0, 1.0);
        Image x(6, 6);
        for (auto& p : x.pixels) p = d(rng);
        Image y = bas::crop_and_zoom(x, {0, 0, 5, 5}, 6);
        for (std::size_t i = 0; i < x.pixels.size(); ++i)
            CHECK(y.pixels[i] == doctest::Approx(x.pixels[i]).epsilon(1e-12));
    }
    SUBCASE("constant image stays constant under any box") {
        Image x(8, 8);
        for (auto& p : x.pixels) p = 0.3;
        Image y = bas::crop_and_zoom(x, {1, 2, 5, 6}, 8);
        for (double p : y.pixels) CHECK(p == doctest::Approx(0.3));
    }
    SUBCASE("2x2 checkerboard upsampled to 4x4 matches the bilinear formula") {
        Image x(2, 2);
        x.at(0, 0, 0) = x.at(1, 1, 0) = 1.0;  // red checkerboard
        Image y = bas::crop_and_zoom(x, {0, 0, 1, 1}, 4);
        // reference: pixel centers at (t+0.5)*0.5-0.5, clamped to [0,1]
        auto ref = [&](int t) { return std::clamp((t + 0.5) * 0.5 - 0.5, 0.0, 1.0); };
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                const double fy = ref(i), fx = ref(j);
                const double expect = (1 - fy) * ((1 - fx) * 1.0 + fx * 0.0) +
                                      fy * ((1 - fx) * 0.0 + fx * 1.0);
                CHECK(y.at(i, j, 0) == doctest::Approx(expect).epsilon(1e-12));
            }
    }
    SUBCASE("degenerate box falls back to the full image") {
        Image x(4, 4);
        x.at(2, 2, 1) = 0.8;
        Image y = bas::crop_and_zoom(x, {3, 3, 1, 1}, 4);
        Image full = bas::crop_and_zoom(x, {0, 0, 3, 3}, 4);
        CHECK(y.pixels == full.pixels);
    }
}

TEST_CASE("refine composes the pipeline") {
    SUBCASE("constant feature map falls back to a full-image resample") {
        Image x(8, 8);
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) x.at(i, j, 2) = (i + j) / 14.0;
        FeatureArray f(2, 4, 4);
        f.values.setConstant(1.0);
        auto [refined, fg] = bas::refine(x, f);
        CHECK(fg.mask.count() == 0);
        CHECK(fg.feature_box == BBox{0, 0, 3, 3});
        Image expect = resize(x, 8, 8);
        CHECK(refined.pixels == expect.pixels);
    }
    SUBCASE("single dominant cell zooms onto that cell's span") {
        Image x(8, 8);
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) x.at(i, j, 0) = (i * 8 + j) / 63.0;
        FeatureArray f(1, 4, 4);
        f.at(0, 1, 2) = 10.0;
        auto [refined, fg] = bas::refine(x, f);
        CHECK(fg.feature_box == BBox{1, 2, 1, 2});
        CHECK(fg.image_box == ImageBBox{2, 4, 3, 5});
        Image expect = bas::crop_and_zoom(x, {2, 4, 3, 5}, 8);
        CHECK(refined.pixels == expect.pixels);
    }
    SUBCASE("variance probe localizes a synthetic blob") {
        std::mt19937_64 rng(6);
        double cy = 0, cx = 0;
        Image x = render_blob_probe(rng, 84, &cy, &cx);
        FeatureArray f = variance_probe_features(x, 11, 11);
        auto [refined, fg] = bas::refine(x, f);
        CHECK(fg.image_box.row_min <= static_cast<int>(cy));
        CHECK(fg.image_box.row_max >= static_cast<int>(cy));
        CHECK(fg.image_box.col_min <= static_cast<int>(cx));
        CHECK(fg.image_box.col_max >= static_cast<int>(cx));
    }
    SUBCASE("output keeps the input spatial size") {
        Image x(10, 10);
        FeatureArray f(1, 3, 3);
        f.at(0, 0, 0) = 1.0;
        auto [refined, fg] = bas::refine(x, f);
        CHECK(refined.height == 10);
        CHECK(refined.width == 10);
    }
}

TEST_CASE("component mask properties on random inputs") {
    std::mt19937_64 rng(7);
    std::bernoulli_distribution b(0.4);
    for (int trial = 0; trial < 30; ++trial) {
        BinaryMask m;
        m.h = m.w = 9;
        m.values = Eigen::ArrayXd(81);
        for (auto& v : m.values) v = b(rng) ? 1.0 : 0.0;
        BinaryMask comp = bas::largest_connected_component(m);
        // component is a subset of the mask
        for (int s = 0; s < 81; ++s)
            if (comp.values(s) == 1.0) CHECK(m.values(s) == 1.0);
        if (comp.count() == 0) continue;
        // tight box edges each touch at least one 1
        BBox box = bas::tight_bbox(comp);
        bool top = false, bottom = false, left = false, right = false;
        for (int j = box.col_min; j <= box.col_max; ++j) {
            top = top || comp.at(box.row_min, j) == 1.0;
            bottom = bottom || comp.at(box.row_max, j) == 1.0;
        }
        for (int i = box.row_min; i <= box.row_max; ++i) {
            left = left || comp.at(i, box.col_min) == 1.0;
            right = right || comp.at(i, box.col_max) == 1.0;
        }
        CHECK(top);
        CHECK(bottom);
        CHECK(left);
        CHECK(right);
    }
}
