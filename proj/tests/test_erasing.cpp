#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "fsfg/erasing.hpp"

using namespace fsfg;

namespace {

FeatureArray random_features(int c, int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    FeatureArray f(c, h, w);
    for (auto& v : f.values) v = d(rng);
    return f;
}

}  // namespace

TEST_CASE("erase_mask thresholds against gamma * max") {
    SUBCASE("unique positive maximum is always erased for gamma < 1") {
        std::mt19937_64 rng(1);
        FeatureArray f = random_features(3, 4, 4, rng);
        f.at(1, 2, 3) += 5.0;  // make (2,3) the unique argmax of the channel sum
        BinaryMask m = erasing::erase_mask(f, 0.85);
        CHECK(m.at(2, 3) == 1.0);
    }
    SUBCASE("constant positive map erases everything") {
        FeatureArray f(2, 3, 3);
        f.values.setConstant(0.5);  // channel sum 1.0 > 0.85 everywhere
        BinaryMask m = erasing::erase_mask(f, 0.85);
        CHECK(m.count() == 9);
    }
    SUBCASE("worked 2x2 example") {
        // channel sum [[10,8],[1,0]]; theta = 8.5
        FeatureArray f(1, 2, 2);
        f.at(0, 0, 0) = 10.0;
        f.at(0, 0, 1) = 8.0;
        f.at(0, 1, 0) = 1.0;
        f.at(0, 1, 1) = 0.0;
        BinaryMask m = erasing::erase_mask(f, 0.85);
        CHECK(m.at(0, 0) == 1.0);
        CHECK(m.at(0, 1) == 0.0);
        CHECK(m.at(1, 0) == 0.0);
        CHECK(m.at(1, 1) == 0.0);
    }
    SUBCASE("gamma = 1 erases nothing (strict comparison)") {
        std::mt19937_64 rng(2);
        FeatureArray f = random_features(2, 5, 5, rng);
        CHECK(erasing::erase_mask(f, 1.0).count() == 0);
    }
    SUBCASE("mask entries are strictly binary") {
        std::mt19937_64 rng(3);
        FeatureArray f = random_features(4, 6, 6, rng);
        for (double v : erasing::erase_mask(f, 0.5).values) CHECK((v == 0.0 || v == 1.0));
    }
    SUBCASE("gamma outside (0,1] is rejected") {
        FeatureArray f(1, 2, 2);
        CHECK_THROWS_AS((void)erasing::erase_mask(f, 0.0), std::invalid_argument);
        CHECK_THROWS_AS((void)erasing::erase_mask(f, 1.5), std::invalid_argument);
    }
}

TEST_CASE("erase mask shrinks as gamma grows") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        FeatureArray f = random_features(3, 7, 7, rng);
        BinaryMask prev;
        for (int step = 0; step < 10; ++step) {
            const double gamma = 0.1 + 0.1 * step;
            BinaryMask cur = erasing::erase_mask(f, gamma);
            if (step > 0) {
                // cur subset of prev elementwise
                for (int s = 0; s < 49; ++s)
                    if (cur.values(s) == 1.0) CHECK(prev.values(s) == 1.0);
            }
            prev = cur;
        }
    }
}

TEST_CASE("apply_erase") {
    std::mt19937_64 rng(5);
    FeatureArray f = random_features(3, 4, 4, rng);

    SUBCASE("all-zero mask is the identity") {
        BinaryMask z{4, 4, Eigen::ArrayXd::Zero(16)};
        FeatureArray out = erasing::apply_erase(f, z);
        CHECK(out.values.isApprox(f.values));
    }
    SUBCASE("all-one mask zeroes the map") {
        BinaryMask ones{4, 4, Eigen::ArrayXd::Ones(16)};
        CHECK(erasing::apply_erase(f, ones).values.abs().maxCoeff() == 0.0);
    }
    SUBCASE("matches an elementwise loop oracle and leaves kept cells bit-identical") {
        BinaryMask m{4, 4, Eigen::ArrayXd::Zero(16)};
        std::bernoulli_distribution b(0.4);
        for (auto& v : m.values) v = b(rng) ? 1.0 : 0.0;
        FeatureArray out = erasing::apply_erase(f, m);
        for (int k = 0; k < 3; ++k)
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) {
                    const double expect = f.at(k, i, j) * (1.0 - m.at(i, j));
                    if (m.at(i, j) == 0.0)
                        CHECK(out.at(k, i, j) == f.at(k, i, j));  // bit-identical
                    else
                        CHECK(out.at(k, i, j) == 0.0);
                    CHECK(out.at(k, i, j) == doctest::Approx(expect));
                }
    }
    SUBCASE("shape mismatch throws") {
        BinaryMask m{3, 3, Eigen::ArrayXd::Zero(9)};
        CHECK_THROWS_AS((void)erasing::apply_erase(f, m), std::invalid_argument);
    }
}

TEST_CASE("autodiff apply_erase blocks gradients through erased cells") {
    std::mt19937_64 rng(6);
    FeatureArray f = random_features(2, 3, 3, rng);
    BinaryMask m{3, 3, Eigen::ArrayXd::Zero(9)};
    m.values(0) = 1.0;
    m.values(4) = 1.0;

    auto x = ad::leaf({2, 3, 3}, f.values);
    ad::Var loss = ad::sum_all(erasing::apply_erase(x, m));
    ad::backward(loss);
    for (int k = 0; k < 2; ++k)
        for (int s = 0; s < 9; ++s) {
            const double g = x->grad(k * 9 + s);
            if (m.values(s) == 1.0)
                CHECK(g == 0.0);
            else
                CHECK(g == doctest::Approx(1.0));
        }
}
