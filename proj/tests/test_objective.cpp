#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "fsfg/objective.hpp"

using namespace fsfg;
using ad::Var;

namespace {

Eigen::ArrayXd randu(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Eigen::ArrayXd out(n);
    for (auto& v : out) v = d(rng);
    return out;
}

}  // namespace

TEST_CASE("global_ce") {
    SUBCASE("confident correct logit gives near-zero loss") {
        Var logits = ad::constant({5}, Eigen::ArrayXd{{10.0, 0.0, 0.0, 0.0, 0.0}});
        CHECK(objective::global_ce(logits, 0)->value(0) < 0.01);
    }
    SUBCASE("uniform logits give ln(G)") {
        Var logits = ad::constant({7}, Eigen::ArrayXd::Constant(7, 0.3));
        CHECK(objective::global_ce(logits, 4)->value(0) == doctest::Approx(std::log(7.0)));
    }
    SUBCASE("shift invariance") {
        std::mt19937_64 rng(1);
        Eigen::ArrayXd v = randu(6, rng);
        const double a = objective::global_ce(ad::constant({6}, v), 2)->value(0);
        const double b =
            objective::global_ce(ad::constant({6}, Eigen::ArrayXd(v + 3.14)), 2)->value(0);
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
    SUBCASE("out-of-range label throws") {
        Var logits = ad::constant({3}, Eigen::ArrayXd::Zero(3));
        CHECK_THROWS_AS((void)objective::global_ce(logits, 3), std::invalid_argument);
    }
    SUBCASE("batch form averages") {
        Var a = ad::constant({2}, Eigen::ArrayXd{{0.0, 0.0}});       // ln 2
        Var b = ad::constant({2}, Eigen::ArrayXd{{100.0, 0.0}});     // ~0
        const double m = objective::global_ce_batch({a, b}, {0, 0})->value(0);
        CHECK(m == doctest::Approx(std::log(2.0) / 2.0).epsilon(1e-6));
    }
}

TEST_CASE("local_fewshot_loss") {
    LossWeights w;
    w.tau = 10.0;
    SUBCASE("query matching prototype 0 with orthogonal alternative") {
        // single-cell features: query=(1,0), proto0=(1,0), proto1=(0,1)
        Var q = ad::constant({2, 1, 1}, Eigen::ArrayXd{{1.0, 0.0}});
        Var p0 = ad::constant({2, 1, 1}, Eigen::ArrayXd{{1.0, 0.0}});
        Var p1 = ad::constant({2, 1, 1}, Eigen::ArrayXd{{0.0, 1.0}});
        const double loss = objective::local_fewshot_loss({q}, {p0, p1}, {0}, w)->value(0);
        const double expect = -std::log(std::exp(10.0) / (std::exp(10.0) + 1.0));
        CHECK(loss == doctest::Approx(expect).epsilon(1e-8));
        CHECK(loss < 1e-4);
    }
    SUBCASE("identical prototypes give ln(N)") {
        std::mt19937_64 rng(2);
        Var q = ad::constant({3, 2, 2}, randu(12, rng, 0.1, 1.0));
        Var p = ad::constant({3, 2, 2}, randu(12, rng, 0.1, 1.0));
        const double loss = objective::local_fewshot_loss({q}, {p, p, p}, {0}, w)->value(0);
        CHECK(loss == doctest::Approx(std::log(3.0)).epsilon(1e-9));
    }
    SUBCASE("negative sign flips which class is most probable") {
        Var q = ad::constant({2, 1, 1}, Eigen::ArrayXd{{1.0, 0.0}});
        Var p0 = ad::constant({2, 1, 1}, Eigen::ArrayXd{{1.0, 0.0}});
        Var p1 = ad::constant({2, 1, 1}, Eigen::ArrayXd{{0.0, 1.0}});
        LossWeights wn = w;
        wn.softmax_sign = SoftmaxSign::negative_similarity;
        const double pos = objective::local_fewshot_loss({q}, {p0, p1}, {0}, w)->value(0);
        const double neg = objective::local_fewshot_loss({q}, {p0, p1}, {0}, wn)->value(0);
        CHECK(pos < std::log(2.0));
        CHECK(neg > std::log(2.0));
    }
    SUBCASE("increasing the true-class score decreases the loss monotonically") {
        // sweep a 1-parameter family: query interpolates toward prototype 0
        Var p0 = ad::constant({2, 1, 1}, Eigen::ArrayXd{{1.0, 0.0}});
        Var p1 = ad::constant({2, 1, 1}, Eigen::ArrayXd{{0.0, 1.0}});
        double prev = 1e30;
        for (int step = 0; step <= 8; ++step) {
            const double t = step / 8.0;
            Var q = ad::constant(
                {2, 1, 1}, Eigen::ArrayXd{{std::sin(t * 1.2) + 0.1, std::cos(t * 1.2)}});
            // score vs p0 grows with t for this parametrization
            const double loss = objective::local_fewshot_loss({q}, {p0, p1}, {0}, w)->value(0);
            CHECK(loss < prev);
            prev = loss;
        }
    }
    SUBCASE("gradient w.r.t. the query matches finite differences") {
        std::mt19937_64 rng(3);
        auto q = ad::leaf({3, 2, 2}, randu(12, rng, 0.2, 1.0));
        Var p0 = ad::constant({3, 2, 2}, randu(12, rng, 0.2, 1.0));
        Var p1 = ad::constant({3, 2, 2}, randu(12, rng, 0.2, 1.0));
        Var loss = objective::local_fewshot_loss({q}, {p0, p1}, {1}, w);
        ad::backward(loss);
        Eigen::ArrayXd analytic = q->grad;
        for (Eigen::Index i = 0; i < 12; ++i) {
            const double keep = q->value(i), h = 1e-6;
            q->value(i) = keep + h;
            const double up = objective::local_fewshot_loss({q}, {p0, p1}, {1}, w)->value(0);
            q->value(i) = keep - h;
            const double dn = objective::local_fewshot_loss({q}, {p0, p1}, {1}, w)->value(0);
            q->value(i) = keep;
            const double numeric = (up - dn) / (2 * h);
            const double denom = std::max({std::fabs(numeric), std::fabs(analytic(i)), 1e-6});
            CHECK(std::fabs(numeric - analytic(i)) / denom < 1e-4);
        }
    }
}

TEST_CASE("combine arithmetic") {
    SUBCASE("worked examples") {
        LossWeights w;  // alpha = beta = 0.5
        w.lambda = 0.0;
        LossBreakdown b = objective::combine_values(2.0, 2.0, 9.0, 9.0, w);
        CHECK(b.global_total == doctest::Approx(2.0));
        CHECK(b.total == doctest::Approx(b.global_total));

        LossWeights w2;
        w2.alpha = 0.3;
        w2.beta = 0.7;
        w2.lambda = 0.1;
        // local_total = 5 realized with alpha*l_raw + beta*l_ref = 5
        LossBreakdown b2 = objective::combine_values(1.0, 3.0, 5.0, 5.0, w2);
        CHECK(b2.global_total == doctest::Approx(0.3 + 2.1));
        CHECK(b2.local_total == doctest::Approx(5.0));
        CHECK(b2.total == doctest::Approx(2.9));
    }
    SUBCASE("identities hold to 1e-9 on random inputs") {
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> d(0.0, 5.0);
        for (int trial = 0; trial < 100; ++trial) {
            LossWeights w;
            w.alpha = d(rng);
            w.beta = d(rng);
            w.lambda = d(rng);
            const double gr = d(rng), gf = d(rng), lr = d(rng), lf = d(rng);
            LossBreakdown b = objective::combine_values(gr, gf, lr, lf, w);
            CHECK(std::fabs(b.global_total - (w.alpha * gr + w.beta * gf)) < 1e-9);
            CHECK(std::fabs(b.local_total - (w.alpha * lr + w.beta * lf)) < 1e-9);
            CHECK(std::fabs(b.total - (b.global_total + w.lambda * b.local_total)) < 1e-9);
        }
    }
    SUBCASE("graph form agrees with the numeric form and fills the breakdown") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> d(0.0, 3.0);
        LossWeights w;
        w.lambda = 0.4;
        const double gr = d(rng), gf = d(rng), lr = d(rng), lf = d(rng);
        LossBreakdown out;
        Var total = objective::combine(ad::constant({1}, Eigen::ArrayXd::Constant(1, gr)),
                                       ad::constant({1}, Eigen::ArrayXd::Constant(1, gf)),
                                       ad::constant({1}, Eigen::ArrayXd::Constant(1, lr)),
                                       ad::constant({1}, Eigen::ArrayXd::Constant(1, lf)), w,
                                       &out);
        LossBreakdown ref = objective::combine_values(gr, gf, lr, lf, w);
        CHECK(total->value(0) == doctest::Approx(ref.total).epsilon(1e-12));
        CHECK(out.total == doctest::Approx(ref.total).epsilon(1e-12));
        CHECK(out.global_raw == doctest::Approx(gr));
        CHECK(out.local_refined == doctest::Approx(lf));
    }
    SUBCASE("lambda = 0 removes local gradients exactly") {
        std::mt19937_64 rng(6);
        auto g_raw = ad::leaf({1}, Eigen::ArrayXd::Constant(1, 1.5));
        auto l_raw = ad::leaf({1}, Eigen::ArrayXd::Constant(1, 2.5));
        LossWeights w;
        w.lambda = 0.0;
        Var total = objective::combine(g_raw, ad::constant({1}, Eigen::ArrayXd::Zero(1)), l_raw,
                                       ad::constant({1}, Eigen::ArrayXd::Zero(1)), w);
        ad::backward(total);
        CHECK(l_raw->grad(0) == 0.0);
        CHECK(g_raw->grad(0) == doctest::Approx(w.alpha));
    }
}
