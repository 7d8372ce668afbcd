#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "fsfg/backbone.hpp"
#include "fsfg/model.hpp"

using namespace fsfg;
using ad::Var;

namespace {

Image random_image(int size, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    Image img(size, size);
    for (auto& p : img.pixels) p = d(rng);
    return img;
}

}  // namespace

TEST_CASE("output-shape contracts on 84x84 input") {
    std::mt19937_64 rng(1);
    Image img = random_image(84, rng);

    struct Case {
        Architecture arch;
        int c, s;
    };
    for (const Case& c : {Case{Architecture::resnet12, 512, 11},
                          Case{Architecture::conv64, 64, 10},
                          Case{Architecture::resnet18_like, 512, 11},
                          Case{Architecture::tiny_test, 8, 5}}) {
        BackboneConfig cfg;
        cfg.architecture = c.arch;
        CHECK(cfg.output_channels() == c.c);
        CHECK(cfg.output_spatial() == c.s);
        Backbone bb(cfg, 3);
        FeatureArray f = bb.extract_values(img);
        CHECK(f.c == c.c);
        CHECK(f.h == c.s);
        CHECK(f.w == c.s);
        CHECK(f.values.isFinite().all());
        CHECK(f.values.minCoeff() >= 0.0);  // rectified output
    }
}

TEST_CASE("zero input through tiny-test gives a zero feature map") {
    BackboneConfig cfg;
    cfg.architecture = Architecture::tiny_test;
    Backbone bb(cfg, 7);
    Image zero(84, 84);
    FeatureArray f = bb.extract_values(zero);
    CHECK(f.values.abs().maxCoeff() == 0.0);
}

TEST_CASE("wrong input size is rejected") {
    BackboneConfig cfg;
    cfg.architecture = Architecture::tiny_test;
    Backbone bb(cfg, 7);
    Image small(42, 42);
    CHECK_THROWS_AS((void)bb.extract(small), std::invalid_argument);
}

TEST_CASE("gap examples") {
    Var x = ad::constant({1, 2, 2}, Eigen::ArrayXd{{1.0, 3.0, 5.0, 7.0}});
    CHECK(ad::gap(x)->value(0) == doctest::Approx(4.0));

    Var c = ad::constant({3, 2, 2}, Eigen::ArrayXd::Constant(12, 0.7));
    Eigen::ArrayXd gc = ad::gap(c)->value;
    for (double v : gc) CHECK(v == doctest::Approx(0.7));

    // spatial permutation invariance
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Eigen::ArrayXd vals(2 * 9);
    for (auto& v : vals) v = d(rng);
    Eigen::ArrayXd perm = vals;
    for (int k = 0; k < 2; ++k)
        for (int s = 0; s < 9; ++s) perm(k * 9 + s) = vals(k * 9 + (s * 4 + 1) % 9);
    Eigen::ArrayXd g0 = ad::gap(ad::constant({2, 3, 3}, vals))->value;
    Eigen::ArrayXd g1 = ad::gap(ad::constant({2, 3, 3}, perm))->value;
    CHECK((g0 - g1).abs().maxCoeff() < 1e-12);
}

TEST_CASE("classify_global") {
    SUBCASE("zero feature map gives zero logits (no bias)") {
        ClassifierHead head = make_head(5, 4, 11);
        Var f = ad::constant({4, 3, 3}, Eigen::ArrayXd::Zero(36));
        Eigen::ArrayXd logits = classify_global(f, head)->value;
        CHECK(logits.abs().maxCoeff() == 0.0);
    }
    SUBCASE("identity head selects the pooled coordinate") {
        ClassifierHead head;
        head.num_classes = 3;
        head.feat_dim = 3;
        Eigen::ArrayXd eye = Eigen::ArrayXd::Zero(9);
        eye(0) = eye(4) = eye(8) = 1.0;
        head.weights = ad::leaf({3, 3}, eye);
        Eigen::ArrayXd fv = Eigen::ArrayXd::Zero(3 * 4);
        for (int s = 0; s < 4; ++s) fv(1 * 4 + s) = 2.0;  // channel 1 one-hot after gap
        Eigen::ArrayXd logits = classify_global(ad::constant({3, 2, 2}, fv), head)->value;
        CHECK(logits(0) == doctest::Approx(0.0));
        CHECK(logits(1) == doctest::Approx(2.0));
        CHECK(logits(2) == doctest::Approx(0.0));
    }
    SUBCASE("random case matches a dot-product oracle (G=5, c=4)") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> d(-1.0, 1.0);
        ClassifierHead head = make_head(5, 4, 13);
        Eigen::ArrayXd fv(4 * 9);
        for (auto& v : fv) v = d(rng);
        Eigen::ArrayXd logits = classify_global(ad::constant({4, 3, 3}, fv), head)->value;
        for (int g = 0; g < 5; ++g) {
            double acc = 0;
            for (int k = 0; k < 4; ++k) {
                double mean = 0;
                for (int s = 0; s < 9; ++s) mean += fv(k * 9 + s);
                mean /= 9.0;
                acc += head.weights->value(g * 4 + k) * mean;
            }
            CHECK(logits(g) == doctest::Approx(acc).epsilon(1e-12));
        }
    }
    SUBCASE("channel mismatch throws") {
        ClassifierHead head = make_head(5, 4, 17);
        Var f = ad::constant({3, 2, 2}, Eigen::ArrayXd::Zero(12));
        CHECK_THROWS_AS((void)classify_global(f, head), std::invalid_argument);
    }
}

TEST_CASE("raw and refined stages share extractor parameters, not heads") {
    BackboneConfig cfg;
    cfg.architecture = Architecture::tiny_test;
    FewShotModel model(cfg, 6, 5);
    auto named = model.named_parameters();
    CHECK(named.count("head1.w") == 1);
    CHECK(named.count("head2.w") == 1);
    // the two heads are independently initialized
    CHECK_FALSE(named["head1.w"]->value.isApprox(named["head2.w"]->value));
    // every extractor parameter appears exactly once; the raw and refined
    // forward passes read the same underlying nodes
    for (const auto& [name, var] : model.backbone().parameters()) {
        REQUIRE(named.count(name) == 1);
        CHECK(named[name].get() == var.get());
    }
}

TEST_CASE("checkpoint round trip preserves config and tensors exactly") {
    BackboneConfig cfg;
    cfg.architecture = Architecture::tiny_test;
    FewShotModel model(cfg, 4, 9);
    const std::string path = "test_backbone_ckpt.bin";
    model.save(path);

    Checkpoint ck = load_checkpoint(path);
    CHECK(ck.config.architecture == Architecture::tiny_test);
    CHECK(ck.config.input_size == 84);
    auto named = model.named_parameters();
    REQUIRE(ck.tensors.size() == named.size());
    for (auto& [name, var] : named) {
        REQUIRE(ck.tensors.count(name) == 1);
        CHECK((ck.tensors[name] == var->value).all());
    }

    FewShotModel back = FewShotModel::load(path);
    std::mt19937_64 rng(4);
    Image img = random_image(84, rng);
    CHECK(back.backbone().extract_values(img).values.isApprox(
        model.backbone().extract_values(img).values));
    std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoint is rejected") {
    const std::string path = "test_backbone_bad.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "not a checkpoint";
    }
    CHECK_THROWS_AS((void)load_checkpoint(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("architecture names round-trip") {
    for (Architecture a : {Architecture::conv64, Architecture::resnet12,
                           Architecture::resnet18_like, Architecture::tiny_test})
        CHECK(architecture_from_string(architecture_to_string(a)) == a);
    CHECK_THROWS_AS((void)architecture_from_string("vgg"), std::invalid_argument);
}
