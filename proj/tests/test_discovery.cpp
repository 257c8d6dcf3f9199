#include "support/oracles.hpp"

#include "ncd/discovery.hpp"
#include "ncd/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace ncd;

namespace {

double scalar(ad::Var v) { return v.value()(0, 0); }

std::vector<std::size_t> random_targets(std::size_t n, std::size_t classes, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::size_t> t(n);
    for (auto& v : t) v = std::uniform_int_distribution<std::size_t>(0, classes - 1)(rng.engine());
    return t;
}

} // namespace

TEST(PairwiseSimilarity, HandCasesAndSymmetry) {
    ad::Tape tape;
    const Tensor s = pairwise_similarity(tape.constant(Tensor::from({{1, 0}, {0, 1}}))).value();
    EXPECT_DOUBLE_EQ(s(0, 1), 0.5);
    EXPECT_DOUBLE_EQ(s(0, 0), 1.0 / (1.0 + std::exp(-1.0)));

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Tensor l = oracle::random_tensor(5, 3, seed);
        const Tensor got = pairwise_similarity(tape.constant(l)).value();
        EXPECT_LE(max_abs_diff(got, oracle::pairwise_similarity(l)), 1e-12);
        for (std::size_t i = 0; i < 5; ++i) {
            EXPECT_GE(got(i, i), 0.5);
            for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(got(i, j), got(j, i), 1e-12);
        }
    }
}

TEST(TopkPseudoPairs, WorkedExample) {
    const Tensor y = topk_pseudo_pairs(Tensor::from({{3, 2, 1}, {1, 3, 2}, {3, 2, 0}}), 2);
    EXPECT_EQ(y(0, 2), 1.0);
    EXPECT_EQ(y(0, 1), 0.0);
    EXPECT_EQ(y(1, 2), 0.0);
    EXPECT_EQ(topk_indices(std::vector<double>{1, 3, 2}, 2), (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(topk_indices(std::vector<double>{5, 5, 5, 5}, 2), (std::vector<std::size_t>{0, 1}));
}

TEST(TopkPseudoPairs, MatchesBruteForceAndIsRankInvariant) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Tensor z = oracle::random_tensor(20, 8, seed);
        // quantize so that some rows share sets and ties occur
        for (double& v : z.data()) v = std::round(v * 2.0);
        const Tensor y = topk_pseudo_pairs(z, 5);
        EXPECT_EQ(y, oracle::topk_pairs(z, 5));
        for (std::size_t i = 0; i < 20; ++i) {
            EXPECT_EQ(y(i, i), 1.0);
            for (std::size_t j = 0; j < 20; ++j) EXPECT_EQ(y(i, j), y(j, i));
        }
        Tensor monotone = z;
        for (double& v : monotone.data()) v = std::exp(v) * 3.0 + 1.0;
        EXPECT_EQ(topk_pseudo_pairs(monotone, 5), y);
    }
}

TEST(PairwiseBce, PerfectUniformAndOracle) {
    ad::Tape tape;
    const Tensor y = Tensor::from({{1, 0}, {0, 1}});
    EXPECT_LE(scalar(pairwise_bce(tape.constant(y), y)), 1e-10);
    EXPECT_NEAR(scalar(pairwise_bce(tape.constant(Tensor(3, 3, 0.5)), Tensor(3, 3, 1.0))), std::log(2.0), 1e-12);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Tensor s = oracle::pairwise_similarity(oracle::random_tensor(6, 3, seed));
        const Tensor t = oracle::topk_pairs(oracle::random_tensor(6, 4, seed + 50), 2);
        const double got = scalar(pairwise_bce(tape.constant(s), t));
        EXPECT_NEAR(got, oracle::pairwise_bce(s, t), 1e-12);
        EXPECT_GE(got, 0.0);
    }
}

TEST(AssignPseudoLabels, ExamplesRangeAndInvariance) {
    EXPECT_EQ(assign_pseudo_labels(Tensor::from({{0.1, 0.7, 0.2}}), 4), (std::vector<std::size_t>{5}));
    EXPECT_EQ(assign_pseudo_labels(Tensor::from({{1, 1}}), 4), (std::vector<std::size_t>{4}));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Tensor l = oracle::random_tensor(30, 3, seed);
        const auto labels = assign_pseudo_labels(l, 4);
        for (std::size_t v : labels) {
            EXPECT_GE(v, 4u);
            EXPECT_LT(v, 7u);
        }
        Tensor moved = l;
        for (std::size_t i = 0; i < 30; ++i)
            for (double& v : moved.row(i)) v = 2.5 * v + static_cast<double>(i) - 3.0;
        EXPECT_EQ(assign_pseudo_labels(moved, 4), labels);
    }
}

TEST(SelfTrainingLoss, SaturatedUniformAndOracle) {
    ad::Tape tape;
    EXPECT_LE(scalar(self_training_loss(tape.constant(Tensor::from({{0, 100, 0}})), {1})), 1e-10);
    EXPECT_NEAR(scalar(self_training_loss(tape.constant(Tensor(4, 7)), {4, 5, 6, 4})), std::log(7.0), 1e-12);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Tensor l = oracle::random_tensor(8, 5, seed, 3.0);
        const auto t = random_targets(8, 5, seed);
        EXPECT_NEAR(scalar(self_training_loss(tape.constant(l), t)), oracle::mean_cross_entropy(l, t), 1e-12);
    }
    EXPECT_THROW(self_training_loss(tape.constant(Tensor(1, 3)), {3}), std::out_of_range);
}

TEST(PerturbRepresentations, ZeroScaleAndZeroSigmaAreIdentity) {
    ad::Tape tape;
    const Tensor z = oracle::random_tensor(10, 4, 1);
    const std::vector<double> sigma{1, 2, 3, 4};
    EXPECT_EQ(perturb_representations(tape.constant(z), 0.0, sigma, 5).value(), z);
    EXPECT_EQ(perturb_representations(tape.constant(z), 0.5, std::vector<double>(4, 0.0), 5).value(), z);
    EXPECT_EQ(perturb_representations(tape.constant(z), 0.5, sigma, 5).value(),
              perturb_representations(tape.constant(z), 0.5, sigma, 5).value());
}

TEST(PerturbRepresentations, GradientPassesStraightThrough) {
    ad::Tape tape;
    const ad::Var z = tape.variable(oracle::random_tensor(6, 3, 2));
    tape.backward(ad::sum(perturb_representations(z, 0.7, std::vector<double>{1, 1, 1}, 3)));
    EXPECT_EQ(tape.grad(z), Tensor(6, 3, 1.0));
}

TEST(PerturbRepresentations, NoiseStdMatchesSigmaMonteCarlo) {
    const std::size_t draws = 100000;
    const std::vector<double> sigma{0.5, 1.0, 3.0};
    const double eta = 0.25;
    ad::Tape tape;
    const Tensor z(draws, 3, 1.0);
    const Tensor out = perturb_representations(tape.constant(z), eta, sigma, 11).value();
    for (std::size_t k = 0; k < 3; ++k) {
        double s = 0, s2 = 0;
        for (std::size_t i = 0; i < draws; ++i) {
            const double d = (out(i, k) - z(i, k)) / eta;
            s += d;
            s2 += d * d;
        }
        const double mean = s / draws;
        const double sd = std::sqrt(s2 / draws - mean * mean);
        EXPECT_NEAR(sd, sigma[k], 0.02 * sigma[k]) << "dim " << k;
    }
}

TEST(PerturbationSigma, EmpiricalUnitAndConstantFallback) {
    const Tensor z = Tensor::from({{1, 5}, {3, 5}});
    EXPECT_EQ(perturbation_sigma(z, SigmaMode::empirical), (std::vector<double>{1.0, 1.0}));
    const Tensor w = Tensor::from({{0, 5}, {4, 5}});
    EXPECT_EQ(perturbation_sigma(w, SigmaMode::empirical), (std::vector<double>{2.0, 1.0}));
    EXPECT_EQ(perturbation_sigma(w, SigmaMode::unit), (std::vector<double>{1.0, 1.0}));
}

TEST(PerturbConsistency, IdentityOppositeAndOracle) {
    ad::Tape tape;
    const Tensor l = oracle::random_tensor(4, 3, 1);
    EXPECT_EQ(scalar(perturb_consistency_loss(tape.constant(l), tape.constant(l))), 0.0);
    EXPECT_NEAR(scalar(perturb_consistency_loss(tape.constant(Tensor::from({{800, 0}})),
                                                tape.constant(Tensor::from({{0, 800}})))),
                1.0, 1e-12);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Tensor a = oracle::random_tensor(7, 4, seed);
        const Tensor b = oracle::random_tensor(7, 4, seed + 99);
        const double got = scalar(perturb_consistency_loss(tape.constant(a), tape.constant(b)));
        EXPECT_NEAR(got, oracle::perturb_consistency(a, b), 1e-12);
        EXPECT_GE(got, 0.0);
    }
}

TEST(Prototypes, HandCasesAndOracle) {
    const Prototypes single = compute_prototypes(Tensor::from({{1, 2}, {3, 4}}), std::vector<int>{7, 2}, {2, 7});
    EXPECT_EQ(single.mean, Tensor::from({{3, 4}, {1, 2}}));
    EXPECT_EQ(single.variance, Tensor(2, 2));
    EXPECT_EQ(single.counts, (std::vector<std::size_t>{1, 1}));

    const Prototypes pair = compute_prototypes(Tensor::from({{1, 3}, {3, 5}}), std::vector<int>{0, 0}, {0});
    EXPECT_EQ(pair.mean, Tensor::from({{2, 4}}));
    EXPECT_EQ(pair.variance, Tensor::from({{1, 1}}));

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Tensor z = oracle::random_tensor(30, 5, seed);
        std::vector<int> labels(30);
        for (std::size_t i = 0; i < 30; ++i) labels[i] = static_cast<int>((i * 7 + seed) % 3) * 2;
        const Prototypes p = compute_prototypes(z, labels, {0, 2, 4});
        const oracle::Moments m = oracle::prototypes(z, labels, {0, 2, 4});
        EXPECT_LE(max_abs_diff(p.mean, m.mean), 1e-12);
        EXPECT_LE(max_abs_diff(p.variance, m.variance), 1e-12);
        for (double v : p.variance.data()) EXPECT_GE(v, 0.0);
        EXPECT_EQ(Prototypes::from_json(p.to_json()), p);
    }
    EXPECT_THROW(compute_prototypes(Tensor(2, 2), std::vector<int>{0, 0}, {0, 1}), std::invalid_argument);
}

TEST(PrototypeBatch, DegenerateGaussianReproducesMeans) {
    const Prototypes p = compute_prototypes(Tensor::from({{1, 2}, {3, 4}, {-1, 0}}), std::vector<int>{0, 1, 3}, {0, 1, 3});
    const PrototypeBatch b = sample_prototype_batch(p, 4, 9);
    ASSERT_EQ(b.features.rows(), 12u);
    std::map<int, int> counts;
    for (std::size_t i = 0; i < 12; ++i) {
        ++counts[b.labels[i]];
        const std::size_t c = i / 4;
        EXPECT_EQ(b.labels[i], p.classes[c]);
        for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(b.features(i, k), p.mean(c, k));
    }
    EXPECT_EQ(counts, (std::map<int, int>{{0, 4}, {1, 4}, {3, 4}}));
}

TEST(PrototypeBatch, SampleMomentsMatchMonteCarlo) {
    Prototypes p;
    p.classes = {0, 1};
    p.counts = {10, 10};
    p.mean = Tensor::from({{2.0, -5.0}, {10.0, 1.0}});
    p.variance = Tensor::from({{1.0, 0.25}, {4.0, 0.01}});
    const std::size_t draws = 100000;
    const PrototypeBatch b = sample_prototype_batch(p, draws, 3);
    EXPECT_EQ(sample_prototype_batch(p, 10, 3).features, sample_prototype_batch(p, 10, 3).features);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < 2; ++k) {
            double s = 0;
            for (std::size_t i = c * draws; i < (c + 1) * draws; ++i) s += b.features(i, k);
            const double mu = p.mean(c, k);
            EXPECT_NEAR(s / draws, mu, 0.02 * std::abs(mu)) << "class " << c << " dim " << k;
        }
}

TEST(ReplayLoss, SaturatedUniformOracleAndRange) {
    ad::Tape tape;
    EXPECT_LE(scalar(replay_loss(tape.constant(Tensor::from({{100, 0, 0, 0}})), {0}, 2)), 1e-10);
    EXPECT_NEAR(scalar(replay_loss(tape.constant(Tensor(5, 6)), {0, 1, 2, 0, 1}, 3)), std::log(6.0), 1e-12);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Tensor l = oracle::random_tensor(9, 6, seed, 2.0);
        const auto t = random_targets(9, 4, seed);
        EXPECT_NEAR(scalar(replay_loss(tape.constant(l), t, 4)), oracle::mean_cross_entropy(l, t), 1e-12);
    }
    EXPECT_THROW(replay_loss(tape.constant(Tensor(1, 6)), {4}, 4), std::out_of_range);
}

TEST(DistillLoss, IdentityPythagorasAndOracle) {
    ad::Tape tape;
    const Tensor z = oracle::random_tensor(5, 3, 4);
    EXPECT_EQ(scalar(distill_loss(tape.constant(z), tape.constant(z))), 0.0);
    EXPECT_DOUBLE_EQ(scalar(distill_loss(tape.constant(Tensor::from({{3, 4}})), tape.constant(Tensor(1, 2)))), 5.0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Tensor a = oracle::random_tensor(8, 4, seed);
        const Tensor b = oracle::random_tensor(8, 4, seed + 7);
        EXPECT_NEAR(scalar(distill_loss(tape.constant(a), tape.constant(b))), oracle::distill(a, b), 1e-12);
    }
}

TEST(DistillLoss, GradientReachesCurrentOnly) {
    ad::Tape tape;
    const ad::Var frozen = tape.constant(oracle::random_tensor(4, 3, 1));
    const ad::Var current = tape.variable(oracle::random_tensor(4, 3, 2));
    tape.backward(distill_loss(frozen, current));
    EXPECT_FALSE(tape.requires_grad(frozen));
    EXPECT_GT(tape.grad(current).data()[0] * tape.grad(current).data()[0], 0.0);
}

TEST(Rampup, SaturationStartAndMonotonicity) {
    EXPECT_EQ(rampup(80, 80, 4.0), 4.0);
    EXPECT_EQ(rampup(500, 80, 0.1), 0.1);
    EXPECT_NEAR(rampup(0, 80, 1.0), std::exp(-5.0), 1e-15);
    EXPECT_NEAR(rampup(0, 80, 1.0), 0.006738, 1e-6);
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const double amp = rng.uniform(0.0, 10.0);
        const std::size_t len = 1 + static_cast<std::size_t>(rng.uniform(0.0, 200.0));
        for (std::size_t e = 0; e < len; ++e) EXPECT_LE(rampup(e, len, amp), rampup(e + 1, len, amp));
    }
}

TEST(TotalLoss, ArithmeticExamples) {
    LossWeights w;
    w.alpha1 = w.alpha2 = 1.0;
    w.rampup_length = 1;
    const LossComponents ones{1.0, 1.0, 1.0, 1.0, 1.0};
    EXPECT_EQ(total_loss(ones, w, 5).total, 14.0);

    LossWeights off = w;
    off.lambda = 0.0;
    const LossBreakdown b = total_loss(ones, off, 5);
    EXPECT_EQ(b.total, b.novel);

    LossWeights no_ramp = w;
    no_ramp.alpha1 = no_ramp.alpha2 = 0.0;
    no_ramp.lambda = 0.7;
    const LossComponents c{0.3, 2.0, 5.0, 0.4, 0.05};
    EXPECT_EQ(total_loss(c, no_ramp, 3).total, 0.3 + 0.7 * (0.4 + 10.0 * 0.05));
}

TEST(TotalLoss, RandomComponentsMatchHandComposition) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        LossWeights w;
        w.alpha1 = rng.uniform(0, 1);
        w.alpha2 = rng.uniform(0, 5);
        w.lambda = rng.uniform(0, 2);
        w.rampup_length = 1 + trial;
        const std::size_t epoch = static_cast<std::size_t>(rng.uniform(0, 100));
        const LossComponents c{rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 3)};
        const double b1 = w.alpha1 * std::exp(-5.0 * std::pow(1.0 - std::min(1.0, double(epoch) / double(w.rampup_length)), 2));
        const double b2 = w.alpha2 / w.alpha1 * b1;
        const double expected = *c.pseudo + b1 * *c.self + b2 * *c.perturb + w.lambda * (*c.replay + 10.0 * *c.distill);
        const LossBreakdown got = total_loss(c, w, epoch);
        EXPECT_NEAR(got.total, expected, 1e-12);

        ad::Tape tape;
        auto v = [&](double x) { return tape.constant(Tensor::from({{x}})); };
        LossBreakdown rep;
        const ad::Var t = total_loss(LossVars{v(*c.pseudo), v(*c.self), v(*c.perturb), v(*c.replay), v(*c.distill)}, w,
                                     epoch, &rep);
        EXPECT_NEAR(scalar(t), expected, 1e-12);
        EXPECT_NEAR(rep.total, expected, 1e-12);
    }
}

TEST(TotalLoss, DisabledTermsAndValidation) {
    const LossBreakdown b = total_loss(LossComponents{2.0, std::nullopt, std::nullopt, 1.0, std::nullopt}, LossWeights{}, 0);
    EXPECT_EQ(b.self, 0.0);
    EXPECT_EQ(b.total, 3.0);
    ad::Tape tape;
    EXPECT_THROW(total_loss(LossVars{}, LossWeights{}, 0, nullptr), std::invalid_argument);
    LossWeights bad;
    bad.rampup_length = 0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = {};
    bad.lambda = -1;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = {};
    bad.top_k = 0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(TotalLoss, CsvRowMatchesHeaderWidth) {
    LossBreakdown b;
    b.epoch = 3;
    b.total = 1.25;
    const std::string row = to_csv_row(b);
    const std::string header = kLossLogHeader;
    EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
    EXPECT_EQ(row.substr(0, 2), "3,");
}
