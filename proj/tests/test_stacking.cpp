#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "stackcast/error.hpp"
#include "stackcast/metrics.hpp"
#include "stackcast/stacking.hpp"
#include "synthetic.hpp"

using namespace stackcast;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("stackcast_stacking_" + name);
  fs::remove_all(p);
  return p;
}

// One protocol run shared by the tests that only read its result.
struct Fixture {
  SplitDataset data{synth::random_walk(300, 17), {}};
  PipelineConfig config = synth::tiny_pipeline();
  PipelineArtifacts artifacts = run_protocol(data, config);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST(Weights, Examples) {
  const auto eq = compute_weights(2.5, 2.5);
  EXPECT_EQ(eq.w_bl, 0.5);
  EXPECT_EQ(eq.w_tft, 0.5);
  const auto w = compute_weights(1, 3);
  EXPECT_DOUBLE_EQ(w.w_bl, 0.75);
  EXPECT_DOUBLE_EQ(w.w_tft, 0.25);
  const auto pub = compute_weights(0.82, 1.02);
  EXPECT_NEAR(pub.w_bl, 0.554, 5e-4);
  EXPECT_NEAR(pub.w_tft, 0.446, 5e-4);
  EXPECT_EQ(pub.error_bl, 0.82);
  EXPECT_EQ(pub.error_tft, 1.02);
}

TEST(Weights, SumOrderingAndScaleInvariance) {
  CounterRng rng(1);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform(0.01, 50), b = rng.uniform(0.01, 50), k = rng.uniform(0.1, 100);
    const auto w = compute_weights(a, b);
    EXPECT_NEAR(w.w_bl + w.w_tft, 1.0, 1e-15);
    EXPECT_GT(w.w_bl, 0);
    EXPECT_LT(w.w_bl, 1);
    EXPECT_EQ(w.w_bl > w.w_tft, a < b);
    const auto s = compute_weights(a * k, b * k);
    EXPECT_NEAR(s.w_bl, w.w_bl, 1e-14);
  }
}

TEST(Weights, RejectNonPositiveErrors) {
  EXPECT_THROW(compute_weights(0, 1), ValidationError);
  EXPECT_THROW(compute_weights(1, -2), ValidationError);
  EXPECT_THROW(compute_weights(std::nan(""), 1), ValidationError);
}

TEST(Weights, JsonRoundTripIsExact) {
  const auto w = compute_weights(0.8213, 1.0271);
  const auto json = w.to_json();
  EXPECT_NE(json.find("\"W_bl\""), std::string::npos);
  EXPECT_EQ(StackingWeights::from_json(json), w);
  EXPECT_ANY_THROW(StackingWeights::from_json("{not json"));
}

TEST(MetaFeatures, ScalesAndPairsWithoutSumming) {
  const std::vector<double> bl{100, 7}, tft{200, 9};
  StackingWeights half;
  const auto m = build_meta_features(bl, tft, half);
  ASSERT_EQ(m.rows(), 2);
  ASSERT_EQ(m.cols(), 2);
  EXPECT_EQ(m(0, 0), 50);
  EXPECT_EQ(m(0, 1), 100);
  StackingWeights degenerate{1, 0, 0, 0};
  const auto d = build_meta_features(bl, tft, degenerate);
  EXPECT_EQ(d(0, 1), 0);
  EXPECT_EQ(d(1, 1), 0);
  const std::vector<double> short_tft{1};
  EXPECT_THROW(build_meta_features(bl, short_tft, half), ValidationError);
}

TEST(MetaFeatures, ComponentSumIsConvexCombination) {
  CounterRng rng(2);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> bl{rng.uniform(100, 1e5)}, tft{rng.uniform(100, 1e5)};
    const auto w = compute_weights(rng.uniform(0.1, 10), rng.uniform(0.1, 10));
    const auto m = build_meta_features(bl, tft, w);
    const double s = m(0, 0) + m(0, 1);
    EXPECT_GE(s, std::min(bl[0], tft[0]) * (1 - 1e-15));
    EXPECT_LE(s, std::max(bl[0], tft[0]) * (1 + 1e-15));
  }
}

TEST(Seeds, DerivedPerStageAndDeterministic) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t k = 1; k <= 5; ++k) seen.insert(derive_seed(42, k));
  EXPECT_EQ(seen.size(), 5u);
  EXPECT_EQ(derive_seed(42, 3), derive_seed(42, 3));
  EXPECT_NE(derive_seed(42, 3), derive_seed(43, 3));
}

TEST(PipelineConfigTest, RejectsMismatchedLookback) {
  auto c = synth::tiny_pipeline();
  c.tft.lookback = 9;
  EXPECT_THROW(c.validate(), ValidationError);
  c = synth::tiny_pipeline();
  c.acb.inputs = 4;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Protocol, LedgerShowsNoTestReads) {
  const auto& f = fixture();
  EXPECT_EQ(f.data.ledger().count(Split::Test), 0u);
  EXPECT_TRUE(f.data.ledger().test_block_sealed());
  EXPECT_EQ(f.artifacts.ledger_csv.find(",test,"), std::string::npos);
  EXPECT_GT(f.data.ledger().count(Split::Train, "acb.train"), 0u);
  EXPECT_GT(f.data.ledger().count(Split::Validation, "stacking.validation.acb"), 0u);
  // Still sealed afterwards: a stray read of the test block fails loudly.
  const auto& b = f.data.boundaries();
  EXPECT_THROW(f.data.touch("stray", b.validation_end, b.validation_end), LedgerError);
}

TEST(Protocol, WeightsEqualValidationMapeWeights) {
  const auto& f = fixture();
  const auto m = validation_meta_set(f.artifacts, f.data, "check");
  const double e_bl = compute_metrics(m.targets, m.preds_bl).mape;
  const double e_tft = compute_metrics(m.targets, m.preds_tft).mape;
  EXPECT_EQ(f.artifacts.weights, compute_weights(e_bl, e_tft));
  EXPECT_EQ(m.targets.size(), f.data.boundaries().validation_size());
}

TEST(Protocol, MetaLearnerFitOnValidationBlock) {
  const auto& f = fixture();
  const auto m = validation_meta_set(f.artifacts, f.data, "check");
  auto cfg = f.config.meta;
  cfg.seed = derive_seed(f.config.seed, 5);
  const auto refit = BoostedEnsemble::fit(m.features, m.targets, cfg, &m.features, m.targets);
  EXPECT_TRUE(refit == f.artifacts.meta);
  EXPECT_EQ(f.artifacts.meta_log.validation_mae.size() >= f.artifacts.meta.trees().size(), true);
}

TEST(Protocol, FreezeReloadReproducesValidationFeaturesBitExactly) {
  const auto& f = fixture();
  const auto dir = scratch("freeze");
  f.artifacts.save(dir);
  const auto back = PipelineArtifacts::load(dir);
  EXPECT_EQ(back.hash(), f.artifacts.hash());
  EXPECT_EQ(back.weights, f.artifacts.weights);
  EXPECT_TRUE(back.meta == f.artifacts.meta);
  const auto a = validation_meta_set(f.artifacts, f.data, "orig");
  const auto b = validation_meta_set(back, f.data, "reload");
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(f.artifacts.meta.predict(a.features), back.meta.predict(b.features));
  for (const char* name : {"acb.model", "tft.model", "weights.json", "meta.gbt", "scaler.txt", "ledger.csv",
                           "config_hash.txt", "manifest.json", "acb_history.csv", "tft_history.csv"})
    EXPECT_TRUE(fs::exists(dir / name)) << name;
  fs::remove_all(dir);
}

TEST(Protocol, TamperedArtifactIsRejected) {
  const auto& f = fixture();
  const auto dir = scratch("tamper");
  f.artifacts.save(dir);
  {
    std::ifstream in(dir / "weights.json");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    auto w = StackingWeights::from_json(text);
    w.w_bl = 0.9;
    w.w_tft = 0.1;
    std::ofstream(dir / "weights.json") << w.to_json();
  }
  EXPECT_THROW(PipelineArtifacts::load(dir), LedgerError);
  fs::remove_all(dir);
}

TEST(Protocol, ParallelAndSequentialTrainingAgree) {
  const auto series = synth::random_walk(200, 5);
  auto c = synth::tiny_pipeline(6, 2);
  SplitDataset d1(series, {}), d2(series, {});
  const auto seq = run_protocol(d1, c);
  c.parallel_base_training = true;
  const auto par = run_protocol(d2, c);
  EXPECT_EQ(seq.hash(), par.hash());
}

TEST(Protocol, SeedChangesArtifacts) {
  const auto series = synth::random_walk(200, 5);
  auto c = synth::tiny_pipeline(6, 2);
  SplitDataset d1(series, {}), d2(series, {});
  const auto a = run_protocol(d1, c);
  c.seed = 7;
  EXPECT_NE(a.hash(), run_protocol(d2, c).hash());
}

TEST(Protocol, BetterTrainedAcbGetsLargerWeight) {
  // The TFT is left at its initialization; the ACB trains to convergence.
  SplitDataset data(synth::random_walk(300, 23), {});
  auto c = synth::tiny_pipeline(8, 60);
  c.acb_train.patience = 60;
  c.acb_train.adam.learning_rate = 0.01;
  c.tft_train.max_epochs = 0;
  const auto a = run_protocol(data, c);
  EXPECT_LT(a.weights.error_bl, a.weights.error_tft);
  EXPECT_GT(a.weights.w_bl, a.weights.w_tft);
}

TEST(Scaler, TextRoundTripIsExact) {
  const auto s = fixture().data.scaler();
  EXPECT_EQ(scaler_from_text(scaler_to_text(s)), s);
  EXPECT_ANY_THROW(scaler_from_text("garbage"));
}

TEST(Usd, InvertsCloseColumn) {
  const auto s = MinMaxScaler::from_bounds({0, 0, 0, 100, 0}, {1, 1, 1, 300, 1});
  EXPECT_EQ(to_usd(s, 0.5), 200);
  EXPECT_EQ(to_usd(s, 0.0), 100);
}
