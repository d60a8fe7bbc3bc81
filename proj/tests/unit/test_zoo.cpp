#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "zoosel/zoo.hpp"

namespace zoosel {
namespace {

using testing::random_vector;
using testing::TempDir;

ForecasterSpec make(const std::string& id, ForecasterKind k) { return {id, std::move(k), 0, 1.0, ""}; }

std::vector<ForecasterSpec> kind_grid() {
  return {make("sn", kind::SeasonalNaive{3}),       make("drift", kind::Drift{}),
          make("mean", kind::HistoricMean{}),        make("ar2", kind::Autoregressive{2}),
          make("ses", kind::Ses{0.4}),               make("holt", kind::HoltLinear{0.5, 0.2}),
          make("np", kind::NeuralPatch{3, 2, {0.1, -0.2, 0.3, 0.4, 0.5, -0.6, 0.0, 0.1, 1.0, -1.0, 0.2}})};
}

TEST(Forecast, HandExamples) {
  const std::vector<double> ctx{1, 9, 1, 9};
  EXPECT_EQ(forecast(make("a", kind::SeasonalNaive{2}), ctx, 3).values, (std::vector<double>{1, 9, 1}));
  EXPECT_EQ(forecast(make("a", kind::HistoricMean{}), std::vector<double>{2, 4}, 2).values,
            (std::vector<double>{3, 3}));
  EXPECT_EQ(forecast(make("a", kind::Drift{}), std::vector<double>{0, 1, 2, 3}, 2).values,
            (std::vector<double>{4, 5}));
}

TEST(Forecast, SesAndHoltRecursions) {
  // level: 0 -> 0.5*2 + 0.5*0 = 1 -> 0.5*4 + 0.5*1 = 2.5
  EXPECT_EQ(forecast(make("s", kind::Ses{0.5}), std::vector<double>{0, 2, 4}, 2).values,
            (std::vector<double>{2.5, 2.5}));
  // alpha = beta = 1 on a line tracks it exactly
  EXPECT_EQ(forecast(make("h", kind::HoltLinear{1.0, 1.0}), std::vector<double>{1, 3, 5, 7}, 2).values,
            (std::vector<double>{9, 11}));
}

TEST(Forecast, ContextTooShortNamesModel) {
  try {
    (void)forecast(make("sn12", kind::SeasonalNaive{12}), std::vector<double>(5, 1.0), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::context_too_short);
    EXPECT_NE(std::string(e.what()).find("sn12"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("12"), std::string::npos);
  }
  EXPECT_ZOOSEL_ERROR((void)forecast(make("ar3", kind::Autoregressive{3}), std::vector<double>(6, 1.0), 1),
                      Errc::context_too_short);
}

TEST(Forecast, DeterministicAndShapeOverGrid) {
  std::mt19937_64 rng(21);
  for (const auto& spec : kind_grid()) {
    validate(spec);
    for (int rep = 0; rep < 20; ++rep) {
      const auto ctx = random_vector(spec.min_context() + rng() % 40, rng, -5, 5);
      for (std::size_t h : {1u, 5u, 12u}) {
        const auto a = forecast(spec, ctx, h);
        const auto b = forecast(spec, ctx, h);
        ASSERT_EQ(a.values.size(), h) << spec.model_id;
        EXPECT_EQ(a.values, b.values) << spec.model_id;
        for (double v : a.values) EXPECT_TRUE(std::isfinite(v));
      }
    }
  }
}

TEST(FitAr, RecoversNoiselessAr1) {
  std::vector<double> x(50);
  x[0] = 1.0;
  for (std::size_t t = 1; t < x.size(); ++t) x[t] = 0.5 * x[t - 1];
  const auto fit = fit_ar(x, 1);
  EXPECT_NEAR(fit.coefficients[0], 0.5, 1e-6);
  EXPECT_NEAR(fit.intercept, 0.0, 1e-6);
  EXPECT_FALSE(fit.ridge_fallback);
}

TEST(FitAr, ConstantSeriesForecastsTheConstant) {
  const std::vector<double> x(20, 4.25);
  const auto fit = fit_ar(x, 1);
  EXPECT_TRUE(fit.ridge_fallback);
  const auto fc = forecast(make("ar1", kind::Autoregressive{1}), x, 4);
  for (double v : fc.values) EXPECT_NEAR(v, 4.25, 1e-12);
  EXPECT_TRUE(fc.ridge_fallback);
}

TEST(FitAr, LinearTrendBeatsHistoricMeanOneStep) {
  std::vector<double> x(30);
  for (std::size_t t = 0; t < x.size(); ++t) x[t] = 2.0 + 0.7 * static_cast<double>(t);
  const double truth = 2.0 + 0.7 * 30.0;
  const double ar = forecast(make("ar2", kind::Autoregressive{2}), x, 1).values[0];
  const double hm = forecast(make("m", kind::HistoricMean{}), x, 1).values[0];
  EXPECT_LT(std::abs(ar - truth), std::abs(hm - truth));
}

TEST(FitAr, TooShortThrows) {
  EXPECT_ZOOSEL_ERROR((void)fit_ar(std::vector<double>{1, 2, 3, 4}, 2), Errc::context_too_short);
}

TEST(Validate, RejectsBadSpecs) {
  EXPECT_ZOOSEL_ERROR(validate(make("a", kind::Autoregressive{0})), Errc::invalid_argument);
  EXPECT_ZOOSEL_ERROR(validate(make("a", kind::Ses{0.0})), Errc::invalid_argument);
  EXPECT_ZOOSEL_ERROR(validate(make("a", kind::Ses{1.5})), Errc::invalid_argument);
  EXPECT_ZOOSEL_ERROR(validate(make("a", kind::HoltLinear{0.5, 0.0})), Errc::invalid_argument);
  EXPECT_ZOOSEL_ERROR(validate(make("a", kind::SeasonalNaive{0})), Errc::invalid_argument);
  EXPECT_ZOOSEL_ERROR(validate(make("a", kind::NeuralPatch{2, 2, {1.0}})), Errc::invalid_argument);
  auto neg = make("a", kind::Drift{});
  neg.release_index = -1;
  EXPECT_ZOOSEL_ERROR(validate(neg), Errc::invalid_argument);
  EXPECT_NO_THROW(validate(make("a", kind::Ses{1.0})));
}

TEST(ZooManifest, DuplicateIdsAndMinimumSize) {
  ZooManifest zoo{{make("a", kind::Drift{}), make("a", kind::HistoricMean{})}};
  EXPECT_ZOOSEL_ERROR(validate(zoo), Errc::invalid_argument);
  ZooManifest one{{make("a", kind::Drift{})}};
  EXPECT_ZOOSEL_ERROR(validate(one), Errc::invalid_argument);
  EXPECT_NO_THROW(validate(one, 1));
}

TEST(ZooManifest, JsonRoundTripAndFile) {
  ZooManifest zoo{kind_grid()};
  zoo.models[2].release_index = 7;
  zoo.models[3].characterization_source = "ar";
  const auto back = manifest_from_json(to_json(zoo));
  EXPECT_EQ(to_json(back), to_json(zoo));
  EXPECT_EQ(back.fingerprint(), zoo.fingerprint());

  TempDir dir("zoo");
  save_manifest(dir.path() / "zoo.json", zoo);
  EXPECT_EQ(to_json(load_manifest(dir.path() / "zoo.json")), to_json(zoo));
}

TEST(ZooManifest, ParseErrors) {
  EXPECT_ZOOSEL_ERROR((void)manifest_from_json(nlohmann::json::object()), Errc::parse_error);
  EXPECT_ZOOSEL_ERROR((void)spec_from_json({{"model_id", "x"}, {"kind", "transformer"}}), Errc::parse_error);
  EXPECT_ZOOSEL_ERROR((void)spec_from_json({{"model_id", "x"}, {"kind", "ar"}}), Errc::parse_error);
  EXPECT_ZOOSEL_ERROR((void)load_manifest("/nonexistent/zoo.json"), Errc::io_error);
}

TEST(ZooManifest, ReleaseOrderIsStable) {
  ZooManifest zoo{{make("a", kind::Drift{}), make("b", kind::Drift{}), make("c", kind::Drift{})}};
  zoo.models[0].release_index = 2;
  zoo.models[1].release_index = 1;
  zoo.models[2].release_index = 1;
  EXPECT_EQ(zoo.release_order(), (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(zoo.index_of("c"), 2u);
  EXPECT_ZOOSEL_ERROR((void)zoo.index_of("zz"), Errc::invalid_argument);
}

TEST(Forward, CountsCallsPerModel) {
  ForwardCounter counter;
  ForwardOptions opts{&counter, 0.0};
  const auto spec = make("m", kind::HistoricMean{});
  const auto task = TimeSeriesTask("t", Matrix(3, 10, 1.0), 4);
  const auto fc = forecast_task(spec, task, opts);
  EXPECT_EQ(fc.values.rows(), 3u);
  EXPECT_EQ(fc.values.cols(), 4u);
  EXPECT_EQ(fc.producer_model, "m");
  EXPECT_EQ(counter.count("m"), 3u);
  EXPECT_EQ(counter.total(), 3u);
  counter.reset();
  EXPECT_EQ(counter.total(), 0u);
}

TEST(DefaultZoo, HasOneSpecialistPerFamily) {
  const auto zoo = default_zoo();
  EXPECT_EQ(zoo.size(), 5u);
  EXPECT_NO_THROW(validate(zoo));
  std::set<std::string> pools;
  for (const auto& m : zoo.models) pools.insert(m.characterization_source);
  EXPECT_EQ(pools, (std::set<std::string>{"ar", "noise", "seasonal", "spiky", "trend"}));
  EXPECT_EQ(extended_zoo().size(), 6u);
  EXPECT_NO_THROW(validate(scaling_zoo(16)));
}

}  // namespace
}  // namespace zoosel
