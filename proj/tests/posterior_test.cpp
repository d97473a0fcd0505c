// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include <boost/math/distributions/beta.hpp>

#include "dustlda/posterior.hpp"
#include "dustlda/vbi/fit.hpp"
#include "fixture.hpp"

namespace {

using namespace dustlda;

TEST(ThetaMarginal, Examples) {
  const std::vector<double> conv{8978.75, 1021.15};
  const auto s = theta_marginal(conv, 0);
  EXPECT_EQ(s.a, 8978.75);
  EXPECT_EQ(s.b, 1021.15);

  const std::vector<double> flat{1.0, 1.0};
  EXPECT_EQ(numerics::beta_summary(theta_marginal(flat, 0)).mean, 0.5);

  const std::vector<double> known{150.0, 1.0};
  EXPECT_NEAR(numerics::beta_summary(theta_marginal(known, 0)).mean, 150.0 / 151.0, 1e-15);
  EXPECT_NEAR(numerics::beta_summary(theta_marginal(known, 0)).mean, 0.99338, 1e-5);
}

TEST(ProfileMarginal, Examples) {
  const std::vector<double> h1{2315.42, 227.43, 17.50, 79.56, 33.14, 25.33, 70.77,
                               41.80,   7.76,   230.05, 45.80, 922.44, 1.98, 121.65};
  const auto s = beta_profile_marginal(h1, 0);
  EXPECT_EQ(s.a, 2315.42);
  EXPECT_NEAR(s.b, std::accumulate(h1.begin() + 1, h1.end(), 0.0), 1e-9);

  const std::vector<double> ones(14, 1.0);
  const auto u = beta_profile_marginal(ones, 5);
  EXPECT_EQ(u.a, 1.0);
  EXPECT_EQ(u.b, 13.0);
  EXPECT_NEAR(numerics::beta_summary(u).mean, 1.0 / 14.0, 1e-15);

  std::vector<double> spike(14, 1e-6);
  spike[3] = 1e6;
  EXPECT_NEAR(numerics::beta_summary(beta_profile_marginal(spike, 3)).mean, 1.0, 1e-10);
}

TEST(DirichletMarginal, Errors) {
  const std::vector<double> one{3.0};
  EXPECT_THROW(dirichlet_marginal(one, 0), DomainError);
  const std::vector<double> two{3.0, 1.0};
  EXPECT_THROW(dirichlet_marginal(two, 2), DomainError);
  const std::vector<double> bad{3.0, 0.0};
  EXPECT_THROW(dirichlet_marginal(bad, 0), DomainError);
}

TEST(ThetaMarginal, MeansOfARowSumToOne) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> d(-3.0, 4.0);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> row(2 + i % 6);
    for (double& v : row) v = std::pow(10.0, d(rng));
    double sum = 0.0;
    for (std::size_t m = 0; m < row.size(); ++m) sum += numerics::beta_summary(theta_marginal(row, m)).mean;
    EXPECT_NEAR(sum, 1.0, 1e-14);
  }
}

TEST(DensityCurve, IntegratesToOne) {
  for (auto [a, b] : std::vector<std::pair<double, double>>{{1, 1},
                                                            {2, 2},
                                                            {1, 13},
                                                            {0.5, 0.5},
                                                            {0.7, 4},
                                                            {8978.75, 1021.15},
                                                            {2007.53, 7992.69},
                                                            {2315.42, 1700.0},
                                                            {1.98, 4500.0}}) {
    const auto c = density_curve({a, b}, 512);
    EXPECT_NEAR(trapezoid(c), 1.0, 1e-3) << "a=" << a << " b=" << b;
    EXPECT_LE(c.x.size(), 512u);
    EXPECT_GT(c.x.size(), 400u);
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      EXPECT_GT(c.x[i], 0.0);
      EXPECT_LT(c.x[i], 1.0);
      if (i > 0) {
        EXPECT_GT(c.x[i], c.x[i - 1]);
      }
    }
    // Density values against Boost's Beta pdf.
    const boost::math::beta_distribution<double> ref(a, b);
    for (std::size_t i = 0; i < c.x.size(); i += 37) {
      const double r = boost::math::pdf(ref, c.x[i]);
      EXPECT_NEAR(c.density[i], r, 1e-8 * std::max(1.0, r));
    }
  }
}

struct Fitted {
  Corpus corpus;
  FitResult fit;
};

Fitted fit_fixture(Corpus c) {
  Fitted f{std::move(c), {}};
  f.fit = fit(f.corpus, FitConfig{});
  return f;
}

const ThetaMarginal& theta(const PosteriorReport& r, const std::string& loc, const std::string& src) {
  for (const auto& t : r.theta_marginals) {
    if (t.location_name == loc && t.source_name == src) return t;
  }
  throw std::runtime_error("no marginal " + loc + "/" + src);
}

TEST(BuildReport, BothKnownIntervalsContainTruth) {
  const auto f = fit_fixture(test::load_fixture());
  const auto rep = build_report(f.fit, f.corpus);
  const auto& e1 = theta(rep, "e1", "AT").summary;
  const auto& e2 = theta(rep, "e2", "LQ").summary;
  EXPECT_LE(e1.hpdi.lo, 0.90);
  EXPECT_GE(e1.hpdi.hi, 0.90);
  EXPECT_LE(e2.hpdi.lo, 0.80);
  EXPECT_GE(e2.hpdi.hi, 0.80);
  EXPECT_EQ(rep.theta_marginals.size(), 4u);
  EXPECT_EQ(rep.beta_marginals.size(), 28u);
  EXPECT_EQ(rep.elbo_trace, f.fit.elbo_trace);
}

TEST(BuildReport, Invariants) {
  const auto f = fit_fixture(test::load_fixture());
  const auto rep = build_report(f.fit, f.corpus);
  for (const std::string loc : {"e1", "e2"}) {
    EXPECT_NEAR(theta(rep, loc, "AT").summary.mean + theta(rep, loc, "LQ").summary.mean, 1.0, 0.02);
  }
  const auto check = [](const MarginalSummary& s) {
    EXPECT_GE(s.hpdi.lo, 0.0);
    EXPECT_LE(s.hpdi.hi, 1.0);
    EXPECT_LE(s.hpdi.lo, s.mean + 1e-12);
    EXPECT_GE(s.hpdi.hi, s.mean - 1e-12);
    EXPECT_NEAR(trapezoid(s.curve), 1.0, 1e-3);
  };
  for (const auto& t : rep.theta_marginals) check(t.summary);
  for (const auto& b : rep.beta_marginals) check(b.summary);
}

TEST(BuildReport, DeterministicGivenFit) {
  const auto f = fit_fixture(test::load_fixture());
  const auto a = build_report(f.fit, f.corpus);
  const auto b = build_report(f.fit, f.corpus);
  ASSERT_EQ(a.theta_marginals.size(), b.theta_marginals.size());
  for (std::size_t i = 0; i < a.theta_marginals.size(); ++i) {
    const auto& x = a.theta_marginals[i].summary;
    const auto& y = b.theta_marginals[i].summary;
    EXPECT_EQ(x.mean, y.mean);
    EXPECT_EQ(x.hpdi.lo, y.hpdi.lo);
    EXPECT_EQ(x.hpdi.hi, y.hpdi.hi);
    EXPECT_EQ(x.curve.x, y.curve.x);
    EXPECT_EQ(x.curve.density, y.curve.density);
  }
}

TEST(BuildReport, SingleSourceTraceIsConcentratedAtOne) {
  Corpus c;
  c.catalog = ParticleCatalog({"a", "b", "c"});
  c.source_names = {"K"};
  add_location(c, "K", LocationRole::known(0), {{5, 2, 1}, {6, 1, 1}});
  add_location(c, "e1", LocationRole::trace(), {{4, 2, 2}});
  const auto f = fit_fixture(c);
  const auto rep = build_report(f.fit, f.corpus);
  ASSERT_EQ(rep.theta_marginals.size(), 1u);
  const auto& s = rep.theta_marginals[0].summary;
  EXPECT_EQ(s.mean, 1.0);
  EXPECT_EQ(s.mode, 1.0);
  EXPECT_EQ(s.hpdi.lo, 1.0);
  EXPECT_EQ(s.hpdi.hi, 1.0);
  EXPECT_FALSE(s.shape.has_value());
}

TEST(BuildReport, LambdaDiagnosticsAreNormalized) {
  const auto f = fit_fixture(test::load_fixture());
  ReportOptions opts;
  opts.lambda_diagnostics = true;
  const auto rep = build_report(f.fit, f.corpus, opts);
  EXPECT_EQ(rep.lambda_diagnostics.size(), 2u * f.corpus.sample_count());
  for (const auto& d : rep.lambda_diagnostics) {
    EXPECT_NEAR(std::accumulate(d.normalized.begin(), d.normalized.end(), 0.0), 1.0, 1e-12);
  }
  EXPECT_TRUE(build_report(f.fit, f.corpus).lambda_diagnostics.empty());
}

}  // namespace
