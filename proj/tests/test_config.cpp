// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/config.hpp"

#include <filesystem>
#include <string>

#include "doctest.h"
#include "otb/util.hpp"

using namespace otb;

namespace {

std::filesystem::path tmp_dir() {
  const auto dir = std::filesystem::path(OTB_TEST_TMPDIR) / "config";
  std::filesystem::create_directories(dir);
  return dir;
}

/// True when calling `f` raises a ConfigError whose message contains `needle`.
template <class F>
bool config_error_mentions(F&& f, const std::string& needle) {
  try {
    f();
  } catch (const ConfigError& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_CASE("sections, scalars, strings, booleans and arrays parse") {
  Config cfg = Config::parse(
      "seed = 42            # root-level key\n"
      "quiet = true\n"
      "label = \"run # 7\"  # hash inside quotes is not a comment\n"
      "\n"
      "[prior]\n"
      "kind = \"gaussian\"\n"
      "dim = 2\n"
      "var = [2.0, 0.5]\n"
      "\n"
      "[solver]\n"
      "grad_tol = 1e-8\n");
  CHECK(cfg.integer("seed") == 42);
  CHECK(cfg.boolean_or("quiet", false));
  CHECK(cfg.str("label") == "run # 7");
  CHECK(cfg.str("prior.kind") == "gaussian");
  CHECK(cfg.integer("prior.dim") == 2);
  const std::vector<double> var = cfg.numbers("prior.var");
  REQUIRE(var.size() == 2);
  CHECK(var[0] == 2.0);
  CHECK(var[1] == 0.5);
  CHECK(cfg.number("solver.grad_tol") == 1e-8);
  cfg.require_all_consumed();  // everything was read
}

TEST_CASE("scalars broadcast and arrays enforce their arity") {
  Config cfg = Config::parse("a = 3.5\nb = [1, 2, 3]\n");
  const Vec a = cfg.vec_broadcast("a", 4);
  CHECK(a.size() == 4);
  CHECK(a[3] == 3.5);
  const std::vector<double> one = cfg.numbers("a");  // scalar reads as array
  CHECK(one.size() == 1);
  CHECK(config_error_mentions([&] { cfg.vec_broadcast("b", 2); }, "needs 1 or 2"));

  Config s = Config::parse("one = \"x\"\nmany = [\"p\", \"q\"]\n");
  CHECK(s.strs("one") == std::vector<std::string>{"x"});
  CHECK(s.strs("many") == std::vector<std::string>({"p", "q"}));
  CHECK(config_error_mentions([&] { s.strs("absent"); }, "required but missing"));
}

TEST_CASE("malformed lines are rejected with their line number") {
  CHECK(config_error_mentions([] { Config::parse("[prior\nx = 1\n"); },
                              ":1"));
  CHECK(config_error_mentions([] { Config::parse("x 1\n"); }, "expected key = value"));
  CHECK(config_error_mentions([] { Config::parse("2x = 1\n"); }, "bad key name"));
  CHECK(config_error_mentions([] { Config::parse("x =\n"); }, "missing value"));
  CHECK(config_error_mentions([] { Config::parse("x = \"open\n"); },
                              "unterminated string"));
  CHECK(config_error_mentions([] { Config::parse("x = [1, 2\n"); },
                              "unterminated array"));
  CHECK(config_error_mentions([] { Config::parse("x = [1, potato]\n"); },
                              "bad number 'potato'"));
  CHECK(config_error_mentions([] { Config::parse("x = 3..5\n"); }, "bad value"));
  CHECK(config_error_mentions([] { Config::parse("[a]\nx = 1\nx = 2\n"); },
                              "duplicate key 'a.x'"));
}

TEST_CASE("type and presence errors name the key") {
  Config cfg = Config::parse("x = 5\ns = \"text\"\n");
  CHECK(config_error_mentions([&] { cfg.number("missing"); },
                              "'missing' is required but missing"));
  CHECK(config_error_mentions([&] { cfg.number("s"); },
                              "has type string, expected number"));
  CHECK(config_error_mentions([&] { cfg.str("x"); },
                              "has type number, expected string"));
  Config frac = Config::parse("n = 2.5\n");
  CHECK(config_error_mentions([&] { frac.integer("n"); }, "must be an integer"));
}

TEST_CASE("unconsumed keys are reported by name") {
  Config cfg = Config::parse("known = 1\n[prior]\nkindd = \"gaussian\"\nextra = 2\n");
  CHECK(cfg.number("known") == 1.0);
  CHECK(config_error_mentions([&] { cfg.require_all_consumed(); }, "prior.kindd"));
  CHECK(config_error_mentions([&] { cfg.require_all_consumed(); }, "prior.extra"));
}

TEST_CASE("the resolved rendering re-parses to itself") {
  const std::string text =
      "seed = 42\n"
      "tag = \"baseline\"\n"
      "flags = [\"a\", \"b\"]\n"
      "[prior]\n"
      "kind = \"gamma\"\n"
      "shape = [2, 1.5]\n"
      "quiet = false\n"
      "[solver]\n"
      "max_iters = 200\n";
  Config cfg = Config::parse(text);
  const std::string first = cfg.resolved();
  Config again = Config::parse(first, "resolved");
  CHECK(again.resolved() == first);
  // root keys must precede every section header or they change owner on
  // re-parse ("seed" sorts after "prior.*" in the map, so order is deliberate)
  CHECK(first.find("seed = 42") < first.find("[prior]"));
  CHECK(first.find("tag = ") < first.find("[prior]"));
  CHECK(again.integer("seed") == 42);
  CHECK(again.str("prior.kind") == "gamma");
}

TEST_CASE("files parse the same as inline text") {
  const auto path = (tmp_dir() / "run.toml").string();
  write_text_file(path, "x = 7\n[s]\ny = \"z\"\n");
  Config cfg = Config::parse_file(path);
  CHECK(cfg.integer("x") == 7);
  CHECK(cfg.str("s.y") == "z");
  CHECK(cfg.origin() == path);
  CHECK_THROWS_AS(Config::parse_file((tmp_dir() / "absent.toml").string()), Error);
}

TEST_CASE("priors build from their sections") {
  Config cfg = Config::parse(
      "[prior]\nkind = \"gaussian\"\ndim = 2\nvar = [4, 1]\n");
  const PriorModel g = prior_from_config(cfg);
  CHECK(g.dim() == 2);
  CHECK(g.mean().isZero(0.0));  // mean defaults to the origin

  Config u = Config::parse("[prior]\nkind = \"uniform\"\ndim = 2\nlo = 0\nhi = [2, 4]\n");
  const PriorModel ub = prior_from_config(u);
  CHECK(ub.in_support((Vec(2) << 1.0, 3.9).finished()));
  CHECK_FALSE(ub.in_support((Vec(2) << 1.0, 4.1).finished()));

  Config e = Config::parse("[prior]\nkind = \"exponential\"\nrate = 0.5\n");
  CHECK(prior_from_config(e).dim() == 1);
  Config l = Config::parse("[prior]\nkind = \"laplace\"\nscale = 1.5\n");
  CHECK(prior_from_config(l).dim() == 1);
  Config gm = Config::parse("[prior]\nkind = \"gamma\"\nshape = 2\nscale = 0.5\n");
  CHECK(prior_from_config(gm).dim() == 1);

  Config bad = Config::parse("[prior]\nkind = \"cauchy\"\n");
  CHECK(config_error_mentions([&] { prior_from_config(bad); },
                              "unknown prior kind 'cauchy'"));
  Config neg = Config::parse("[prior]\nkind = \"gaussian\"\ndim = 0\nvar = 1\n");
  CHECK_THROWS_AS(prior_from_config(neg), ConfigError);
  // alternate section name for chained sources
  Config alt = Config::parse("[target_prior]\nkind = \"laplace\"\nscale = 1\n");
  CHECK(prior_from_config(alt, "target_prior").dim() == 1);
}

TEST_CASE("likelihoods build and validate from their sections") {
  Config none = Config::parse("x = 1\n");
  CHECK_FALSE(has_likelihood(none));
  Config off = Config::parse("[likelihood]\nkind = \"none\"\n");
  CHECK_FALSE(has_likelihood(off));

  Config p = Config::parse("[likelihood]\nkind = \"poisson\"\ncounts = [1, 0]\n");
  CHECK(has_likelihood(p));
  const LikelihoodModel pm = likelihood_from_config(p, 2);
  CHECK(pm.log_likelihood((Vec(2) << 1.0, 0.5).finished()) ==
        doctest::Approx(std::log(1.0) - 1.0 + 0.0 - 0.5).epsilon(1e-12));
  Config pneg = Config::parse("[likelihood]\nkind = \"poisson\"\ncounts = -1\n");
  CHECK_THROWS_AS(likelihood_from_config(pneg, 1), ConfigError);
  Config pfrac = Config::parse("[likelihood]\nkind = \"poisson\"\ncounts = 1.5\n");
  CHECK_THROWS_AS(likelihood_from_config(pfrac, 1), ConfigError);
  Config parity = Config::parse("[likelihood]\nkind = \"poisson\"\ncounts = [1, 2]\n");
  CHECK_THROWS_AS(likelihood_from_config(parity, 1), ConfigError);

  // gaussian_linear: the flat matrix fills row-major, m rows from the length
  Config gl = Config::parse(
      "[likelihood]\nkind = \"gaussian_linear\"\nmatrix = [1, 0.3, 0.1, 0.8]\n"
      "noise_var = 0.5\ny = [0.7, -0.2]\n");
  const LikelihoodModel glm = likelihood_from_config(gl, 2);
  Mat M(2, 2);
  M << 1.0, 0.3, 0.1, 0.8;
  const Vec x = (Vec(2) << 0.4, -0.1).finished();
  const Vec r = (Vec(2) << 0.7, -0.2).finished() - M * x;
  const double expect = -0.5 * r.squaredNorm() / 0.5 - std::log(2.0 * M_PI * 0.5);
  CHECK(glm.log_likelihood(x) == doctest::Approx(expect).epsilon(1e-12));
  Config glbad = Config::parse(
      "[likelihood]\nkind = \"gaussian_linear\"\nmatrix = [1, 2, 3]\n"
      "noise_var = 1\ny = 1\n");
  CHECK_THROWS_AS(likelihood_from_config(glbad, 2), ConfigError);

  Config lg = Config::parse(
      "[likelihood]\nkind = \"logistic\"\nfeatures = [1, 0, 0, 1]\n"
      "labels = [1, 0]\n");
  const LikelihoodModel lgm = likelihood_from_config(lg, 2);
  const double l0 = lgm.log_likelihood(Vec::Zero(2));
  CHECK(l0 == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-12));
  Config lgbad = Config::parse(
      "[likelihood]\nkind = \"logistic\"\nfeatures = [1, 0]\nlabels = 2\n");
  CHECK_THROWS_AS(likelihood_from_config(lgbad, 2), ConfigError);

  Config sp = Config::parse(
      "[likelihood]\nkind = \"spectral\"\ngroup_sizes = [2, 1]\n"
      "magnitudes = [3, 4, 5]\nnoise_var = 100\n");
  const LikelihoodModel spm = likelihood_from_config(sp, 2);
  CHECK(std::isfinite(spm.log_likelihood((Vec(2) << 4.0, 5.0).finished())));
  Config spbad = Config::parse(
      "[likelihood]\nkind = \"spectral\"\ngroup_sizes = [2, 2]\n"
      "magnitudes = [3, 4, 5]\nnoise_var = 100\n");
  CHECK_THROWS_AS(likelihood_from_config(spbad, 2), ConfigError);

  Config unk = Config::parse("[likelihood]\nkind = \"cauchy\"\n");
  CHECK(config_error_mentions([&] { likelihood_from_config(unk, 1); },
                              "unknown likelihood kind"));
}

TEST_CASE("solver options read with defaults and ranges") {
  Config cfg = Config::parse("[solver]\nmax_iters = 50\ngrad_tol = 1e-6\n");
  const FitOptions o = solver_from_config(cfg);
  CHECK(o.max_iters == 50);
  CHECK(o.grad_tol == 1e-6);
  CHECK(o.shrink == FitOptions{}.shrink);  // untouched fields keep defaults
  CHECK(o.newton_param_limit == FitOptions{}.newton_param_limit);

  Config bad = Config::parse("[solver]\nshrink = 1.2\n");
  CHECK_THROWS_AS(solver_from_config(bad), ConfigError);
  Config bad2 = Config::parse("[solver]\nmax_iters = 0\n");
  CHECK_THROWS_AS(solver_from_config(bad2), ConfigError);

  Config deg = Config::parse("[basis]\ndegree = 4\n");
  CHECK(basis_degree_from_config(deg) == 4);
  Config none = Config::parse("x = 1\n");
  CHECK(basis_degree_from_config(none) == 3);  // documented default
  Config degbad = Config::parse("[basis]\ndegree = 11\n");
  CHECK_THROWS_AS(basis_degree_from_config(degbad), ConfigError);
}
