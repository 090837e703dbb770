#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "blink/correlation.hpp"
#include "blink/errors.hpp"
#include "blink/fitting.hpp"
#include "blink/fixtures.hpp"
#include "blink/kv_text.hpp"
#include "blink/markov.hpp"
#include "blink/params.hpp"
#include "blink/simulator.hpp"

using namespace blink;

namespace {

template <class F>
auto from_text(const std::string& text, F parse) {
  std::istringstream in(text);
  return parse(in);
}

}  // namespace

TEST_CASE("key-value text") {
  const auto kv = from_text("# comment\n a = 1.5e3 \n\nb=text\n", KeyValueText::parse);
  CHECK(kv.get_double("a") == 1500.0);
  CHECK(kv.get("b") == "text");
  CHECK(kv.get_double("missing", 2.0) == 2.0);
  CHECK_THROWS_AS(kv.get("missing"), ParseError);
  CHECK_THROWS_AS(from_text("a = 1\na = 2\n", KeyValueText::parse), ParseError);
  CHECK_THROWS_AS(from_text("no equals sign\n", KeyValueText::parse), ParseError);
  CHECK_THROWS_AS(parse_double("1.5x", "v"), ParseError);
  CHECK(parse_double(format_double(0.1 + 0.2), "v") == 0.1 + 0.2);
}

TEST_CASE("parameter files") {
  const PhotoPhysicalParams p = fixtures::rate_params();
  const PhotoPhysicalParams q = from_text(params_to_text(p), read_params);
  CHECK(q.A31 == p.A31);
  CHECK(q.Omega31 == p.Omega31);
  CHECK(q.A32 == p.A32);
  CHECK(q.A21 == p.A21);
  CHECK(q.I_sc == p.I_sc);
  const std::string ok = "A31 = 3.3E8\nOmega31 = 2.9e8\nA32_1 = 34\nA32_2 = 249\nA21_1 = 430\nA21_2 = 2400\nI_sc = 0\n";
  CHECK(from_text(ok, read_params).A31 == 3.3e8);
  CHECK_THROWS_AS(from_text(ok + "extra = 1\n", read_params), ParseError);
  CHECK_THROWS_AS(from_text("A31 = 3.3e8\n", read_params), ParseError);
  CHECK_THROWS_AS(from_text("A31 = abc\n", read_params), ParseError);
  CHECK_THROWS_AS(read_params_file("/nonexistent/params.txt"), ParseError);
}

TEST_CASE("correlation CSV") {
  CorrelationSeries s;
  s.taus = {1e-9, 1e-8, 0.1};
  s.values = {0.4, 1.0 / 3.0, 1.0};
  const auto back = from_text(series_to_csv(s), read_series_csv);
  CHECK(back.taus == s.taus);
  CHECK(back.values == s.values);
  CHECK_FALSE(back.sigma.has_value());

  s.sigma = std::vector<double>{0.1, 0.2, 0.3};
  const auto back2 = from_text(series_to_csv(s), read_series_csv);
  REQUIRE(back2.sigma.has_value());
  CHECK(*back2.sigma == *s.sigma);

  CHECK(from_text("tau_s,g\r\n1e-9,0.5\r\n", read_series_csv).size() == 1);
  CHECK_THROWS_AS(from_text("tau,g\n1,1\n", read_series_csv), ParseError);
  CHECK_THROWS_AS(from_text("tau_s,g\n2,1\n1,1\n", read_series_csv), DomainError);
  CHECK_THROWS_AS(from_text("tau_s,g,sigma\n1,1,0\n", read_series_csv), DomainError);
  CHECK_THROWS_AS(from_text("tau_s,g\n1,1,1\n", read_series_csv), ParseError);
  CHECK_THROWS_AS(from_text("tau_s,g\n1,nan\n", read_series_csv), DomainError);
}

TEST_CASE("chain files") {
  PeriodChain c;
  c.intensities = {1e5, 0.0, 2e4};
  c.rates = Eigen::MatrixXd::Zero(3, 3);
  c.rates << 0, 10, 20, 30, 0, 0, 40, 5, 0;
  const PeriodChain back = from_text(chain_to_text(c), read_chain);
  CHECK(back.intensities == c.intensities);
  CHECK(back.rates == c.rates);
  CHECK_THROWS_AS(from_text("n = 1\nI_0 = 1\nq = 2\n", read_chain), ParseError);
  CHECK_THROWS_AS(from_text("n = 2\nI_0 = 1\nI_1 = 1\np_0_1 = -1\np_1_0 = 1\n", read_chain), DomainError);
  CHECK(from_text("n = 1\nI_0 = 1\n", read_chain).size() == 1);
}

TEST_CASE("trajectory files") {
  Trajectory t;
  t.duration = 2.0;
  t.seed = 42;
  t.arrival_times = {0.1, 0.123456789012345678, 1.9999999999999};
  const Trajectory back = from_text(trajectory_to_text(t), read_trajectory);
  CHECK(back.duration == t.duration);
  CHECK(back.seed == t.seed);
  CHECK(back.arrival_times == t.arrival_times);
  CHECK_THROWS_AS(from_text("0.1\n", read_trajectory), ParseError);
  CHECK_THROWS_AS(from_text("# duration=1 seed=1\n0.5\n0.2\n", read_trajectory), DomainError);
  CHECK_THROWS_AS(from_text("# duration=1 seed=1\n1.5\n", read_trajectory), DomainError);
}

TEST_CASE("fit configuration") {
  const FitConfig c = from_text(
      "split_tau = 2e-7\nbootstrap_resamples = 10\nbootstrap_seed = 5\nfree_amplitude = true\n"
      "guess.T_L = 0.01\nlower.T_L = 1e-4\nupper.T_L = 1\n",
      read_fit_config);
  CHECK(c.split_tau == 2e-7);
  CHECK(c.bootstrap_resamples == 10);
  CHECK(c.bootstrap_seed == 5);
  CHECK(c.free_amplitude);
  CHECK(c.initial_guess.at("T_L") == 0.01);
  CHECK(c.bound("T_L").lo == 1e-4);
  CHECK(c.bound("T_L").hi == 1.0);
  CHECK(c.bound("T_D1").hi == 1e3);
  CHECK_THROWS_AS(from_text("split_tau = -1\n", read_fit_config), DomainError);
  CHECK_THROWS_AS(from_text("lower.T_L = 2\nupper.T_L = 1\n", read_fit_config), DomainError);
  CHECK_THROWS_AS(from_text("lower.nonsense = 2\n", read_fit_config), ParseError);
  CHECK_THROWS_AS(from_text("colour = red\n", read_fit_config), ParseError);
  CHECK_THROWS_AS(from_text("free_amplitude = maybe\n", read_fit_config), ParseError);
}

TEST_CASE("atomic writes leave no temporary file") {
  const auto dir = std::filesystem::temp_directory_path() / "blink_io_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "out.txt").string();
  write_file_atomic(path, "hello\n");
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "hello");
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  CHECK_THROWS_AS(write_file_atomic((dir / "missing" / "x.txt").string(), "x"), InputError);
  std::filesystem::remove_all(dir);
}
