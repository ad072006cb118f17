#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include "clg/trainer.hpp"

using namespace clg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("clg_test_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// 32-node videos keep these runs short.
SplitDataset tiny_data(std::size_t train, std::size_t val, std::uint64_t seed) {
  DatasetSpec s;
  s.L = 2;
  s.N = 4;
  s.num_train = train;
  s.num_val = val;
  s.num_samples = train + val;
  s.seed = seed;
  return generate_dataset(s);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.d = 16;
  c.P = 2;
  c.batch = 8;
  c.epochs = 1;
  c.seed = 5;
  return c;
}

std::vector<LossBundle> first_iterations(const TrainConfig& c, const Dataset& d, std::size_t n, std::size_t threads) {
  std::vector<LossBundle> out;
  TrainHooks hooks;
  hooks.max_iterations = n;
  hooks.on_iteration = [&](std::uint64_t, const LossBundle& b) { out.push_back(b); };
  train(c, d, nullptr, hooks, threads);
  return out;
}

bool bitwise_equal(const std::vector<LossBundle>& a, const std::vector<LossBundle>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x[] = {a[i].l_d, a[i].l_g, a[i].l_n, a[i].l_kl, a[i].l_qa, a[i].total};
    const double y[] = {b[i].l_d, b[i].l_g, b[i].l_n, b[i].l_kl, b[i].l_qa, b[i].total};
    if (std::memcmp(x, y, sizeof x) != 0) return false;
  }
  return true;
}

MetricsRow row(std::size_t epoch, const std::string& split, double qa) {
  MetricsRow r;
  r.epoch = epoch;
  r.split = split;
  r.count_type = {3, 4, 5};
  r.correct_type = {1, 2, 3};
  finalize_accuracy(r);
  r.l_d = 0.7;
  r.l_g = 0.3;
  r.l_n = 1.1 / 3;
  r.l_kl = 0.05;
  r.l_qa = qa;
  r.total = r.l_d + r.l_g + r.l_n + r.l_kl + r.l_qa;
  return r;
}

}  // namespace

TEST_CASE("train config json round trip and validation") {
  TrainConfig c;
  c.d = 32;
  c.lr = 2.5e-4;
  c.adv = false;
  c.seed = 77;
  const auto back = train_config_from_json(train_config_to_json(c));
  CHECK(train_config_to_json(back) == train_config_to_json(c));
  CHECK(back.lr == c.lr);
  CHECK_FALSE(back.adv);
  CHECK(train_config_from_json("{}").d == 64);
  CHECK_THROWS_AS(train_config_from_json("{\"depth\": 2}"), SpecError);
  CHECK_THROWS_AS(train_config_from_json("{\"tau\": 0}"), SpecError);
  CHECK_THROWS_AS(train_config_from_json("{\"batch\": 0}"), SpecError);
  CHECK_THROWS_AS(train_config_from_json("{\"encoder_depth\": 3}"), SpecError);
  CHECK_THROWS_AS(train_config_from_json("[1]"), SpecError);
  CHECK_THROWS_AS(train_config_from_json("{\"d\": \"wide\"}"), SpecError);
}

TEST_CASE("loss bundle totals only the enabled terms") {
  TrainConfig c;
  c.adv = false;
  c.contrastive = false;
  const auto b = make_bundle(c, 0.7, 0.3, 2.0, 0.1, 1.25);
  CHECK(b.total == 1.25);
  CHECK(b.l_d == 0.0);
  CHECK(b.l_n == 0.0);
  c.adv = c.contrastive = true;
  const auto all = make_bundle(c, 0.7, 0.3, 2.0, 0.1, 1.25);
  CHECK(all.total == 0.7 + 0.3 + 2.0 + 0.1 + 1.25);
  c.qa = false;
  CHECK(make_bundle(c, 0.7, 0.3, 2.0, 0.1, 1.25).total == 0.7 + 0.3 + 2.0 + 0.1);
}

TEST_CASE("fixed seed reproduces the first 10 iteration losses bitwise") {
  const auto data = tiny_data(96, 0, 1);
  const auto c = tiny_config();
  const auto a = first_iterations(c, data.train, 10, 1);
  const auto b = first_iterations(c, data.train, 10, 1);
  REQUIRE(a.size() == 10);
  CHECK(bitwise_equal(a, b));
  CHECK(bitwise_equal(a, first_iterations(c, data.train, 10, 3)));
  auto other = c;
  other.seed = 6;
  CHECK_FALSE(bitwise_equal(a, first_iterations(other, data.train, 10, 1)));
}

TEST_CASE("only qa switched on gives total = l_qa") {
  const auto data = tiny_data(32, 0, 2);
  auto c = tiny_config();
  c.adv = false;
  c.contrastive = false;
  for (const auto& b : first_iterations(c, data.train, 4, 1)) {
    CHECK(b.total == b.l_qa);
    CHECK(b.l_d == 0.0);
    CHECK(b.l_g == 0.0);
    CHECK(b.l_n == 0.0);
    CHECK(b.l_kl == 0.0);
  }
}

TEST_CASE("every switch combination trains") {
  const auto data = tiny_data(16, 0, 3);
  for (int mask = 0; mask < 8; ++mask) {
    auto c = tiny_config();
    c.adv = mask & 1;
    c.contrastive = mask & 2;
    c.qa = mask & 4;
    const auto bundles = first_iterations(c, data.train, 2, 1);
    REQUIRE(bundles.size() == 2);
    for (const auto& b : bundles) CHECK(std::isfinite(b.total));
  }
}

TEST_CASE("eight samples are memorised within 200 iterations") {
  const auto data = tiny_data(8, 0, 4);
  auto c = tiny_config();
  c.d = 32;
  c.P = 4;
  c.epochs = 200;
  auto result = train(c, data.train, nullptr);
  CHECK(result.log.rows().size() == 200);
  const auto r = evaluate(result.last, data.train, "train");
  CHECK(r.acc_all == 1.0);
}

TEST_CASE("evaluate is deterministic, near chance when untrained, and consistent per type") {
  const auto data = tiny_data(8, 2000, 5);
  auto c = tiny_config();
  auto model = Model::init(c, data.val.samples[0].features.cols(), 32, data.val.vocab.capacity());
  const auto a = evaluate(model, data.val, "val");
  const auto b = evaluate(model, data.val, "val", 0, nullptr, 3);
  CHECK(a.acc_all == b.acc_all);
  CHECK(a.acc_type == b.acc_type);
  CHECK(a.total == b.total);
  CHECK(std::abs(a.acc_all - 0.25) <= 0.03);
  std::size_t correct = 0, count = 0;
  double weighted = 0;
  for (std::size_t t = 0; t < 3; ++t) {
    correct += a.correct_type[t];
    count += a.count_type[t];
    weighted += a.acc_type[t] * static_cast<double>(a.count_type[t]);
  }
  CHECK(count == 2000);
  CHECK(a.acc_all == static_cast<double>(correct) / static_cast<double>(count));
  CHECK(std::abs(weighted / static_cast<double>(count) - a.acc_all) <= 1e-15);
}

TEST_CASE("training with a diverging learning rate reports the failing iteration") {
  const auto data = tiny_data(32, 0, 6);
  auto c = tiny_config();
  c.lr = 1e38;
  try {
    train(c, data.train, nullptr);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    // The D step runs before L_G, so divergence can surface inside iteration 0.
    CHECK(e.iteration() <= 2);
    const std::string term = e.term();
    CHECK((term == "forward" || term == "l_qa" || term == "l_n" || term == "l_kl" || term == "l_d" || term == "l_g"));
    CHECK(std::string(e.what()).find(term) != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip and rejection") {
  TempDir dir("ckpt");
  const auto data = tiny_data(16, 16, 7);
  auto c = tiny_config();
  c.epochs = 1;
  auto result = train(c, data.train, &data.val);
  const auto p = dir.path / "m.clgc";
  save_checkpoint(result.best, p);
  auto loaded = load_checkpoint(p);
  save_checkpoint(loaded, dir.path / "again.clgc");
  CHECK(slurp(p) == slurp(dir.path / "again.clgc"));
  CHECK(train_config_to_json(loaded.config) == train_config_to_json(result.best.config));
  const auto r1 = evaluate(result.best, data.val, "val");
  const auto r2 = evaluate(loaded, data.val, "val");
  CHECK(r1.acc_all == r2.acc_all);
  CHECK(r1.total == r2.total);

  const auto good = slurp(p);
  auto magic = good;
  magic[1] = 'X';
  spit(dir.path / "magic.clgc", magic);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "magic.clgc"), FormatError);
  spit(dir.path / "short.clgc", good.substr(0, good.size() - 7));
  CHECK_THROWS_AS(load_checkpoint(dir.path / "short.clgc"), CorruptionError);
  spit(dir.path / "long.clgc", good + "x");
  CHECK_THROWS_AS(load_checkpoint(dir.path / "long.clgc"), CorruptionError);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.clgc"), IoError);

  DatasetSpec wide;
  wide.num_samples = 4;
  const auto other = generate_dataset(wide);
  CHECK_THROWS_AS(check_compatible(loaded, other.train), CheckpointError);
  CHECK_THROWS_AS(evaluate(loaded, other.train, "train"), CheckpointError);
}

TEST_CASE("metrics log ordering and accuracy range") {
  MetricsLog log;
  log.append(row(0, "train", 1.0));
  log.append(row(0, "val", 1.1));
  log.append(row(1, "train", 0.9));
  CHECK_THROWS_AS(log.append(row(0, "val", 1.0)), ContractError);
  auto bad = row(2, "train", 1.0);
  bad.acc_all = 1.5;
  CHECK_THROWS_AS(log.append(bad), ContractError);
  const auto back = MetricsLog::from_jsonl(log.to_jsonl());
  CHECK(back.to_jsonl() == log.to_jsonl());
}

TEST_CASE("report emission") {
  TempDir dir("report");
  MetricsLog log;
  for (std::size_t e = 0; e < 4; ++e) {
    log.append(row(e, "train", 1.0 / static_cast<double>(e + 1)));
    log.append(row(e, "val", 1.2 / static_cast<double>(e + 1)));
  }
  const auto files = emit_report(log, dir.path / "a", parse_formats("csv,svg"));
  CHECK(files.size() == 2);
  emit_report(log, dir.path / "b", {ReportFormat::Csv, ReportFormat::Svg});
  CHECK(slurp(dir.path / "a" / "metrics.csv") == slurp(dir.path / "b" / "metrics.csv"));
  CHECK(slurp(dir.path / "a" / "losses.svg") == slurp(dir.path / "b" / "losses.svg"));
  CHECK(slurp(dir.path / "a" / "losses.svg").find("<svg") != std::string::npos);

  std::istringstream csv(slurp(dir.path / "a" / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == kCsvHeader);
  std::size_t rows = 1;
  while (std::getline(csv, line)) {
    ++rows;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    REQUIRE(cells.size() == 12);
    double sum = 0;
    for (std::size_t k = 6; k < 11; ++k) sum += std::stod(cells[k]);
    CHECK(std::stod(cells[11]) == doctest::Approx(sum).epsilon(1e-12));
  }
  CHECK(rows == log.size() + 1);

  CHECK_THROWS_AS(parse_formats("pdf"), ContractError);
  CHECK_THROWS_AS(emit_report(MetricsLog{}, dir.path / "c", {ReportFormat::Csv}), ContractError);
  spit(dir.path / "file", "x");
  CHECK_THROWS_AS(emit_report(log, dir.path / "file" / "sub", {ReportFormat::Csv}), IoError);
}
