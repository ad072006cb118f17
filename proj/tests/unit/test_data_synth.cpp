#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "clg/data_synth.hpp"

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

DatasetSpec small_spec(std::size_t n, std::uint64_t seed) {
  DatasetSpec s;
  s.num_samples = n;
  s.seed = seed;
  return s;
}

bool same_sample(const QASample& a, const QASample& b) {
  return a.id == b.id && a.K == b.K && a.L == b.L && a.N == b.N && a.features == b.features &&
         a.question == b.question && a.candidates == b.candidates && a.gold == b.gold && a.type == b.type &&
         a.script.events.size() == b.script.events.size() && a.script.causes == b.script.causes;
}

}  // namespace

TEST_CASE("spec validation") {
  DatasetSpec s;
  CHECK_NOTHROW(s.validate());
  CHECK(s.train_count() + s.val_count() == s.num_samples);
  auto bad = s;
  bad.N = 3;
  CHECK_THROWS_AS(bad.validate(), SpecError);
  CHECK_THROWS_AS(generate_dataset(bad), SpecError);
  bad = s;
  bad.P = 3;
  CHECK_THROWS_AS(bad.validate(), SpecError);
  bad = s;
  bad.num_train = 10;
  bad.num_val = 5;
  CHECK(bad.train_count() == 10);
  CHECK(bad.val_count() == 5);
  CHECK(small_spec(100, 0).val_count() == 15);

  const auto round = dataset_spec_from_json(dataset_spec_to_json(s));
  CHECK(dataset_spec_to_json(round) == dataset_spec_to_json(s));
  CHECK_THROWS_AS(dataset_spec_from_json("{not json"), SpecError);
}

TEST_CASE("question type names round trip") {
  for (auto t : {QuestionType::Causal, QuestionType::Temporal, QuestionType::Descriptive})
    CHECK(question_type_from_name(question_type_name(t)) == t);
}

TEST_CASE("generated samples are well formed and answered by the script oracle") {
  const auto data = generate_dataset(small_spec(400, 3));
  const auto& vocab = data.train.vocab;
  CHECK(vocab.size() <= kDefaultVocabSize);
  for (const auto* split : {&data.train, &data.val})
    for (const auto& s : split->samples) {
      CHECK(s.features.rows() == 4 * 8 * 5);
      CHECK(s.features.cols() == 16 + kBoxWidth);
      CHECK(s.candidates.size() == 4);
      CHECK(s.gold < 4);
      CHECK_NOTHROW(s.script.validate(s.K * s.L));
      for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a + 1; b < 4; ++b) CHECK(s.candidates[a] != s.candidates[b]);
      CHECK(script_oracle(s, vocab) == s.gold);
      const auto obs = s.observations();
      CHECK(obs.size() == s.features.rows());
      for (const auto& o : obs) {
        CHECK(o.box[0] <= o.box[2]);
        CHECK(o.box[1] <= o.box[3]);
      }
      const auto g = s.graph<double>();
      CHECK(g.num_nodes() == 160);
    }
}

TEST_CASE("temporal and causal questions name two different entities") {
  const auto data = generate_dataset(small_spec(300, 4));
  for (const auto& s : data.train.samples) {
    if (s.type == QuestionType::Descriptive) continue;
    const auto named = named_entities(s, data.train.vocab);
    if (s.type == QuestionType::Temporal) {
      REQUIRE(named.size() == 2);
      CHECK(named[0] != named[1]);
    }
    // The answer of a causal question involves an entity other than the one asked about.
    const auto& sc = s.script;
    for (const auto& c : sc.causes) CHECK(sc.events[c[0]].subject != sc.events[c[1]].subject);
  }
}

TEST_CASE("generation is deterministic and files are byte-identical") {
  TempDir dir("det");
  const auto a = generate_dataset(small_spec(60, 9));
  const auto b = generate_dataset(small_spec(60, 9));
  write_dataset_dir(a, dir.path / "a");
  write_dataset_dir(b, dir.path / "b");
  for (const char* f : {"train.jsonl", "train.clgf", "val.jsonl", "val.clgf"})
    CHECK(slurp(dir.path / "a" / f) == slurp(dir.path / "b" / f));
  const auto c = generate_dataset(small_spec(60, 10));
  write_dataset_dir(c, dir.path / "c");
  CHECK(slurp(dir.path / "a" / "train.clgf") != slurp(dir.path / "c" / "train.clgf"));
}

TEST_CASE("feature file round trip is bit exact") {
  TempDir dir("rt");
  const auto data = generate_dataset(small_spec(80, 11));
  write_dataset_dir(data, dir.path);
  const auto tr = read_split(dir.path, "train");
  const auto va = read_split(dir.path, "val");
  REQUIRE(tr.samples.size() == data.train.samples.size());
  REQUIRE(va.samples.size() == data.val.samples.size());
  for (std::size_t i = 0; i < tr.samples.size(); ++i) CHECK(same_sample(tr.samples[i], data.train.samples[i]));
  for (std::size_t i = 0; i < va.samples.size(); ++i) CHECK(same_sample(va.samples[i], data.val.samples[i]));
  CHECK(tr.vocab.tokens() == data.train.vocab.tokens());
  CHECK(dataset_spec_to_json(tr.spec) == dataset_spec_to_json(data.train.spec));
  for (std::size_t i = 0; i < tr.samples.size(); ++i) {
    const auto& s = tr.samples[i];
    const auto& o = data.train.samples[i];
    for (std::size_t e = 0; e < s.script.entities.size(); ++e) {
      CHECK(s.script.entities[e].slot == o.script.entities[e].slot);
      CHECK(s.script.entities[e].trajectory == o.script.entities[e].trajectory);
      CHECK(s.script.entities[e].prototype == o.script.entities[e].prototype);
    }
    CHECK(script_oracle(s, tr.vocab) == s.gold);
  }

  // Write -> read -> write is byte identical.
  write_feature_file(tr, dir.path / "again.jsonl", dir.path / "again.clgf");
  CHECK(slurp(dir.path / "again.jsonl") == slurp(dir.path / "train.jsonl"));
  CHECK(slurp(dir.path / "again.clgf") == slurp(dir.path / "train.clgf"));

  // Manifest line count equals the header record count.
  const auto manifest = slurp(dir.path / "train.jsonl");
  const auto blob = slurp(dir.path / "train.clgf");
  const auto lines = static_cast<std::size_t>(std::count(manifest.begin(), manifest.end(), '\n'));
  std::uint32_t count = 0;
  for (int k = 3; k >= 0; --k) count = (count << 8) | static_cast<unsigned char>(blob[8 + static_cast<std::size_t>(k)]);
  CHECK(lines == count);
  CHECK(blob.substr(0, 4) == "CLGF");
}

TEST_CASE("feature file corruption is rejected") {
  TempDir dir("bad");
  write_dataset_dir(generate_dataset(small_spec(40, 12)), dir.path);
  const auto manifest = dir.path / "train.jsonl", blob = dir.path / "train.clgf";
  const auto good = slurp(blob);

  auto magic = good;
  magic[0] = 'X';
  spit(blob, magic);
  CHECK_THROWS_AS(read_feature_file(manifest, blob), FormatError);

  auto version = good;
  version[4] = 9;
  spit(blob, version);
  CHECK_THROWS_AS(read_feature_file(manifest, blob), FormatError);

  const auto truncated = good.substr(0, good.size() - 100);
  spit(blob, truncated);
  try {
    read_feature_file(manifest, blob);
    FAIL("expected CorruptionError");
  } catch (const CorruptionError& e) {
    CHECK(e.offset() == truncated.size());
  }

  spit(blob, good + "junk");
  CHECK_THROWS_AS(read_feature_file(manifest, blob), CorruptionError);

  auto count = good;
  count[8] = static_cast<char>(count[8] + 1);
  spit(blob, count);
  CHECK_THROWS_AS(read_feature_file(manifest, blob), FormatError);

  spit(blob, good);
  CHECK_NOTHROW(read_feature_file(manifest, blob));
  CHECK_THROWS_AS(read_feature_file(dir.path / "missing.jsonl", blob), IoError);
  CHECK_THROWS_AS(read_split(dir.path, "test"), ContractError);
}

TEST_CASE("gold slots are uniform and random guessing scores chance") {
  const auto data = generate_dataset(small_spec(10000, 21));
  std::array<std::size_t, 4> hist{};
  std::array<std::size_t, 3> types{};
  std::mt19937_64 rng(5);
  std::size_t hits = 0, total = 0;
  for (const auto* split : {&data.train, &data.val})
    for (const auto& s : split->samples) {
      ++hist[s.gold];
      ++types[static_cast<std::size_t>(s.type)];
      hits += std::uniform_int_distribution<std::size_t>(0, 3)(rng) == s.gold;
      ++total;
    }
  CHECK(total == 10000);
  for (auto h : hist) CHECK(std::abs(static_cast<double>(h) / 10000.0 - 0.25) <= 0.02);
  for (auto t : types) CHECK(std::abs(static_cast<double>(t) / 10000.0 - 1.0 / 3) <= 0.02);
  CHECK(std::abs(static_cast<double>(hits) / 10000.0 - 0.25) <= 0.02);
}

TEST_CASE("single-entity views cannot answer temporal and causal questions") {
  const auto data = generate_dataset(small_spec(3000, 22));
  const auto& vocab = data.train.vocab;
  std::mt19937_64 rng(6);
  // Any fixed choice of viewpoint: the k-th named entity, or entity slot e.
  std::array<std::size_t, 2 + 4> hits{};
  std::size_t total = 0;
  for (const auto& s : data.train.samples) {
    if (s.type == QuestionType::Descriptive) continue;
    ++total;
    const auto named = named_entities(s, vocab);
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t e = k < named.size() ? named[k] : named.front();
      hits[k] += single_entity_oracle(s, vocab, e, rng) == s.gold;
    }
    for (std::size_t e = 0; e < 4; ++e) hits[2 + e] += single_entity_oracle(s, vocab, e, rng) == s.gold;
  }
  REQUIRE(total > 0);
  for (auto h : hits) CHECK(static_cast<double>(h) / static_cast<double>(total) <= 0.60);
}
