#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "clg/event_graph.hpp"
#include "clg/nk/tensor.hpp"
#include "clg/text_qa.hpp"

namespace clg {

inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr std::size_t kBoxWidth = 5;

enum class QuestionType : std::uint8_t { Causal = 0, Temporal = 1, Descriptive = 2 };
inline constexpr std::size_t kNumQuestionTypes = 3;

const char* question_type_name(QuestionType t);
QuestionType question_type_from_name(const std::string& name);

struct DatasetSpec {
  std::size_t num_samples = 2350;
  // Explicit split sizes; when both are zero the split is 85/15 of num_samples.
  std::size_t num_train = 0;
  std::size_t num_val = 0;
  std::size_t K = 4;
  std::size_t L = 8;
  std::size_t N = 5;
  std::size_t E = 4;
  std::size_t P = 8;
  std::size_t types = 4;
  std::size_t d1 = 16;
  double sigma = 0.1;
  // Contact signature shared by the two participants of an interaction:
  // contact_weight * (contact_bias * u + v_pair).
  double contact_weight = 2.0;
  double contact_bias = 0.5;
  std::uint64_t seed = 0;

  std::size_t frames() const { return K * L; }
  std::size_t nodes() const { return K * L * N; }
  std::size_t train_count() const;
  std::size_t val_count() const;
  // Throws SpecError on an unusable combination.
  void validate() const;
};

struct ScriptEntity {
  std::uint32_t type = 0;
  std::vector<float> prototype;                // d1
  std::vector<std::array<float, 4>> trajectory;  // one box per frame
  std::vector<std::uint32_t> slot;             // detection slot per frame
};

struct ScriptEvent {
  std::uint32_t subject = 0;
  std::uint32_t predicate = 0;
  std::vector<std::uint32_t> objects;
  std::uint32_t begin = 0;  // frame interval [begin, end)
  std::uint32_t end = 0;
};

// Ground truth for one video. `causes` lists (cause, effect) event indices.
struct EventScript {
  std::vector<ScriptEntity> entities;
  std::vector<ScriptEvent> events;
  std::vector<std::array<std::uint32_t, 2>> causes;

  void validate(std::size_t frames) const;
};

struct QASample {
  std::uint64_t id = 0;
  std::size_t K = 0, L = 0, N = 0;
  nk::Tensor<float> features;  // K*L*N x (d1 + 5), rows ordered frame-major
  TokenSeq question;
  std::vector<TokenSeq> candidates;
  std::size_t gold = 0;
  QuestionType type = QuestionType::Descriptive;
  EventScript script;

  std::vector<ObjectObservation> observations() const;
  template <class T>
  EventGraph<T> graph() const {
    return graph_from_nodes<T>(features.cast<T>(), K, L, N);
  }
};

struct Dataset {
  Vocabulary vocab;
  DatasetSpec spec;
  std::vector<QASample> samples;
};

struct SplitDataset {
  Dataset train;
  Dataset val;
};

// Fixed token table for a spec: reserved tokens, template words, entity
// type names, predicate names.
Vocabulary dataset_vocabulary(const DatasetSpec& spec);

SplitDataset generate_dataset(const DatasetSpec& spec);

// FeatureFile: `<stem>.jsonl` manifest (one record per sample; the first
// record also carries the vocabulary and spec) and `<stem>.clgf` blob.
void write_feature_file(const Dataset& data, const std::filesystem::path& manifest,
                        const std::filesystem::path& blob);
Dataset read_feature_file(const std::filesystem::path& manifest, const std::filesystem::path& blob);

// Directory layout used by the CLI: train.{jsonl,clgf} and val.{jsonl,clgf}.
void write_dataset_dir(const SplitDataset& data, const std::filesystem::path& dir);
Dataset read_split(const std::filesystem::path& dir, const std::string& split);

DatasetSpec dataset_spec_from_json(const std::string& text);
std::string dataset_spec_to_json(const DatasetSpec& spec);

// Oracles. Both return a candidate index.
// Reads the script directly.
std::size_t script_oracle(const QASample& s, const Vocabulary& vocab);
// Sees one entity's own trajectory: its type, boxes, the predicates it
// performs, and the clips in which it is acted on (without the predicate).
// Picks uniformly among the candidates consistent with that view.
std::size_t single_entity_oracle(const QASample& s, const Vocabulary& vocab, std::size_t entity, std::mt19937_64& rng);
// Entities named in the question, in order of appearance.
std::vector<std::size_t> named_entities(const QASample& s, const Vocabulary& vocab);

}  // namespace clg
