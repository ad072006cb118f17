#include "clg/data_synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace clg {
namespace {

using json = nlohmann::json;
using Rng = std::mt19937_64;

constexpr char kMagic[4] = {'C', 'L', 'G', 'F'};
constexpr std::size_t kHeaderBytes = 16;

const std::vector<std::string> kTemplateWords = {"who", "what", "why", "does", "do", "after"};
const std::vector<std::string> kTypeNames = {"person", "dog", "ball", "cup", "car", "bike", "cat", "box",
                                             "chair", "bird", "door", "phone"};
const std::vector<std::string> kPredicateNames = {"throw", "push", "pull", "kick", "hold", "chase",
                                                  "hit", "lift", "carry", "grab", "wave", "touch"};

std::string type_word(std::size_t t) {
  return t < kTypeNames.size() ? kTypeNames[t] : "type" + std::to_string(t);
}
std::string predicate_word(std::size_t p) {
  return p < kPredicateNames.size() ? kPredicateNames[p] : "act" + std::to_string(p);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::vector<std::uint32_t> permutation(Rng& rng, std::size_t n) {
  std::vector<std::uint32_t> p(n);
  std::iota(p.begin(), p.end(), 0u);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

// Token-id layout shared by the generator and the oracles.
struct Lexicon {
  TokenId who, what, why, does, do_, after;
  TokenId type0, pred0;
  std::size_t types, preds;

  explicit Lexicon(const Vocabulary& v, std::size_t num_types, std::size_t num_preds)
      : who(v.id("who")),
        what(v.id("what")),
        why(v.id("why")),
        does(v.id("does")),
        do_(v.id("do")),
        after(v.id("after")),
        type0(v.id(type_word(0))),
        pred0(v.id(predicate_word(0))),
        types(num_types),
        preds(num_preds) {}

  TokenId type_tok(std::size_t t) const { return static_cast<TokenId>(type0 + t); }
  TokenId pred_tok(std::size_t p) const { return static_cast<TokenId>(pred0 + p); }
  bool is_type(TokenId id) const { return id >= type0 && id < type0 + types; }
  bool is_pred(TokenId id) const { return id >= pred0 && id < pred0 + preds; }
  std::uint32_t type_of(TokenId id) const { return id - type0; }
  std::uint32_t pred_of(TokenId id) const { return id - pred0; }
};

Lexicon lexicon_for(const Vocabulary& v) {
  std::size_t types = 0, preds = 0;
  while (v.id(type_word(types)) != Vocabulary::kUnknown) ++types;
  while (v.id(predicate_word(preds)) != Vocabulary::kUnknown) ++preds;
  return Lexicon(v, types, preds);
}

// Unit vectors orthogonal to the all-ones direction and to each other.
std::vector<std::vector<double>> pair_directions(Rng& rng, std::size_t width, std::size_t count) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> basis;
  basis.emplace_back(width, 1.0 / std::sqrt(static_cast<double>(width)));
  while (basis.size() < count + 1) {
    std::vector<double> v(width);
    for (auto& x : v) x = normal(rng);
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t i = 0; i < width; ++i) dot += v[i] * b[i];
      for (std::size_t i = 0; i < width; ++i) v[i] -= dot * b[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (auto& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  basis.erase(basis.begin());
  return basis;
}

struct Pair {
  std::uint32_t first;  // event index of the opening event
  std::uint32_t reply;
};

QASample make_sample(const DatasetSpec& spec, const Lexicon& lex, std::uint64_t id, Rng& rng) {
  const std::size_t F = spec.frames(), E = spec.E, N = spec.N, d1 = spec.d1;
  const std::size_t npairs = spec.K / 2;
  const std::size_t sig_begin = spec.types + spec.P, sig_width = d1 - sig_begin;
  std::normal_distribution<double> noise(0.0, spec.sigma);
  std::uniform_real_distribution<double> home_dist(0.15, 0.85), size_dist(0.08, 0.2);

  QASample s;
  s.id = id;
  s.K = spec.K;
  s.L = spec.L;
  s.N = N;
  s.type = static_cast<QuestionType>(id % kNumQuestionTypes);

  // Entities and roles: one hub interacting with npairs partners in turn.
  const auto type_perm = permutation(rng, spec.types);
  const auto roles = permutation(rng, E);
  const std::uint32_t hub = roles[0];
  auto& script = s.script;
  script.entities.resize(E);
  for (std::size_t e = 0; e < E; ++e) {
    auto& ent = script.entities[e];
    ent.type = type_perm[e];
    ent.prototype.assign(d1, 0.0f);
    ent.prototype[ent.type] = 1.0f;
  }

  // Events: pairs (partner p_j -> hub, hub q_j -> partner) in random pair order.
  const auto pred_perm = permutation(rng, spec.P);
  const auto pair_order = permutation(rng, npairs);
  std::vector<Pair> pairs(npairs);
  for (std::size_t slot = 0; slot < npairs; ++slot) {
    const std::size_t j = pair_order[slot];
    const std::uint32_t partner = roles[1 + j];
    const std::uint32_t k0 = static_cast<std::uint32_t>(2 * slot);
    ScriptEvent open{partner, pred_perm[2 * j], {hub}, static_cast<std::uint32_t>(k0 * spec.L),
                     static_cast<std::uint32_t>((k0 + 1) * spec.L)};
    ScriptEvent reply{hub, pred_perm[2 * j + 1], {partner}, static_cast<std::uint32_t>((k0 + 1) * spec.L),
                      static_cast<std::uint32_t>((k0 + 2) * spec.L)};
    script.events.push_back(open);
    script.events.push_back(reply);
    script.causes.push_back({k0, k0 + 1});
    pairs[j] = {k0, k0 + 1};
  }

  const auto dirs = pair_directions(rng, sig_width, npairs);
  const double u = 1.0 / std::sqrt(static_cast<double>(sig_width));

  std::vector<std::array<double, 2>> home(E), size(E);
  for (std::size_t e = 0; e < E; ++e) {
    home[e] = {home_dist(rng), home_dist(rng)};
    size[e] = {size_dist(rng), size_dist(rng)};
  }

  s.features = nk::Tensor<float>(F * N, d1 + kBoxWidth);
  for (auto& ent : script.entities) {
    ent.trajectory.resize(F);
    ent.slot.resize(F);
  }
  for (std::size_t t = 0; t < F; ++t) {
    const std::size_t k = t / spec.L;
    const ScriptEvent& ev = script.events[k];
    const std::size_t pair_slot = k / 2;
    const std::size_t pair_id = pair_order[pair_slot];
    const auto slots = permutation(rng, N);
    for (std::size_t e = 0; e < E; ++e) {
      auto& ent = script.entities[e];
      std::vector<double> roi(ent.prototype.begin(), ent.prototype.end());
      std::array<double, 2> centre = home[e];
      const bool is_subject = ev.subject == e;
      const bool is_object = std::find(ev.objects.begin(), ev.objects.end(), e) != ev.objects.end();
      if (is_subject) roi[spec.types + ev.predicate] += 1.0;
      if (is_subject || is_object) {
        for (std::size_t c = 0; c < sig_width; ++c) {
          roi[sig_begin + c] += spec.contact_weight * (spec.contact_bias * u + dirs[pair_id][c]);
        }
      }
      if (is_object) {
        const double frac = static_cast<double>(t % spec.L + 1) / static_cast<double>(spec.L);
        for (int a = 0; a < 2; ++a) centre[a] += 0.8 * frac * (home[ev.subject][a] - centre[a]);
      }
      for (auto& v : roi) v += noise(rng);
      const double x1 = std::clamp(centre[0] - size[e][0] / 2, 0.0, 1.0);
      const double y1 = std::clamp(centre[1] - size[e][1] / 2, 0.0, 1.0);
      const double x2 = std::clamp(centre[0] + size[e][0] / 2, 0.0, 1.0);
      const double y2 = std::clamp(centre[1] + size[e][1] / 2, 0.0, 1.0);
      ent.trajectory[t] = {static_cast<float>(x1), static_cast<float>(y1), static_cast<float>(x2),
                           static_cast<float>(y2)};
      ent.slot[t] = slots[e];
      auto row = s.features.row_span(t * N + slots[e]);
      for (std::size_t c = 0; c < d1; ++c) row[c] = static_cast<float>(roi[c]);
      row[d1 + 0] = ent.trajectory[t][0];
      row[d1 + 1] = ent.trajectory[t][1];
      row[d1 + 2] = ent.trajectory[t][2];
      row[d1 + 3] = ent.trajectory[t][3];
      row[d1 + 4] = static_cast<float>((x2 - x1) * (y2 - y1));
    }
  }

  // Question, gold answer and three distractors.
  auto type_tok = [&](std::uint32_t e) { return lex.type_tok(script.entities[e].type); };
  TokenSeq gold;
  std::vector<TokenSeq> distractors;
  switch (s.type) {
    case QuestionType::Descriptive: {
      const auto& ev = script.events[uniform_index(rng, script.events.size())];
      s.question = {lex.who, lex.does, lex.pred_tok(ev.predicate)};
      gold = {type_tok(ev.subject)};
      std::vector<std::uint32_t> present, absent;
      for (std::uint32_t e = 0; e < E; ++e) {
        if (e != ev.subject) present.push_back(script.entities[e].type);
      }
      for (std::size_t t = E; t < spec.types; ++t) absent.push_back(type_perm[t]);
      std::shuffle(present.begin(), present.end(), rng);
      std::shuffle(absent.begin(), absent.end(), rng);
      present.insert(present.end(), absent.begin(), absent.end());
      for (std::size_t i = 0; i < 3; ++i) distractors.push_back({lex.type_tok(present[i])});
      break;
    }
    case QuestionType::Temporal: {
      const Pair& p = pairs[uniform_index(rng, npairs)];
      const auto& open = script.events[p.first];
      const auto& reply = script.events[p.reply];
      s.question = {lex.what, lex.does, type_tok(hub), lex.do_, lex.after, type_tok(open.subject),
                    lex.pred_tok(open.predicate)};
      gold = {lex.pred_tok(reply.predicate)};
      std::vector<std::uint32_t> others;
      for (const auto& ev : script.events) {
        if (ev.predicate != reply.predicate) others.push_back(ev.predicate);
      }
      std::shuffle(others.begin(), others.end(), rng);
      for (std::size_t i = 0; i < 3; ++i) distractors.push_back({lex.pred_tok(others[i])});
      break;
    }
    case QuestionType::Causal: {
      const std::size_t j = uniform_index(rng, npairs);
      std::size_t o = uniform_index(rng, npairs - 1);
      if (o >= j) ++o;
      const auto& cause = script.events[pairs[j].first];
      const auto& effect = script.events[pairs[j].reply];
      const auto& other = script.events[pairs[o].first];
      s.question = {lex.why, lex.does, type_tok(hub), lex.pred_tok(effect.predicate)};
      gold = {type_tok(cause.subject), lex.pred_tok(cause.predicate)};
      distractors = {{type_tok(other.subject), lex.pred_tok(other.predicate)},
                     {type_tok(cause.subject), lex.pred_tok(other.predicate)},
                     {type_tok(other.subject), lex.pred_tok(cause.predicate)}};
      std::shuffle(distractors.begin(), distractors.end(), rng);
      break;
    }
  }
  s.gold = uniform_index(rng, 4);
  s.candidates.resize(4);
  for (std::size_t slot = 0, di = 0; slot < 4; ++slot) {
    s.candidates[slot] = slot == s.gold ? gold : distractors[di++];
  }
  return s;
}

// ---- serialization ----

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

json spec_json(const DatasetSpec& s) {
  return json{{"num_samples", s.num_samples}, {"num_train", s.num_train},
              {"num_val", s.num_val},         {"K", s.K},
              {"L", s.L},                     {"N", s.N},
              {"E", s.E},                     {"P", s.P},
              {"types", s.types},             {"d1", s.d1},
              {"sigma", s.sigma},             {"contact_weight", s.contact_weight},
              {"contact_bias", s.contact_bias}, {"seed", s.seed}};
}

DatasetSpec spec_from(const json& j) {
  DatasetSpec s;
  if (!j.is_object()) throw SpecError("dataset spec must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "num_samples") s.num_samples = value.get<std::size_t>();
      else if (key == "num_train") s.num_train = value.get<std::size_t>();
      else if (key == "num_val") s.num_val = value.get<std::size_t>();
      else if (key == "K") s.K = value.get<std::size_t>();
      else if (key == "L") s.L = value.get<std::size_t>();
      else if (key == "N") s.N = value.get<std::size_t>();
      else if (key == "E") s.E = value.get<std::size_t>();
      else if (key == "P") s.P = value.get<std::size_t>();
      else if (key == "types") s.types = value.get<std::size_t>();
      else if (key == "d1") s.d1 = value.get<std::size_t>();
      else if (key == "sigma") s.sigma = value.get<double>();
      else if (key == "contact_weight") s.contact_weight = value.get<double>();
      else if (key == "contact_bias") s.contact_bias = value.get<double>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else throw SpecError("unknown dataset spec key '" + key + "'");
    } catch (const json::exception& e) {
      throw SpecError("dataset spec key '" + key + "': " + e.what());
    }
  }
  return s;
}

json script_json(const EventScript& sc) {
  json ents = json::array();
  for (const auto& e : sc.entities) {
    ents.push_back(json{{"type", e.type}, {"prototype", e.prototype}, {"slot", e.slot}});
  }
  json evs = json::array();
  for (const auto& e : sc.events) {
    evs.push_back(json{{"subject", e.subject}, {"predicate", e.predicate}, {"objects", e.objects},
                       {"begin", e.begin}, {"end", e.end}});
  }
  json causes = json::array();
  for (const auto& c : sc.causes) causes.push_back(json::array({c[0], c[1]}));
  return json{{"entities", ents}, {"events", evs}, {"causes", causes}};
}

EventScript script_from(const json& j, const nk::Tensor<float>& features, std::size_t N, std::size_t d1) {
  EventScript sc;
  for (const auto& je : j.at("entities")) {
    ScriptEntity e;
    e.type = je.at("type").get<std::uint32_t>();
    e.prototype = je.at("prototype").get<std::vector<float>>();
    e.slot = je.at("slot").get<std::vector<std::uint32_t>>();
    e.trajectory.resize(e.slot.size());
    for (std::size_t t = 0; t < e.slot.size(); ++t) {
      if (e.slot[t] >= N) throw FormatError("script slot out of range");
      const auto row = features.row_span(t * N + e.slot[t]);
      e.trajectory[t] = {row[d1], row[d1 + 1], row[d1 + 2], row[d1 + 3]};
    }
    sc.entities.push_back(std::move(e));
  }
  for (const auto& je : j.at("events")) {
    ScriptEvent e;
    e.subject = je.at("subject").get<std::uint32_t>();
    e.predicate = je.at("predicate").get<std::uint32_t>();
    e.objects = je.at("objects").get<std::vector<std::uint32_t>>();
    e.begin = je.at("begin").get<std::uint32_t>();
    e.end = je.at("end").get<std::uint32_t>();
    sc.events.push_back(std::move(e));
  }
  for (const auto& jc : j.at("causes")) sc.causes.push_back({jc.at(0).get<std::uint32_t>(), jc.at(1).get<std::uint32_t>()});
  return sc;
}

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_all(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + p.string());
}

// ---- oracle helpers ----

struct EntityView {
  std::uint32_t type;
  std::vector<std::pair<std::size_t, std::uint32_t>> acts;  // (clip, predicate)
  std::vector<std::size_t> acted_on;                        // clips
};

EntityView view_of(const QASample& s, std::size_t entity) {
  const auto& sc = s.script;
  EntityView v{sc.entities.at(entity).type, {}, {}};
  for (const auto& ev : sc.events) {
    const std::size_t clip = ev.begin / s.L;
    if (ev.subject == entity) v.acts.emplace_back(clip, ev.predicate);
    if (std::find(ev.objects.begin(), ev.objects.end(), entity) != ev.objects.end()) v.acted_on.push_back(clip);
  }
  return v;
}

std::optional<std::size_t> entity_of_type(const EventScript& sc, std::uint32_t type) {
  for (std::size_t e = 0; e < sc.entities.size(); ++e) {
    if (sc.entities[e].type == type) return e;
  }
  return std::nullopt;
}

std::optional<std::size_t> find_event(const EventScript& sc, std::optional<std::size_t> subject, std::uint32_t pred) {
  for (std::size_t k = 0; k < sc.events.size(); ++k) {
    const auto& ev = sc.events[k];
    if (ev.predicate == pred && (!subject || ev.subject == *subject)) return k;
  }
  return std::nullopt;
}

std::size_t match_candidate(const QASample& s, const TokenSeq& answer) {
  std::optional<std::size_t> found;
  for (std::size_t c = 0; c < s.candidates.size(); ++c) {
    if (s.candidates[c] == answer) {
      if (found) throw ContractError("sample " + std::to_string(s.id) + ": answer matches several candidates");
      found = c;
    }
  }
  if (!found) throw ContractError("sample " + std::to_string(s.id) + ": no candidate matches the script answer");
  return *found;
}

}  // namespace

const char* question_type_name(QuestionType t) {
  switch (t) {
    case QuestionType::Causal: return "causal";
    case QuestionType::Temporal: return "temporal";
    case QuestionType::Descriptive: return "descriptive";
  }
  return "?";
}

QuestionType question_type_from_name(const std::string& name) {
  if (name == "causal") return QuestionType::Causal;
  if (name == "temporal") return QuestionType::Temporal;
  if (name == "descriptive") return QuestionType::Descriptive;
  throw FormatError("unknown question type '" + name + "'");
}

std::size_t DatasetSpec::train_count() const {
  if (num_train || num_val) return num_train;
  return num_samples - val_count();
}

std::size_t DatasetSpec::val_count() const {
  if (num_train || num_val) return num_val;
  return (num_samples * 15 + 50) / 100;
}

void DatasetSpec::validate() const {
  auto fail = [](const std::string& m) { throw SpecError("dataset spec: " + m); };
  if (K == 0 || L == 0 || N == 0 || E == 0) fail("K, L, N and E must be positive");
  if (N < E) fail("N (" + std::to_string(N) + ") must be at least E (" + std::to_string(E) + ")");
  if (P < 4) fail("P must be at least 4");
  if (K < 4 || K % 2 != 0) fail("K must be even and at least 4 (interactions span two clips)");
  if (P < K) fail("P must be at least K so every event has its own predicate");
  if (E < K / 2 + 1) fail("E must be at least K/2 + 1 (one hub plus one partner per interaction)");
  if (types < std::max<std::size_t>(E, 4)) fail("types must be at least max(E, 4)");
  if (d1 < types + P + K / 2 + 1) fail("d1 too small for type, predicate and contact dimensions");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) fail("sigma must be a finite nonnegative number");
  if (train_count() + val_count() == 0) fail("no samples requested");
  if (2 + kTemplateWords.size() + types + P > kDefaultVocabSize) fail("vocabulary would exceed capacity");
}

void EventScript::validate(std::size_t frames) const {
  for (const auto& ev : events) {
    if (ev.begin >= ev.end || ev.end > frames) throw ContractError("event interval outside [0, K*L)");
    if (ev.subject >= entities.size()) throw ContractError("event subject does not exist");
    for (auto o : ev.objects) {
      if (o >= entities.size()) throw ContractError("event object does not exist");
    }
  }
  for (const auto& c : causes) {
    if (c[0] >= events.size() || c[1] >= events.size()) throw ContractError("causal link to missing event");
  }
}

std::vector<ObjectObservation> QASample::observations() const {
  const std::size_t M = features.rows(), d1 = features.cols() - kBoxWidth;
  std::vector<ObjectObservation> out(M);
  for (std::size_t m = 0; m < M; ++m) {
    const auto row = features.row_span(m);
    out[m].roi.assign(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(d1));
    out[m].box.assign(row.begin() + static_cast<std::ptrdiff_t>(d1), row.end());
    out[m].frame = m / N;
    out[m].clip = out[m].frame / L;
  }
  return out;
}

Vocabulary dataset_vocabulary(const DatasetSpec& spec) {
  Vocabulary v;
  for (const auto& w : kTemplateWords) v.add(w);
  for (std::size_t t = 0; t < spec.types; ++t) v.add(type_word(t));
  for (std::size_t p = 0; p < spec.P; ++p) v.add(predicate_word(p));
  return v;
}

SplitDataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  SplitDataset out{{dataset_vocabulary(spec), spec, {}}, {dataset_vocabulary(spec), spec, {}}};
  const Lexicon lex(out.train.vocab, spec.types, spec.P);
  Rng rng(spec.seed);
  const std::size_t ntr = spec.train_count(), nva = spec.val_count();
  out.train.samples.reserve(ntr);
  out.val.samples.reserve(nva);
  for (std::uint64_t i = 0; i < ntr + nva; ++i) {
    auto s = make_sample(spec, lex, i, rng);
    (i < ntr ? out.train : out.val).samples.push_back(std::move(s));
  }
  return out;
}

void write_feature_file(const Dataset& data, const std::filesystem::path& manifest, const std::filesystem::path& blob) {
  std::string bytes(kMagic, kMagic + 4);
  put_u32(bytes, kFeatureFormatVersion);
  put_u32(bytes, static_cast<std::uint32_t>(data.samples.size()));
  put_u32(bytes, 0);
  std::string lines;
  bool first = true;
  for (const auto& s : data.samples) {
    const std::size_t offset = bytes.size();
    for (float f : s.features.values()) put_f32(bytes, f);
    json rec{{"id", s.id},
             {"offset", offset},
             {"bytes", bytes.size() - offset},
             {"rows", s.features.rows()},
             {"cols", s.features.cols()},
             {"K", s.K},
             {"L", s.L},
             {"N", s.N},
             {"question", s.question},
             {"candidates", s.candidates},
             {"gold", s.gold},
             {"type", question_type_name(s.type)},
             {"script", script_json(s.script)}};
    if (first) {
      rec["vocabulary"] = data.vocab.tokens();
      rec["spec"] = spec_json(data.spec);
      rec["format_version"] = kFeatureFormatVersion;
      first = false;
    }
    lines += rec.dump();
    lines += '\n';
  }
  write_all(blob, bytes);
  write_all(manifest, lines);
}

Dataset read_feature_file(const std::filesystem::path& manifest, const std::filesystem::path& blob) {
  const std::string raw = read_all(blob);
  const auto* b = reinterpret_cast<const unsigned char*>(raw.data());
  if (raw.size() < 4 || std::memcmp(raw.data(), kMagic, 4) != 0) {
    throw FormatError(blob.string() + ": bad magic, not a CLGF feature blob");
  }
  if (raw.size() < kHeaderBytes) throw CorruptionError(blob.string() + ": truncated header", raw.size());
  const std::uint32_t version = get_u32(b + 4);
  if (version != kFeatureFormatVersion) {
    throw FormatError(blob.string() + ": unsupported format version " + std::to_string(version));
  }
  const std::uint32_t count = get_u32(b + 8);

  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  Dataset d;
  std::string line;
  std::size_t expected_offset = kHeaderBytes;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++lineno;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(manifest.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      if (lineno == 1) {
        d.vocab = Vocabulary::from_tokens(rec.at("vocabulary").get<std::vector<std::string>>());
        d.spec = spec_from(rec.at("spec"));
      }
      QASample s;
      s.id = rec.at("id").get<std::uint64_t>();
      s.K = rec.at("K").get<std::size_t>();
      s.L = rec.at("L").get<std::size_t>();
      s.N = rec.at("N").get<std::size_t>();
      const auto offset = rec.at("offset").get<std::size_t>();
      const auto nbytes = rec.at("bytes").get<std::size_t>();
      const auto rows = rec.at("rows").get<std::size_t>(), cols = rec.at("cols").get<std::size_t>();
      if (offset != expected_offset) {
        throw CorruptionError(manifest.string() + ": record " + std::to_string(lineno) +
                                  " does not start where the previous region ends",
                              offset);
      }
      if (nbytes != rows * cols * 4) throw FormatError("record size disagrees with its shape");
      if (offset + nbytes > raw.size()) {
        throw CorruptionError(blob.string() + ": truncated blob, record " + std::to_string(lineno) +
                                  " needs bytes up to " + std::to_string(offset + nbytes),
                              raw.size());
      }
      std::vector<float> values(rows * cols);
      for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = std::bit_cast<float>(get_u32(b + offset + 4 * i));
      }
      s.features = nk::Tensor<float>(rows, cols, std::move(values));
      s.question = rec.at("question").get<TokenSeq>();
      s.candidates = rec.at("candidates").get<std::vector<TokenSeq>>();
      s.gold = rec.at("gold").get<std::size_t>();
      s.type = question_type_from_name(rec.at("type").get<std::string>());
      s.script = script_from(rec.at("script"), s.features, s.N, cols - kBoxWidth);
      expected_offset = offset + nbytes;
      d.samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw FormatError(manifest.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (d.samples.size() != count) {
    throw FormatError(manifest.string() + ": " + std::to_string(d.samples.size()) + " records but blob header says " +
                      std::to_string(count));
  }
  if (expected_offset != raw.size()) {
    throw CorruptionError(blob.string() + ": trailing bytes after the last record", expected_offset);
  }
  return d;
}

void write_dataset_dir(const SplitDataset& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_feature_file(data.train, dir / "train.jsonl", dir / "train.clgf");
  write_feature_file(data.val, dir / "val.jsonl", dir / "val.clgf");
}

Dataset read_split(const std::filesystem::path& dir, const std::string& split) {
  if (split != "train" && split != "val") throw ContractError("split must be 'train' or 'val', got '" + split + "'");
  return read_feature_file(dir / (split + ".jsonl"), dir / (split + ".clgf"));
}

DatasetSpec dataset_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SpecError(std::string("dataset spec is not valid JSON: ") + e.what());
  }
  return spec_from(j);
}

std::string dataset_spec_to_json(const DatasetSpec& spec) { return spec_json(spec).dump(2); }

std::vector<std::size_t> named_entities(const QASample& s, const Vocabulary& vocab) {
  const Lexicon lex = lexicon_for(vocab);
  std::vector<std::size_t> out;
  for (TokenId t : s.question) {
    if (!lex.is_type(t)) continue;
    if (auto e = entity_of_type(s.script, lex.type_of(t))) out.push_back(*e);
  }
  return out;
}

std::size_t script_oracle(const QASample& s, const Vocabulary& vocab) {
  const Lexicon lex = lexicon_for(vocab);
  const auto& sc = s.script;
  const auto& q = s.question;
  auto fail = [&](const char* why) -> std::size_t {
    throw ContractError("sample " + std::to_string(s.id) + ": " + why);
  };
  if (q.empty()) return fail("empty question");
  if (q[0] == lex.who && q.size() == 3 && lex.is_pred(q[2])) {
    const auto k = find_event(sc, std::nullopt, lex.pred_of(q[2]));
    if (!k) return fail("question predicate not in script");
    return match_candidate(s, {lex.type_tok(sc.entities[sc.events[*k].subject].type)});
  }
  if (q[0] == lex.what && q.size() == 7) {
    const auto actor = entity_of_type(sc, lex.type_of(q[2]));
    const auto before = entity_of_type(sc, lex.type_of(q[5]));
    const auto k = find_event(sc, before, lex.pred_of(q[6]));
    if (!actor || !k) return fail("temporal question does not match the script");
    for (const auto& c : sc.causes) {
      if (c[0] == *k && sc.events[c[1]].subject == *actor) {
        return match_candidate(s, {lex.pred_tok(sc.events[c[1]].predicate)});
      }
    }
    return fail("no event follows the referenced one");
  }
  if (q[0] == lex.why && q.size() == 4) {
    const auto actor = entity_of_type(sc, lex.type_of(q[2]));
    const auto k = find_event(sc, actor, lex.pred_of(q[3]));
    if (!k) return fail("causal question does not match the script");
    for (const auto& c : sc.causes) {
      if (c[1] == *k) {
        const auto& cause = sc.events[c[0]];
        return match_candidate(s, {lex.type_tok(sc.entities[cause.subject].type), lex.pred_tok(cause.predicate)});
      }
    }
    return fail("event has no recorded cause");
  }
  return fail("unrecognised question template");
}

std::size_t single_entity_oracle(const QASample& s, const Vocabulary& vocab, std::size_t entity, Rng& rng) {
  const Lexicon lex = lexicon_for(vocab);
  const EntityView v = view_of(s, entity);
  const auto& q = s.question;
  const TokenId own_type = lex.type_tok(v.type);
  auto did = [&](std::uint32_t pred) {
    return std::any_of(v.acts.begin(), v.acts.end(), [&](const auto& a) { return a.second == pred; });
  };
  auto acted_on_at = [&](std::size_t clip) {
    return std::find(v.acted_on.begin(), v.acted_on.end(), clip) != v.acted_on.end();
  };

  std::vector<std::size_t> consistent;
  for (std::size_t c = 0; c < s.candidates.size(); ++c) {
    const TokenSeq& cand = s.candidates[c];
    bool ok = true;
    if (q[0] == lex.who) {
      // The viewer knows whether it performed the predicate itself.
      const bool mine = did(lex.pred_of(q[2]));
      ok = mine ? cand[0] == own_type : cand[0] != own_type;
    } else if (q[0] == lex.what) {
      const std::uint32_t pred = lex.pred_of(cand[0]);
      if (q[2] == own_type) {
        // Own action that directly follows being acted on.
        ok = std::any_of(v.acts.begin(), v.acts.end(), [&](const auto& a) {
          return a.second == pred && a.first > 0 && acted_on_at(a.first - 1);
        });
      } else {
        ok = !did(pred);
      }
    } else if (q[0] == lex.why) {
      const std::uint32_t pred = lex.pred_of(cand[1]);
      if (q[2] == own_type) {
        ok = cand[0] != own_type && !did(pred);
      } else if (cand[0] == own_type) {
        ok = did(pred);
      } else {
        ok = !did(pred);
      }
    }
    if (ok) consistent.push_back(c);
  }
  if (consistent.empty()) {
    consistent.resize(s.candidates.size());
    std::iota(consistent.begin(), consistent.end(), std::size_t{0});
  }
  return consistent[uniform_index(rng, consistent.size())];
}

}  // namespace clg
