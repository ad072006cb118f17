#include "clg/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "clg/contrastive.hpp"
#include "clg/nk/optim.hpp"
#include "json.hpp"

namespace clg {
namespace {

using json = nlohmann::json;
using Tape = nk::Tape<float>;
using V = nk::Var<float>;

constexpr char kCkptMagic[4] = {'C', 'L', 'G', 'C'};
constexpr std::uint64_t kPriorSalt = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kEvalPriorSalt = 0xC2B2AE3D27D4EB4FULL;

template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(threads, n); ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// Batch boundaries; a trailing singleton joins the previous batch so every
// contrastive batch has at least two rows.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t b) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n; i += b) out.emplace_back(i, std::min(n, i + b));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = n;
    out.pop_back();
  }
  return out;
}

struct SampleForward {
  std::unique_ptr<Tape> tape;
  V xg;
  V nodes;
};

SampleForward forward_sample(Model& m, const QASample& s, nk::Binding b) {
  SampleForward f;
  f.tape = std::make_unique<Tape>();
  const auto g = s.graph<float>();
  auto out = forward_hierarchy(m.graph, *f.tape, g, b);
  f.xg = out.fused.X_g;
  f.nodes = out.final_nodes;
  return f;
}

struct BatchOut {
  V logits;
  std::optional<V> qa, nce, kl;
};

BatchOut batch_objective(Model& m, Tape& tape, V G, const std::vector<const QASample*>& batch, nk::Binding b) {
  const auto& cfg = m.config;
  std::vector<TokenSeq> questions, cands;
  std::vector<std::size_t> gold;
  const std::size_t C = batch.front()->candidates.size();
  for (const auto* s : batch) {
    if (s->candidates.size() != C) throw ContractError("samples in a batch disagree on candidate count");
    questions.push_back(s->question);
    cands.insert(cands.end(), s->candidates.begin(), s->candidates.end());
    gold.push_back(s->gold);
  }
  auto Q = encode_texts(m.text, tape, std::span<const TokenSeq>(questions), b);
  auto Cr = encode_texts(m.text, tape, std::span<const TokenSeq>(cands), b);
  auto F = fuse_query(m.head, G, Q, b);
  BatchOut out;
  out.logits = candidate_logits(F, Cr, C);
  out.qa = qa_loss(out.logits, std::span<const std::size_t>(gold));
  if (cfg.contrastive && batch.size() >= 2) {
    out.nce = info_nce(Q, G, static_cast<float>(cfg.tau));
    out.kl = kl_match(Q, G);
  }
  return out;
}

std::size_t argmax_row(const nk::Tensor<float>& t, std::size_t r) {
  const auto row = t.row_span(r);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

double checked(double v, const char* term, std::uint64_t iteration) {
  if (!std::isfinite(v)) throw TrainingError(term, iteration);
  return v;
}

nk::Tensor<float> stack_rows(const std::vector<SampleForward>& fw, bool nodes) {
  std::size_t rows = 0;
  const std::size_t cols = (nodes ? fw[0].nodes : fw[0].xg).cols();
  for (const auto& f : fw) rows += (nodes ? f.nodes : f.xg).rows();
  nk::Tensor<float> out(rows, cols);
  std::size_t r0 = 0;
  for (const auto& f : fw) {
    const auto& v = (nodes ? f.nodes : f.xg).value();
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(r0 * cols));
    r0 += v.rows();
  }
  return out;
}

void update_running_stats(Model& m, const nk::Tensor<float>& g) {
  const double mom = m.config.norm_momentum;
  const std::size_t n = g.rows(), d = g.cols();
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += g(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (g(r, c) - mean) * (g(r, c) - mean);
    var /= static_cast<double>(n);
    auto& rm = m.norm_mean.value(0, c);
    auto& rv = m.norm_var.value(0, c);
    rm = static_cast<float>((1.0 - mom) * rm + mom * mean);
    rv = static_cast<float>((1.0 - mom) * rv + mom * var);
  }
}

nk::Tensor<float> apply_running_stats(const Model& m, nk::Tensor<float> g) {
  if (!m.config.graph_norm) return g;
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) {
      g(r, c) = static_cast<float>((g(r, c) - m.norm_mean.value(0, c)) /
                                   std::sqrt(static_cast<double>(m.norm_var.value(0, c)) + m.config.norm_eps));
    }
  }
  return g;
}

void count_answer(MetricsRow& row, const QASample& s, bool correct) {
  const auto t = static_cast<std::size_t>(s.type);
  ++row.count_type[t];
  if (correct) ++row.correct_type[t];
}

json config_json(const TrainConfig& c) {
  return json{{"d", c.d},
              {"P", c.P},
              {"lr", c.lr},
              {"batch", c.batch},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"tau", c.tau},
              {"adv", c.adv},
              {"contrastive", c.contrastive},
              {"qa", c.qa},
              {"encoder_depth", c.encoder_depth},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"weight_decay", c.weight_decay},
              {"graph_norm", c.graph_norm},
              {"norm_momentum", c.norm_momentum},
              {"norm_eps", c.norm_eps}};
}

TrainConfig config_from(const json& j) {
  if (!j.is_object()) throw SpecError("train config must be a JSON object");
  TrainConfig c;
  for (const auto& [k, v] : j.items()) {
    try {
      if (k == "d") c.d = v.get<std::size_t>();
      else if (k == "P") c.P = v.get<std::size_t>();
      else if (k == "lr") c.lr = v.get<double>();
      else if (k == "batch") c.batch = v.get<std::size_t>();
      else if (k == "epochs") c.epochs = v.get<std::size_t>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "tau") c.tau = v.get<double>();
      else if (k == "adv") c.adv = v.get<bool>();
      else if (k == "contrastive") c.contrastive = v.get<bool>();
      else if (k == "qa") c.qa = v.get<bool>();
      else if (k == "encoder_depth") c.encoder_depth = v.get<std::size_t>();
      else if (k == "beta1") c.beta1 = v.get<double>();
      else if (k == "beta2") c.beta2 = v.get<double>();
      else if (k == "adam_eps") c.adam_eps = v.get<double>();
      else if (k == "weight_decay") c.weight_decay = v.get<double>();
      else if (k == "graph_norm") c.graph_norm = v.get<bool>();
      else if (k == "norm_momentum") c.norm_momentum = v.get<double>();
      else if (k == "norm_eps") c.norm_eps = v.get<double>();
      else throw SpecError("unknown train config key '" + k + "'");
    } catch (const json::exception& e) {
      throw SpecError("train config key '" + k + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  Reader(std::string bytes, std::string name) : b_(std::move(bytes)), name_(std::move(name)) {}
  std::uint32_t u32() {
    need(4);
    const auto* p = reinterpret_cast<const unsigned char*>(b_.data() + pos_);
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw CorruptionError(name_ + ": truncated checkpoint", b_.size());
  }
  std::string b_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw SpecError("train config: " + m); };
  if (d == 0) fail("d must be positive");
  if (batch == 0) fail("batch (N_b) must be at least 1");
  if (!(tau > 0.0)) fail("tau must be positive");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (encoder_depth != 1 && encoder_depth != 2) fail("encoder_depth must be 1 or 2");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0,1)");
  if (!(adam_eps > 0.0) || !(norm_eps > 0.0)) fail("eps values must be positive");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be nonnegative");
  if (!(norm_momentum > 0.0 && norm_momentum <= 1.0)) fail("norm_momentum must lie in (0,1]");
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SpecError(std::string("train config is not valid JSON: ") + e.what());
  }
  return config_from(j);
}

std::string train_config_to_json(const TrainConfig& c) { return config_json(c).dump(2); }

Model Model::init(const TrainConfig& c, std::size_t d_in, std::size_t M, std::size_t vocab) {
  c.validate();
  Model m;
  m.config = c;
  m.d_in = d_in;
  m.M = M;
  nk::Rng rng(c.seed);
  m.graph = HierParams<float>::init(d_in, c.d, M, c.P, rng);
  m.text = TextEncoder<float>::init(vocab, c.d, c.encoder_depth, rng);
  m.head = QaHead<float>::init(c.d, rng);
  m.disc = Discriminator<float>::init(c.d, rng);
  m.norm_mean = nk::Parameter<float>("graph_norm.mean", nk::Tensor<float>(1, c.d, 0.0f));
  m.norm_var = nk::Parameter<float>("graph_norm.var", nk::Tensor<float>(1, c.d, 1.0f));
  return m;
}

std::vector<nk::Parameter<float>*> Model::main_parameters() {
  std::vector<nk::Parameter<float>*> out;
  auto push = [&](nk::Parameter<float>& p) { out.push_back(&p); };
  graph.visit(push);
  text.visit(push);
  head.visit(push);
  return out;
}

std::vector<nk::Parameter<float>*> Model::disc_parameters() {
  std::vector<nk::Parameter<float>*> out;
  disc.visit([&](nk::Parameter<float>& p) { out.push_back(&p); });
  return out;
}

std::vector<nk::Parameter<float>*> Model::all_tensors() {
  auto out = main_parameters();
  for (auto* p : disc_parameters()) out.push_back(p);
  out.push_back(&norm_mean);
  out.push_back(&norm_var);
  return out;
}

LossBundle make_bundle(const TrainConfig& c, double l_d, double l_g, double l_n, double l_kl, double l_qa) {
  LossBundle b;
  if (c.adv) {
    b.l_d = l_d;
    b.l_g = l_g;
  }
  if (c.contrastive) {
    b.l_n = l_n;
    b.l_kl = l_kl;
  }
  if (c.qa) b.l_qa = l_qa;
  b.total = b.l_d + b.l_g + b.l_n + b.l_kl + b.l_qa;
  return b;
}

std::size_t thread_count_from_env() {
  const char* v = std::getenv("CLANG_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) return 1;
  return static_cast<std::size_t>(n);
}

void check_compatible(const Model& model, const Dataset& data) {
  if (data.samples.empty()) throw ContractError("dataset is empty");
  const auto& f = data.samples.front().features;
  if (f.rows() != model.M || f.cols() != model.d_in) {
    throw CheckpointError("model expects " + std::to_string(model.M) + " nodes of width " +
                          std::to_string(model.d_in) + ", dataset has " + std::to_string(f.rows()) + " x " +
                          std::to_string(f.cols()));
  }
  if (data.vocab.capacity() != model.text.vocab_size()) {
    throw CheckpointError("vocabulary capacity " + std::to_string(data.vocab.capacity()) +
                          " differs from the model's " + std::to_string(model.text.vocab_size()));
  }
}

MetricsRow evaluate(Model& m, const Dataset& data, const std::string& split, std::size_t epoch,
                    std::vector<Prediction>* predictions, std::size_t threads) {
  check_compatible(m, data);
  const auto& cfg = m.config;
  const auto t0 = std::chrono::steady_clock::now();
  PriorSampler<float> prior(cfg.d, cfg.seed ^ kEvalPriorSalt);
  MetricsRow row;
  row.epoch = epoch;
  row.split = split;
  double sd = 0, sg = 0, sn = 0, skl = 0, sqa = 0;
  if (predictions) predictions->assign(data.samples.size(), {});
  for (const auto& [lo, hi] : batch_ranges(data.samples.size(), cfg.batch)) {
    const std::size_t nb = hi - lo;
    std::vector<const QASample*> batch;
    for (std::size_t i = lo; i < hi; ++i) batch.push_back(&data.samples[i]);
    std::vector<SampleForward> fw(nb);
    parallel_for(nb, threads, [&](std::size_t i) { fw[i] = forward_sample(m, *batch[i], nk::Binding::Frozen); });
    Tape tape;
    auto G = tape.constant(apply_running_stats(m, stack_rows(fw, false)));
    auto bo = batch_objective(m, tape, G, batch, nk::Binding::Frozen);
    const auto& logits = bo.logits.value();
    for (std::size_t i = 0; i < nb; ++i) {
      const std::size_t choice = argmax_row(logits, i);
      count_answer(row, *batch[i], choice == batch[i]->gold);
      if (predictions) {
        auto r = logits.row_span(i);
        (*predictions)[lo + i] = {choice, std::vector<float>(r.begin(), r.end())};
      }
    }
    const double w = static_cast<double>(nb);
    sqa += w * bo.qa->value().item();
    if (bo.nce) {
      sn += w * bo.nce->value().item();
      skl += w * bo.kl->value().item();
    }
    if (cfg.adv) {
      const auto fake = stack_rows(fw, true);
      Tape dt;
      sd += w * loss_discriminator(m.disc, dt, prior.sample(fake.rows()), fake).value().item();
      for (auto& f : fw) sg += loss_generator(m.disc, f.nodes).value().item();
    }
  }
  const double n = static_cast<double>(data.samples.size());
  const auto b = make_bundle(cfg, sd / n, sg / n, sn / n, skl / n, sqa / n);
  row.l_d = b.l_d;
  row.l_g = b.l_g;
  row.l_n = b.l_n;
  row.l_kl = b.l_kl;
  row.l_qa = b.l_qa;
  row.total = b.total;
  finalize_accuracy(row);
  row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset* val_set,
                  const TrainHooks& hooks, std::size_t threads) {
  config.validate();
  if (train_set.samples.empty()) throw ContractError("train: empty training set");
  if (val_set && val_set->vocab.tokens() != train_set.vocab.tokens()) {
    throw ContractError("train: train and val vocabularies differ");
  }
  const auto& f0 = train_set.samples.front().features;
  TrainResult result;
  Model model = Model::init(config, f0.cols(), f0.rows(), train_set.vocab.capacity());
  check_compatible(model, train_set);

  nk::AdamW<float> opt(model.main_parameters(), config.adam());
  nk::AdamW<float> dopt(model.disc_parameters(), config.adam());
  PriorSampler<float> prior(config.d, config.seed ^ kPriorSalt);
  nk::Rng shuffle_rng(config.seed + 1);

  const std::size_t n = train_set.samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t iteration = 0;
  bool stop = false;

  for (std::size_t epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    MetricsRow row;
    row.epoch = epoch;
    row.split = "train";
    double sd = 0, sg = 0, sn = 0, skl = 0, sqa = 0, seen = 0;

    for (const auto& [lo, hi] : batch_ranges(n, config.batch)) {
      const std::size_t nb = hi - lo;
      std::vector<const QASample*> batch;
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(&train_set.samples[order[i]]);

      std::vector<SampleForward> fw(nb);
      Tape bt;
      std::optional<V> Graw_opt;
      std::optional<BatchOut> bo_opt;
      try {
        parallel_for(nb, threads, [&](std::size_t i) { fw[i] = forward_sample(model, *batch[i], nk::Binding::Train); });
        const auto graw = stack_rows(fw, false);
        Graw_opt = bt.leaf(graw, true);
        auto G = config.graph_norm ? nk::standardize_cols(*Graw_opt, static_cast<float>(config.norm_eps)) : *Graw_opt;
        if (config.graph_norm) update_running_stats(model, graw);
        bo_opt = batch_objective(model, bt, G, batch, nk::Binding::Train);
      } catch (const NumericError&) {
        throw TrainingError("forward", iteration);
      }
      auto Graw = *Graw_opt;
      auto& bo = *bo_opt;

      const double lqa = checked(bo.qa->value().item(), "l_qa", iteration);
      const double lnce = bo.nce ? checked(bo.nce->value().item(), "l_n", iteration) : 0.0;
      const double lkl = bo.kl ? checked(bo.kl->value().item(), "l_kl", iteration) : 0.0;

      std::vector<V> terms;
      if (config.qa) terms.push_back(*bo.qa);
      if (bo.nce) {
        terms.push_back(*bo.nce);
        terms.push_back(*bo.kl);
      }
      nk::Tensor<float> gG(nb, config.d);
      if (!terms.empty()) {
        V main = terms[0];
        for (std::size_t k = 1; k < terms.size(); ++k) main = nk::add(main, terms[k]);
        bt.backward(main);
        gG = Graw.grad();
      }
      for (std::size_t i = 0; i < nb; ++i) {
        count_answer(row, *batch[i], argmax_row(bo.logits.value(), i) == batch[i]->gold);
      }

      double ld = 0.0, lg = 0.0;
      std::vector<V> lgv(nb);
      if (config.adv) {
        const auto fake = stack_rows(fw, true);
        Tape dt;
        auto LD = loss_discriminator(model.disc, dt, prior.sample(fake.rows()), fake);
        ld = checked(LD.value().item(), "l_d", iteration);
        dt.backward(LD);
        dt.flush_param_grads();
        dopt.step();
        dopt.zero_grad();
        for (std::size_t i = 0; i < nb; ++i) {
          lgv[i] = loss_generator(model.disc, fw[i].nodes);
          lg += lgv[i].value().item();
        }
        lg = checked(lg / static_cast<double>(nb), "l_g", iteration);
      }

      if (!terms.empty() || config.adv) {
        const float inv = 1.0f / static_cast<float>(nb);
        parallel_for(nb, threads, [&](std::size_t i) {
          Tape& t = *fw[i].tape;
          auto gi = t.constant(nk::Tensor<float>(1, config.d, std::vector<float>(gG.row_span(i).begin(), gG.row_span(i).end())));
          V s = nk::sum(nk::mul(fw[i].xg, gi));
          if (config.adv) s = nk::add(s, nk::scale(lgv[i], inv));
          t.backward(s);
        });
        bt.flush_param_grads();
        for (auto& f : fw) f.tape->flush_param_grads();
        opt.step();
        opt.zero_grad();
      }

      const auto bundle = make_bundle(config, ld, lg, lnce, lkl, lqa);
      if (hooks.on_iteration) hooks.on_iteration(iteration, bundle);
      const double w = static_cast<double>(nb);
      sd += w * ld;
      sg += w * lg;
      sn += w * lnce;
      skl += w * lkl;
      sqa += w * lqa;
      seen += w;
      ++iteration;
      if (hooks.max_iterations && iteration >= hooks.max_iterations) {
        stop = true;
        break;
      }
    }

    const auto b = make_bundle(config, sd / seen, sg / seen, sn / seen, skl / seen, sqa / seen);
    row.l_d = b.l_d;
    row.l_g = b.l_g;
    row.l_n = b.l_n;
    row.l_kl = b.l_kl;
    row.l_qa = b.l_qa;
    row.total = b.total;
    finalize_accuracy(row);
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.append(row);
    if (hooks.on_row) hooks.on_row(row);

    if (val_set) {
      auto vrow = evaluate(model, *val_set, "val", epoch, nullptr, threads);
      result.log.append(vrow);
      if (hooks.on_row) hooks.on_row(vrow);
      if (vrow.acc_all > result.best_val_accuracy) {
        result.best_val_accuracy = vrow.acc_all;
        result.best_epoch = epoch;
        result.best = model;
      }
    }
  }
  if (!val_set) {
    result.best = model;
    result.best_epoch = config.epochs ? config.epochs - 1 : 0;
  }
  if (result.best_val_accuracy < 0.0 && val_set) result.best = model;
  result.last = std::move(model);
  return result;
}

void save_checkpoint(Model& model, const std::filesystem::path& path) {
  std::string out(kCkptMagic, kCkptMagic + 4);
  put_u32(out, kCheckpointVersion);
  json header{{"config", config_json(model.config)},
              {"d_in", model.d_in},
              {"M", model.M},
              {"vocab", model.text.vocab_size()}};
  const std::string h = header.dump();
  put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  const auto tensors = model.all_tensors();
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto* p : tensors) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put_u32(out, static_cast<std::uint32_t>(p->value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p->value.cols()));
    for (float v : p->value.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  Reader r(ss.str(), path.string());
  if (r.str(4) != std::string(kCkptMagic, 4)) throw FormatError(path.string() + ": bad magic, not a CLGC checkpoint");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  json header;
  try {
    header = json::parse(r.str(r.u32()));
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": unreadable config echo: " + e.what());
  }
  const auto cfg = config_from(header.at("config"));
  Model m = Model::init(cfg, header.at("d_in").get<std::size_t>(), header.at("M").get<std::size_t>(),
                        header.at("vocab").get<std::size_t>());
  auto tensors = m.all_tensors();
  const auto count = r.u32();
  if (count != tensors.size()) {
    throw CheckpointError(path.string() + ": " + std::to_string(count) + " tensors, model has " +
                          std::to_string(tensors.size()));
  }
  for (auto* p : tensors) {
    const std::string name = r.str(r.u32());
    const auto rows = r.u32(), cols = r.u32();
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
      throw CheckpointError(path.string() + ": tensor '" + name + "' [" + std::to_string(rows) + "x" +
                            std::to_string(cols) + "] does not match '" + p->name + "' " +
                            p->value.shape_string());
    }
    for (auto& v : p->value.values()) v = std::bit_cast<float>(r.u32());
  }
  if (!r.done()) throw CorruptionError(path.string() + ": trailing bytes", r.pos());
  return m;
}

}  // namespace clg
