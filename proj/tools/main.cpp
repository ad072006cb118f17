#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "clg/data_synth.hpp"
#include "clg/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw clg::IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_row(const clg::MetricsRow& r) {
  std::printf("epoch %3zu %-5s acc %.4f [causal %.3f temporal %.3f descriptive %.3f] total %.4f (qa %.4f n %.4f kl %.4f d %.4f g %.4f) %.1fs\n",
              r.epoch, r.split.c_str(), r.acc_all, r.acc_type[0], r.acc_type[1], r.acc_type[2], r.total, r.l_qa,
              r.l_n, r.l_kl, r.l_d, r.l_g, r.wall_seconds);
  std::fflush(stdout);
}

int gen_data(const fs::path& spec_path, const fs::path& out, std::optional<std::uint64_t> seed) {
  auto spec = spec_path.empty() ? clg::DatasetSpec{} : clg::dataset_spec_from_json(slurp(spec_path));
  if (seed) spec.seed = *seed;
  const auto data = clg::generate_dataset(spec);
  clg::write_dataset_dir(data, out);
  std::printf("wrote %zu train / %zu val samples to %s\n", data.train.samples.size(), data.val.samples.size(),
              out.string().c_str());
  return 0;
}

int train(const fs::path& config_path, const fs::path& data_dir, const fs::path& out,
          std::optional<std::uint64_t> seed) {
  auto cfg = config_path.empty() ? clg::TrainConfig{} : clg::train_config_from_json(slurp(config_path));
  if (seed) cfg.seed = *seed;
  const auto tr = clg::read_split(data_dir, "train");
  const auto va = clg::read_split(data_dir, "val");
  fs::create_directories(out);
  std::ofstream(out / "config.json") << clg::train_config_to_json(cfg) << '\n';
  clg::TrainHooks hooks;
  hooks.on_row = print_row;
  const auto threads = clg::thread_count_from_env();
  auto result = clg::train(cfg, tr, &va, hooks, threads);
  clg::save_checkpoint(result.best, out / "best.clgc");
  clg::save_checkpoint(result.last, out / "last.clgc");
  result.log.save(out / "metrics.jsonl");
  std::printf("best val accuracy %.4f at epoch %zu; checkpoint %s\n", result.best_val_accuracy, result.best_epoch,
              (out / "best.clgc").string().c_str());
  return 0;
}

int eval(const fs::path& ckpt, const fs::path& data_dir, const std::string& split) {
  auto model = clg::load_checkpoint(ckpt);
  const auto data = clg::read_split(data_dir, split);
  print_row(clg::evaluate(model, data, split, 0, nullptr, clg::thread_count_from_env()));
  return 0;
}

int report(const fs::path& log_path, const fs::path& out, const std::string& formats) {
  const auto log = clg::MetricsLog::load(log_path);
  for (const auto& p : clg::emit_report(log, out, clg::parse_formats(formats))) std::printf("%s\n", p.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clg: event-graph VideoQA training on synthetic multi-object data"};
  app.require_subcommand(1);

  fs::path spec_path, gen_out;
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic train/val feature-file pair");
  gen->add_option("--spec", spec_path, "Dataset spec JSON (defaults when omitted)");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Generator seed (overrides the spec)");

  fs::path config_path, data_dir, train_out;
  std::optional<std::uint64_t> train_seed;
  auto* tr = app.add_subcommand("train", "Train a model and write checkpoints and metrics");
  tr->add_option("--config", config_path, "Train config JSON (defaults when omitted)");
  tr->add_option("--data", data_dir, "Directory written by gen-data")->required();
  tr->add_option("--out", train_out, "Output directory")->required();
  tr->add_option("--seed", train_seed, "Training seed (overrides the config)");

  fs::path ckpt, eval_data;
  std::string split = "val";
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  ev->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  ev->add_option("--data", eval_data, "Directory written by gen-data")->required();
  ev->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}));

  fs::path log_path, report_out;
  std::string formats = "csv,svg";
  auto* rep = app.add_subcommand("report", "Render a metrics log as CSV and/or SVG");
  rep->add_option("--log", log_path, "metrics.jsonl written by train")->required();
  rep->add_option("--out", report_out, "Output directory")->required();
  rep->add_option("--format", formats, "Comma-separated list of csv, svg");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return gen_data(spec_path, gen_out, gen_seed);
    if (*tr) return train(config_path, data_dir, train_out, train_seed);
    if (*ev) return eval(ckpt, eval_data, split);
    if (*rep) return report(log_path, report_out, formats);
  } catch (const clg::Error& e) {
    std::fprintf(stderr, "clg: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "clg: %s\n", e.what());
    return 1;
  }
  return 0;
}
