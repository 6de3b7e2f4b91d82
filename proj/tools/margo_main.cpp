// margo: late-fusion multimodal recommender with reliability-supervised
// modality weights. Subcommands: generate, train, evaluate, ablate, analyze,
// gradcheck.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "margo/analysis.hpp"
#include "margo/config.hpp"
#include "margo/data.hpp"
#include "margo/eval.hpp"
#include "margo/losses.hpp"
#include "margo/model.hpp"
#include "margo/optim.hpp"
#include "margo/synth.hpp"
#include "margo/train.hpp"

namespace fs = std::filesystem;
using namespace margo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

// Registers one CLI flag per config key; flags that were actually passed
// become overrides on top of the config file.
struct Overrides {
  std::map<std::string, CLI::Option*> options;
  std::map<std::string, std::string> storage;

  void add(CLI::App* cmd) {
    static const char* keys[] = {"alpha",      "beta",       "tau",
                                 "embed_dim",  "lr",         "batch_size",
                                 "max_epochs", "patience",   "k_list",
                                 "variant",    "seed",       "normalize_joint_weights",
                                 "eval_every", "interactions", "features",
                                 "ground_truth", "out_dir",  "feature_cache"};
    for (const char* k : keys)
      options[k] = cmd->add_option("--" + std::string(k), storage[k]);
  }

  std::map<std::string, std::string> collect() const {
    std::map<std::string, std::string> values;
    for (const auto& [k, opt] : options)
      if (opt->count() > 0) values[k] = storage.at(k);
    return values;
  }
};

config::RunConfig resolve_config(const std::string& config_path, const Overrides& ov,
                                 bool allow_grid) {
  std::map<std::string, std::string> file_values;
  if (!config_path.empty()) file_values = config::parse_file(config_path);
  return config::resolve(file_values, ov.collect(), allow_grid);
}

struct LoadedData {
  data::InteractionDataset ds;
  std::vector<data::ModalityFeatureTable> features;
};

LoadedData load_dataset(const config::RunConfig& cfg) {
  if (cfg.interactions_path.empty()) throw UsageError("no interactions path configured");
  if (cfg.feature_paths.empty()) throw UsageError("no feature paths configured");
  LoadedData d;
  d.ds = data::load_interactions(cfg.interactions_path);
  for (size_t m = 0; m < cfg.feature_paths.size(); ++m) {
    const std::string& path = cfg.feature_paths[m];
    if (cfg.feature_cache) {
      std::string cache = path + ".mrgf";
      if (fs::exists(cache)) {
        auto table = data::load_feature_cache(cache, static_cast<int>(m));
        if (table.features.rows != d.ds.item_count)
          throw DataError(cache + ": cache does not match dataset (stale cache?)");
        d.features.push_back(std::move(table));
        continue;
      }
      auto table = data::load_modality_features(path, static_cast<int>(m), d.ds);
      data::save_feature_cache(table, cache);
      d.features.push_back(std::move(table));
    } else {
      d.features.push_back(data::load_modality_features(path, static_cast<int>(m), d.ds));
    }
  }
  data::split_dataset(d.ds, {0.8, 0.1, 0.1}, cfg.train.hp.seed);
  return d;
}

void write_effective_config(const config::RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  std::ofstream out(fs::path(cfg.out_dir) / "effective_config.txt");
  if (!out) throw DataError("cannot write effective config under " + cfg.out_dir);
  out << config::effective_config(cfg);
}

void save_run(const config::RunConfig& cfg, const train::TrainResult& result,
              const std::string& subdir = "") {
  fs::path dir = fs::path(cfg.out_dir) / subdir;
  fs::create_directories(dir);
  model::save_checkpoint(result.params, (dir / "checkpoint.mrgc").string());
  if (result.stage1_params)
    model::save_checkpoint(*result.stage1_params, (dir / "checkpoint_stage1.mrgc").string());
  result.log.write_tsv((dir / "trainlog.tsv").string());
}

void print_handoff(const train::TrainResult& result) {
  if (result.log.stage2_init_fingerprint == 0) return;
  bool ok = result.log.stage1_best_fingerprint == 0 ||
            result.log.stage1_best_fingerprint == result.log.stage2_init_fingerprint;
  std::printf("stage handoff: %s (stage1_best=%016llx stage2_init=%016llx)\n",
              ok ? "bitwise-ok" : "MISMATCH",
              static_cast<unsigned long long>(result.log.stage1_best_fingerprint),
              static_cast<unsigned long long>(result.log.stage2_init_fingerprint));
  if (!ok) throw NumericError("stage handoff fingerprints differ");
}

int cmd_generate(const synth::SyntheticSpec& spec, const std::string& out_dir) {
  auto generated = synth::generate(spec);
  synth::write_files(generated, out_dir);

  // A ready-to-train config pointing at the generated files.
  std::ofstream cfg(fs::path(out_dir) / "dataset.cfg");
  cfg << "interactions=" << (fs::path(out_dir) / "interactions.tsv").string() << "\n";
  cfg << "features=";
  for (size_t m = 0; m < generated.features.size(); ++m)
    cfg << (m ? "," : "")
        << (fs::path(out_dir) / ("features_m" + std::to_string(m) + ".tsv")).string();
  cfg << "\n";
  cfg << "ground_truth=" << (fs::path(out_dir) / "ground_truth.tsv").string() << "\n";

  std::ofstream eff(fs::path(out_dir) / "effective_config.txt");
  eff << "users=" << spec.user_count << "\nitems=" << spec.item_count
      << "\nlatent_dim=" << spec.latent_dim << "\nmodality_dims=";
  for (size_t m = 0; m < spec.modality_dims.size(); ++m)
    eff << (m ? "," : "") << spec.modality_dims[m];
  eff << "\ninteractions_per_user=" << spec.interactions_per_user
      << "\ncorrupt_modality=" << spec.corrupted_modality
      << "\ncorrupt_frac=" << spec.corruption_fraction << "\nnoise_scale=" << spec.noise_scale
      << "\nseed=" << spec.seed << "\n";

  std::printf("generated %d users, %d items, %zu interactions, %zu modalities -> %s\n",
              generated.dataset.user_count, generated.dataset.item_count,
              generated.dataset.interactions.size(), generated.features.size(),
              out_dir.c_str());
  return kExitOk;
}

int cmd_train(const config::RunConfig& cfg) {
  write_effective_config(cfg);
  auto d = load_dataset(cfg);

  bool grid = cfg.alpha_grid.size() > 1 || cfg.tau_grid.size() > 1;
  if (!grid) {
    auto result = train::run_variant(cfg.train.hp.variant, cfg.train, d.ds, d.features);
    save_run(cfg, result);
    print_handoff(result);
    auto val = eval::evaluate(result.params, d.features, d.ds, data::Split::val,
                              cfg.train.hp.k_list, result.eval_stage);
    std::printf("%s", eval::format_report(val).c_str());
    std::printf("checkpoint: %s\n",
                (fs::path(cfg.out_dir) / "checkpoint.mrgc").string().c_str());
    return kExitOk;
  }

  // Grid mode: cross product over alpha and tau, selected by validation
  // Recall@20.
  std::vector<double> alphas =
      cfg.alpha_grid.empty() ? std::vector<double>{cfg.train.hp.alpha} : cfg.alpha_grid;
  std::vector<double> taus =
      cfg.tau_grid.empty() ? std::vector<double>{cfg.train.hp.tau} : cfg.tau_grid;
  double best_recall = -1.0;
  train::TrainResult best_result;
  double best_alpha = 0.0, best_tau = 0.0;
  std::printf("alpha\ttau\tval_recall20\n");
  for (double a : alphas)
    for (double t : taus) {
      config::RunConfig run = cfg;
      run.train.hp.alpha = a;
      run.train.hp.tau = t;
      auto result = train::run_variant(run.train.hp.variant, run.train, d.ds, d.features);
      auto val = eval::evaluate(result.params, d.features, d.ds, data::Split::val, {20},
                                result.eval_stage);
      std::printf("%g\t%g\t%.6f\n", a, t, val.recall[0]);
      if (val.recall[0] > best_recall) {
        best_recall = val.recall[0];
        best_result = std::move(result);
        best_alpha = a;
        best_tau = t;
      }
    }
  save_run(cfg, best_result);
  std::printf("best: alpha=%g tau=%g val_recall20=%.6f\n", best_alpha, best_tau, best_recall);
  return kExitOk;
}

int cmd_evaluate(const config::RunConfig& cfg, const std::string& checkpoint,
                 const std::string& split_name, const std::string& fusion) {
  write_effective_config(cfg);
  auto d = load_dataset(cfg);
  auto params = model::load_checkpoint(checkpoint);
  if (params.user_count != d.ds.user_count || params.item_count != d.ds.item_count)
    throw DataError("checkpoint does not match dataset dimensions");

  data::Split split;
  if (split_name == "val")
    split = data::Split::val;
  else if (split_name == "test")
    split = data::Split::test;
  else
    throw UsageError("--split must be val or test");
  model::Stage stage = fusion == "uniform" ? model::Stage::I : model::Stage::II;

  auto report = eval::evaluate(params, d.features, d.ds, split, cfg.train.hp.k_list, stage);
  std::printf("%s", eval::format_report(report).c_str());
  eval::write_report_tsv(report, (fs::path(cfg.out_dir) / "eval_report.tsv").string());
  return kExitOk;
}

int cmd_ablate(const config::RunConfig& cfg) {
  write_effective_config(cfg);
  auto d = load_dataset(cfg);

  const losses::Variant variants[] = {losses::Variant::full, losses::Variant::no_weight,
                                      losses::Variant::no_cal, losses::Variant::no_two_stage,
                                      losses::Variant::no_nograd};
  std::vector<analysis::VariantReport> reports;
  for (auto v : variants) {
    auto name = losses::to_string(v);
    std::printf("== variant %s ==\n", name.c_str());
    auto result = train::run_variant(v, cfg.train, d.ds, d.features);
    save_run(cfg, result, name);
    auto report = eval::evaluate(result.params, d.features, d.ds, data::Split::test,
                                 cfg.train.hp.k_list, result.eval_stage);
    std::printf("%s", eval::format_report(report).c_str());
    reports.push_back({name, report});
  }
  auto table = analysis::compare_variants(reports, "full");
  std::printf("\n%s", table.c_str());
  std::ofstream out(fs::path(cfg.out_dir) / "ablation.tsv");
  out << table;
  return kExitOk;
}

int cmd_analyze(const config::RunConfig& cfg, const std::string& checkpoint, int bins,
                int corrupted_modality) {
  write_effective_config(cfg);
  auto d = load_dataset(cfg);
  auto params = model::load_checkpoint(checkpoint);
  if (params.user_count != d.ds.user_count || params.item_count != d.ds.item_count)
    throw DataError("checkpoint does not match dataset dimensions");

  for (int m = 0; m < params.modality_count; ++m) {
    auto h = analysis::weight_histogram(params, m, bins);
    auto path = fs::path(cfg.out_dir) / ("weight_histogram_m" + std::to_string(m) + ".tsv");
    analysis::write_histogram_tsv(h, path.string());
    auto ws = analysis::weight_stats(params, m);
    std::printf("weights m%d: mean=%.4f std=%.4f\n", m, ws.mean, ws.stddev);
  }
  std::printf("weight histograms written (%d bins, %d modalities)\n", bins,
              params.modality_count);

  auto batch = data::sample_triplets(d.ds, cfg.train.hp.batch_size, cfg.train.hp.seed);
  auto probe = analysis::conflict_probe(batch, params, d.features, cfg.train.hp);
  std::printf("conflict probe: inner_product=%.6g violation=%d precondition_held=%d\n",
              probe.inner_product, probe.violation ? 1 : 0, probe.precondition_held ? 1 : 0);
  {
    std::ofstream out(fs::path(cfg.out_dir) / "conflict_probe.tsv");
    out << "inner_product\tviolation\tprecondition_held\n";
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.17g\t%d\t%d\n", probe.inner_product,
                  probe.violation ? 1 : 0, probe.precondition_held ? 1 : 0);
    out << buf;
  }

  if (!cfg.ground_truth_path.empty()) {
    auto truth = synth::load_ground_truth(cfg.ground_truth_path, d.ds);
    auto score = analysis::reliability_recovery_score(params, truth, corrupted_modality);
    std::printf("recovery: mean_w_corrupted=%.4f mean_w_clean=%.4f margin=%.4f auc=%.4f\n",
                score.mean_w_corrupted, score.mean_w_clean,
                score.mean_w_clean - score.mean_w_corrupted, score.auc);
    std::ofstream out(fs::path(cfg.out_dir) / "recovery.tsv");
    out << "mean_w_corrupted\tmean_w_clean\tauc\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.17g\t%.17g\t%.17g\n", score.mean_w_corrupted,
                  score.mean_w_clean, score.auc);
    out << buf;
  }
  return kExitOk;
}

int cmd_gradcheck(uint64_t seed, int samples, double h) {
  // Small instance: 5 users, 8 items, 2 modalities, d=4.
  synth::SyntheticSpec spec;
  spec.user_count = 5;
  spec.item_count = 8;
  spec.latent_dim = 3;
  spec.modality_dims = {6, 5};
  spec.interactions_per_user = 4;
  spec.corruption_fraction = 0.5;
  spec.corrupted_modality = 1;
  spec.seed = seed;
  auto d = synth::generate(spec);
  data::split_dataset(d.dataset, {0.8, 0.1, 0.1}, seed);

  losses::Hyperparams hp;
  hp.alpha = 0.7;
  hp.beta = 0.3;
  hp.tau = 1.3;
  hp.embed_dim = 4;
  hp.seed = seed;
  auto params = model::init_params(5, 8, 2, 4, {6, 5}, seed);
  // Inflate the near-zero init so ratings and margins are O(1), and move the
  // biases off their exact-zero init; otherwise several true gradients sit at
  // or below the finite-difference noise floor.
  std::mt19937_64 brng(seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> bias_noise(0.0, 0.1);
  for (auto& mp : params.modalities) {
    for (auto& v : mp.user_embeddings.a) v *= 10.0;
    for (auto& v : mp.item_projection.a) v *= 10.0;
    for (auto& v : mp.item_bias) v = bias_noise(brng);
  }
  for (auto& v : params.weight_logits.a) v *= 100.0;
  auto batch = data::sample_triplets(d.dataset, 48, seed + 1);

  auto [loss1, grad1] = optim::backward(batch, params, d.features, model::Stage::I, hp);
  double err1 = optim::finite_diff_check(
      [&](const model::ModelParams& q) {
        return losses::stage1_loss(batch, q, d.features, hp.beta);
      },
      params, grad1, h, samples, seed + 2);

  std::vector<losses::ReliabilitySignal> signals;
  for (const auto& t : batch)
    signals.push_back(losses::make_signal(
        model::score_triplet(params, d.features, t, model::Stage::II), hp.tau));
  auto [loss2, grad2] = optim::backward(batch, params, d.features, model::Stage::II, hp);
  double err2 = optim::finite_diff_check(
      [&](const model::ModelParams& q) {
        return losses::stage2_loss_frozen_signals(batch, q, d.features, signals, hp.alpha,
                                                  hp.beta);
      },
      params, grad2, h, samples, seed + 3);

  std::printf("stage I : loss=%.6f max_rel_err=%.3g\n", loss1, err1);
  std::printf("stage II: loss=%.6f max_rel_err=%.3g\n", loss2, err2);
  if (err1 >= 1e-4 || err2 >= 1e-4)
    throw NumericError("gradient check failed (max relative error >= 1e-4)");
  std::printf("gradcheck ok\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modality-reliability guided multimodal recommender"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic multimodal dataset");
  synth::SyntheticSpec spec;
  std::string gen_out = "synthetic";
  std::string gen_dims = "32,32";
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--users", spec.user_count);
  gen->add_option("--items", spec.item_count);
  gen->add_option("--latent_dim", spec.latent_dim);
  gen->add_option("--modality_dims", gen_dims, "comma list of feature dims");
  gen->add_option("--interactions_per_user", spec.interactions_per_user);
  gen->add_option("--corrupt_modality", spec.corrupted_modality);
  gen->add_option("--corrupt_frac", spec.corruption_fraction);
  gen->add_option("--noise_scale", spec.noise_scale);
  gen->add_option("--seed", spec.seed);

  // config-driven subcommands
  std::string cfg_train, cfg_eval, cfg_ablate, cfg_analyze;
  Overrides ov_train, ov_eval, ov_ablate, ov_analyze;

  auto* tr = app.add_subcommand("train", "train the configured variant");
  tr->add_option("--config", cfg_train, "key=value config file");
  bool grid = false;
  tr->add_flag("--grid", grid, "alpha/tau comma lists form a search grid");
  ov_train.add(tr);

  auto* ev = app.add_subcommand("evaluate", "top-K metrics from a checkpoint");
  ev->add_option("--config", cfg_eval);
  std::string ev_checkpoint, ev_split = "test", ev_fusion = "weighted";
  ev->add_option("--checkpoint", ev_checkpoint)->required();
  ev->add_option("--split", ev_split, "val or test");
  ev->add_option("--fusion", ev_fusion, "weighted or uniform");
  ov_eval.add(ev);

  auto* ab = app.add_subcommand("ablate", "train and compare all variants");
  ab->add_option("--config", cfg_ablate);
  ov_ablate.add(ab);

  auto* an = app.add_subcommand("analyze", "weight histograms, conflict probe, recovery");
  an->add_option("--config", cfg_analyze);
  std::string an_checkpoint;
  int an_bins = 20, an_corrupted = 1;
  an->add_option("--checkpoint", an_checkpoint)->required();
  an->add_option("--bins", an_bins);
  an->add_option("--corrupted_modality", an_corrupted);
  ov_analyze.add(an);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient report");
  uint64_t gc_seed = 7;
  int gc_samples = 200;
  double gc_h = 1e-5;
  gc->add_option("--seed", gc_seed);
  gc->add_option("--samples", gc_samples);
  gc->add_option("--step", gc_h, "finite difference step");

  try {
    app.parse(argc, argv);

    if (gen->parsed()) {
      spec.modality_dims = config::parse_int_list(gen_dims, "modality_dims");
      return cmd_generate(spec, gen_out);
    }
    if (tr->parsed()) return cmd_train(resolve_config(cfg_train, ov_train, grid));
    if (ev->parsed())
      return cmd_evaluate(resolve_config(cfg_eval, ov_eval, false), ev_checkpoint, ev_split,
                          ev_fusion);
    if (ab->parsed()) return cmd_ablate(resolve_config(cfg_ablate, ov_ablate, false));
    if (an->parsed())
      return cmd_analyze(resolve_config(cfg_analyze, ov_analyze, false), an_checkpoint,
                         an_bins, an_corrupted);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_samples, gc_h);
    return kExitUsage;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    std::fprintf(stderr, "run with --help for usage\n");
    return kExitUsage;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumeric;
  }
}
