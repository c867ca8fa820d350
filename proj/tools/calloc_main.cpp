// Command-line front end: dataset generation, curriculum training, attack
// crafting, grid evaluation, report inspection, and gradient checking.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "calloc/attacks.hpp"
#include "calloc/baselines.hpp"
#include "calloc/checkpoint.hpp"
#include "calloc/csv_io.hpp"
#include "calloc/dataset.hpp"
#include "calloc/evaluate.hpp"
#include "calloc/gradcheck.hpp"
#include "calloc/kvconfig.hpp"
#include "calloc/synthetic.hpp"
#include "calloc/trainer.hpp"

namespace {

using namespace cal;

// "a:b:step" ranges or comma lists for the eps/phi axes.
std::vector<float> parse_axis(const std::string& s) {
  std::vector<float> out;
  auto colon1 = s.find(':');
  if (colon1 != std::string::npos) {
    auto colon2 = s.find(':', colon1 + 1);
    if (colon2 == std::string::npos) {
      throw std::runtime_error("bad axis '" + s + "': expected a:b:step");
    }
    double a = std::stod(s.substr(0, colon1));
    double b = std::stod(s.substr(colon1 + 1, colon2 - colon1 - 1));
    double step = std::stod(s.substr(colon2 + 1));
    if (step <= 0.0) throw std::runtime_error("bad axis '" + s + "': step must be > 0");
    for (double v = a; v <= b + 1e-9; v += step) out.push_back(static_cast<float>(v));
  } else {
    size_t pos = 0;
    while (pos < s.size()) {
      size_t comma = s.find(',', pos);
      if (comma == std::string::npos) comma = s.size();
      out.push_back(std::stof(s.substr(pos, comma - pos)));
      pos = comma + 1;
    }
  }
  if (out.empty()) throw std::runtime_error("bad axis '" + s + "': no values");
  return out;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos < s.size()) {
    size_t comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    if (comma > pos) out.push_back(s.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

CallocModel load_model_for(const std::string& ckpt_path, const FloorplanDataset& d) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_path);
  if (lc.model.dims().n_in != d.n_aps() || lc.model.dims().n_classes != d.n_classes()) {
    throw std::runtime_error(
        ckpt_path + " was trained for " + std::to_string(lc.model.dims().n_in) + " APs / " +
        std::to_string(lc.model.dims().n_classes) + " RPs but the dataset has " +
        std::to_string(d.n_aps()) + " / " + std::to_string(d.n_classes()));
  }
  LabeledMatrix train = normalized_train(d);
  if (lc.n_memory != 0 && lc.n_memory != train.x.rows) {
    throw std::runtime_error(ckpt_path + " expects an anchor memory of " +
                             std::to_string(lc.n_memory) + " rows but the train split has " +
                             std::to_string(train.x.rows));
  }
  lc.model.rebuild_anchor_memory(train);
  return std::move(lc.model);
}

int cmd_gen(int preset, int aps, double path_m, uint64_t seed, const std::string& out_dir,
            std::string name, double eta, double p0, double sigma) {
  SyntheticBuildingConfig cfg;
  if (preset > 0) {
    cfg = building_preset(preset, seed);
  } else {
    cfg.n_aps = aps;
    cfg.path_length_m = path_m;
    cfg.rng_seed = seed;
    cfg.name = "building";
  }
  cfg.path_loss_exponent = eta;
  cfg.ref_power_dbm = p0;
  cfg.shadowing_sigma_db = sigma;
  if (!name.empty()) cfg.name = name;
  cfg.validate();

  FloorplanDataset d = generate_synthetic_building(cfg, default_device_profiles());
  save_dataset(d, out_dir);
  std::cout << "wrote " << out_dir << ": " << d.n_aps() << " APs, " << d.n_classes()
            << " RPs, " << d.train.size() << " train rows, " << d.test.size()
            << " test rows, devices";
  for (const std::string& dev : d.devices) std::cout << ' ' << dev;
  std::cout << "\n";
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& config_path, bool no_curriculum,
              uint64_t seed, bool seed_given, const std::string& out_ckpt,
              const std::string& log_path) {
  FloorplanDataset d = load_dataset(data_path);
  TrainerConfig cfg;
  if (!config_path.empty()) cfg = TrainerConfig::from_kv(KvConfig::parse_file(config_path));
  if (seed_given) cfg.seed = seed;
  if (no_curriculum) cfg.curriculum = "nc";
  cfg.validate();

  TrainResult r = train_full(d, cfg);
  save_checkpoint(r.model, out_ckpt);
  if (!log_path.empty()) r.log.append_jsonl(log_path);

  ParamCountReport pc = r.model.param_count();
  const EpochRecord& last = r.log.epochs.back();
  std::cout << "trained " << (cfg.curriculum == "nc" ? "nc-calloc" : "calloc") << " on "
            << d.name << " (" << pc.total << " params), " << r.log.epochs.size()
            << " epochs, final loss " << last.loss << ", reverts " << last.reverts
            << ", final eps " << last.epsilon << "\n";
  std::cout << "checkpoint: " << out_ckpt << "\n";
  return 0;
}

int cmd_attack(const std::string& data_path, const std::string& ckpt, const std::string& kind,
               float eps, float phi, const std::string& mode, int steps, float alpha, float mu,
               const std::string& target, uint64_t seed, const std::string& out_csv) {
  FloorplanDataset d = load_dataset(data_path);
  CallocModel model = load_model_for(ckpt, d);

  AttackConfig cfg;
  cfg.kind = attack_kind_from_string(kind);
  cfg.epsilon = eps;
  cfg.phi_percent = phi;
  cfg.alpha = alpha;
  cfg.steps = steps;
  cfg.mu = mu;
  cfg.mode = attack_mode_from_string(mode);
  cfg.targeting = targeting_from_string(target);
  cfg.seed = seed;
  cfg.validate();

  APMask mask = select_target_aps(d, cfg.phi_percent, cfg.targeting, cfg.seed);
  LabeledMatrix test = normalized_test(d);
  InputGradFn grad = [&model](const Tensor& x, const std::vector<int>& labels) {
    return model.input_gradient(x, labels);
  };
  Tensor spoof_base = spoof_baseline_from(d);
  bool touches_inputs =
      mask.count() > 0 && (cfg.epsilon > 0.0f || cfg.mode == AttackMode::kSpoofing);
  Tensor adv = touches_inputs
                   ? craft_attack(grad, test.x, test.labels, cfg, mask, &spoof_base)
                   : test.x;

  std::vector<CsvRow> rows = dataset_rows(d, /*test_split=*/true);
  // dataset_rows orders the test split exactly as normalized_test does.
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int c = 0; c < adv.cols; ++c) {
      rows[i].rss[static_cast<size_t>(c)] = denormalize_dbm(adv.at(static_cast<int>(i), c));
    }
    rows[i].attacked = touches_inputs ? 1 : 0;
  }
  write_fingerprint_csv(out_csv, d.ap_names, rows, /*with_attacked_column=*/true);

  KvConfig manifest;
  manifest.set("kind", to_string(cfg.kind));
  manifest.set("epsilon", format_float32(cfg.epsilon));
  manifest.set("phi_percent", format_float32(cfg.phi_percent));
  manifest.set("alpha", format_float32(cfg.effective_alpha()));
  manifest.set_i("steps", cfg.effective_steps());
  manifest.set("mu", format_float32(cfg.mu));
  manifest.set("mode", to_string(cfg.mode));
  manifest.set("targeting", to_string(cfg.targeting));
  manifest.set_u("seed", cfg.seed);
  manifest.set("model", ckpt);
  manifest.set("dataset", d.name);
  manifest.set_i("n_rows", static_cast<int64_t>(rows.size()));
  manifest.set_i("n_targeted_aps", mask.count());
  manifest.write_file(out_csv + ".manifest");

  std::cout << "wrote " << rows.size() << " rows to " << out_csv << " (" << mask.count()
            << " APs targeted)\n";
  return 0;
}

int cmd_eval(const std::string& data_path, const std::string& ckpt, const std::string& baseline,
             const std::string& surrogate_spec, const std::string& kinds_arg,
             const std::string& eps_arg, const std::string& phi_arg, const std::string& mode,
             int steps, float alpha, float mu, const std::string& target,
             const std::string& devices_arg, int knn_k, int dnn_epochs, uint64_t seed,
             bool per_sample, bool mask_per_row, const std::string& out_csv,
             const std::string& out_json) {
  FloorplanDataset d = load_dataset(data_path);
  LabeledMatrix train = normalized_train(d);

  std::unique_ptr<Localizer> victim;
  if (!ckpt.empty()) {
    victim = std::make_unique<CallocLocalizer>(load_model_for(ckpt, d));
  } else if (baseline == "knn") {
    victim = std::make_unique<KnnLocalizer>(train, knn_k);
  } else if (baseline == "dnn" || baseline == "advdnn") {
    auto dnn = std::make_unique<DnnLocalizer>(d.n_aps(), d.n_classes(), seed, baseline);
    DnnTrainConfig tc;
    tc.epochs = dnn_epochs;
    tc.seed = seed;
    tc.fgsm_augment = baseline == "advdnn";
    dnn->train(train, tc);
    victim = std::move(dnn);
  } else {
    throw std::runtime_error("pass --model <ckpt> or --baseline knn|dnn|advdnn");
  }

  std::unique_ptr<Localizer> surrogate;
  if (!surrogate_spec.empty()) {
    if (surrogate_spec == "dnn") {
      auto dnn = std::make_unique<DnnLocalizer>(d.n_aps(), d.n_classes(), seed ^ 0x5A5AULL,
                                                "dnn-surrogate");
      DnnTrainConfig tc;
      tc.epochs = dnn_epochs;
      tc.seed = seed ^ 0x5A5AULL;
      dnn->train(train, tc);
      surrogate = std::move(dnn);
    } else {
      surrogate = std::make_unique<CallocLocalizer>(load_model_for(surrogate_spec, d),
                                                    "calloc-surrogate");
    }
  }

  GridSpec spec;
  spec.eps_list = parse_axis(eps_arg);
  spec.phi_list = parse_axis(phi_arg);
  spec.kinds.clear();
  for (const std::string& k : split_commas(kinds_arg)) {
    spec.kinds.push_back(attack_kind_from_string(k));
  }
  spec.mode = attack_mode_from_string(mode);
  spec.targeting = targeting_from_string(target);
  spec.steps = steps;
  spec.alpha = alpha;
  spec.mu = mu;
  spec.seed = seed;
  spec.per_sample = per_sample;
  spec.mask_per_row = mask_per_row;
  if (devices_arg == "all") {
    spec.devices = d.devices;
  } else if (!devices_arg.empty()) {
    spec.devices = split_commas(devices_arg);
  } else {
    spec.devices = {d.designated_device};
  }

  std::vector<GridDataset> buildings{{d.name, &d}};
  std::vector<CellResult> cells = run_grid(*victim, surrogate.get(), buildings, spec);

  if (!out_csv.empty()) write_report_csv(out_csv, cells);
  if (!out_json.empty()) write_report_json(out_json, cells, spec);

  for (AttackKind k : spec.kinds) {
    for (const std::string& dev : spec.devices) {
      std::cout << format_report_table(cells, to_string(k), d.name, dev);
    }
  }
  std::cout << cells.size() << " cells";
  if (!out_csv.empty()) std::cout << ", csv: " << out_csv;
  if (!out_json.empty()) std::cout << ", json: " << out_json;
  std::cout << "\n";
  return 0;
}

int cmd_report(const std::string& in_json, const std::string& attack, const std::string& building,
               const std::string& device, const std::string& metric) {
  std::vector<CellResult> cells = load_report_json(in_json);
  if (cells.empty()) throw std::runtime_error("report " + in_json + " has no cells");

  std::vector<std::string> attacks, buildings, devices;
  for (const CellResult& c : cells) {
    if (std::find(attacks.begin(), attacks.end(), c.attack) == attacks.end())
      attacks.push_back(c.attack);
    if (std::find(buildings.begin(), buildings.end(), c.building) == buildings.end())
      buildings.push_back(c.building);
    if (std::find(devices.begin(), devices.end(), c.device) == devices.end())
      devices.push_back(c.device);
  }
  auto want = [](const std::string& filter, const std::string& v) {
    return filter.empty() || filter == v;
  };
  for (const std::string& a : attacks) {
    for (const std::string& b : buildings) {
      for (const std::string& dev : devices) {
        if (want(attack, a) && want(building, b) && want(device, dev)) {
          std::cout << format_report_table(cells, a, b, dev, metric);
        }
      }
    }
  }
  return 0;
}

int cmd_gradcheck(uint64_t seed, int coords, int aps, double path_m) {
  SyntheticBuildingConfig bc;
  bc.n_aps = aps;
  bc.path_length_m = path_m;
  bc.rng_seed = seed;
  bc.name = "gradcheck";
  FloorplanDataset d = generate_synthetic_building(bc, default_device_profiles());
  LabeledMatrix train = normalized_train(d);

  ModelDims dims;
  dims.n_in = d.n_aps();
  dims.n_classes = d.n_classes();
  CallocModel model = CallocModel::init(dims, seed);
  model.rebuild_anchor_memory(train);

  // A small batch with distinct clean sources exercises both loss terms.
  const int batch = std::min(8, train.x.rows);
  Tensor x_in(batch, train.x.cols);
  Tensor x_clean(batch, train.x.cols);
  std::vector<int> labels(static_cast<size_t>(batch));
  RngStream jitter(seed + 1);
  for (int r = 0; r < batch; ++r) {
    int src = static_cast<int>(jitter.next_below(static_cast<uint64_t>(train.x.rows)));
    std::copy_n(train.x.row_ptr(src), train.x.cols, x_clean.row_ptr(r));
    for (int c = 0; c < train.x.cols; ++c) {
      float noise = static_cast<float>(jitter.next_normal()) * 0.05f;
      x_in.at(r, c) = std::min(std::max(x_clean.at(r, c) + noise, 0.0f), 1.0f);
    }
    labels[static_cast<size_t>(r)] = train.labels[static_cast<size_t>(src)];
  }

  GradCheckConfig cfg;
  cfg.n_coords = coords;
  cfg.seed = seed;
  GradCheckReport report = gradcheck_model(model, x_in, x_clean, labels, cfg);
  std::cout << format_gradcheck_report(report);
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curriculum-adversarial RSS localization toolkit"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic building dataset");
  int gen_preset = 0, gen_aps = 78;
  double gen_path = 88.0, gen_eta = 3.0, gen_p0 = -30.0, gen_sigma = 4.0;
  uint64_t gen_seed = 0;
  std::string gen_out, gen_name;
  gen->add_option("--preset", gen_preset, "building preset 1..5 (sets --aps/--path)");
  gen->add_option("--aps", gen_aps, "number of access points");
  gen->add_option("--path", gen_path, "corridor path length in meters");
  gen->add_option("--eta", gen_eta, "path loss exponent");
  gen->add_option("--p0", gen_p0, "reference power at 1 m, dBm");
  gen->add_option("--sigma", gen_sigma, "shadowing sigma, dB");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--name", gen_name, "dataset name override");
  gen->add_option("--out", gen_out, "output dataset directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train the curriculum model");
  std::string train_data, train_config, train_out, train_log;
  bool train_nc = false;
  uint64_t train_seed = 0;
  train->add_option("--data", train_data, "dataset dir, manifest, or csv")->required();
  train->add_option("--config", train_config, "trainer key=value config file");
  train->add_flag("--no-curriculum", train_nc, "single clean lesson (NC ablation)");
  auto* train_seed_opt = train->add_option("--seed", train_seed, "training seed");
  train->add_option("--out", train_out, "output checkpoint path")->required();
  train->add_option("--log", train_log, "per-epoch jsonl log path");

  // attack
  auto* attack = app.add_subcommand("attack", "craft an adversarial copy of the test split");
  std::string atk_data, atk_ckpt, atk_kind = "fgsm", atk_mode = "manip", atk_target = "random",
              atk_out;
  float atk_eps = 0.1f, atk_phi = 100.0f, atk_alpha = 0.0f, atk_mu = 1.0f;
  int atk_steps = 10;
  uint64_t atk_seed = 0;
  attack->add_option("--in", atk_data, "dataset dir, manifest, or csv")->required();
  attack->add_option("--model", atk_ckpt, "victim checkpoint")->required();
  attack->add_option("--kind", atk_kind, "fgsm|pgd|mim");
  attack->add_option("--eps", atk_eps, "l-inf budget in normalized units");
  attack->add_option("--phi", atk_phi, "percent of APs targeted");
  attack->add_option("--mode", atk_mode, "manip|spoof");
  attack->add_option("--steps", atk_steps, "iterations (pgd/mim)");
  attack->add_option("--alpha", atk_alpha, "step size (default eps/4)");
  attack->add_option("--mu", atk_mu, "momentum decay (mim)");
  attack->add_option("--target", atk_target, "random|strongest AP selection");
  attack->add_option("--seed", atk_seed, "mask selection seed");
  attack->add_option("--out", atk_out, "output csv path")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "run an eps x phi attack grid");
  std::string ev_data, ev_ckpt, ev_baseline, ev_surrogate, ev_kinds = "fgsm",
              ev_eps = "0.1:0.5:0.1", ev_phi = "10:100:10", ev_mode = "manip",
              ev_target = "random", ev_devices, ev_out_csv, ev_out_json;
  int ev_steps = 10, ev_k = 3, ev_dnn_epochs = 120;
  float ev_alpha = 0.0f, ev_mu = 1.0f;
  uint64_t ev_seed = 0;
  bool ev_per_sample = false, ev_mask_per_row = false;
  eval->add_option("--data", ev_data, "dataset dir, manifest, or csv")->required();
  eval->add_option("--model", ev_ckpt, "checkpoint of the victim");
  eval->add_option("--baseline", ev_baseline, "knn|dnn|advdnn victim instead of --model");
  eval->add_option("--surrogate", ev_surrogate, "ckpt path or 'dnn'; crafts for gradient-free victims");
  eval->add_option("--attack", ev_kinds, "comma list of fgsm,pgd,mim");
  eval->add_option("--eps", ev_eps, "axis: a:b:step or comma list");
  eval->add_option("--phi", ev_phi, "axis: a:b:step or comma list");
  eval->add_option("--mode", ev_mode, "manip|spoof");
  eval->add_option("--steps", ev_steps, "iterations (pgd/mim)");
  eval->add_option("--alpha", ev_alpha, "step size (default eps/4)");
  eval->add_option("--mu", ev_mu, "momentum decay (mim)");
  eval->add_option("--target", ev_target, "random|strongest AP selection");
  eval->add_option("--devices", ev_devices, "comma list or 'all' (default: designated device)");
  eval->add_option("--k", ev_k, "k for the knn baseline");
  eval->add_option("--dnn-epochs", ev_dnn_epochs, "epochs for dnn/advdnn baselines");
  eval->add_option("--seed", ev_seed, "grid seed");
  eval->add_flag("--per-sample", ev_per_sample, "keep per-sample errors in the json report");
  eval->add_flag("--mask-per-row", ev_mask_per_row, "fresh AP mask per test row");
  eval->add_option("--out-csv", ev_out_csv, "report csv path");
  eval->add_option("--out-json", ev_out_json, "report json path");

  // report
  auto* report = app.add_subcommand("report", "print eps x phi tables from a json report");
  std::string rp_in, rp_attack, rp_building, rp_device, rp_metric = "mean_m";
  report->add_option("--in", rp_in, "report json path")->required();
  report->add_option("--attack", rp_attack, "filter by attack kind");
  report->add_option("--building", rp_building, "filter by building");
  report->add_option("--device", rp_device, "filter by device");
  report->add_option("--metric", rp_metric, "mean_m|median_m|p95_m|max_m|clean_mean_m");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "analytic vs numerical gradients");
  uint64_t gc_seed = 7;
  int gc_coords = 150, gc_aps = 40;
  double gc_path = 30.0;
  gradcheck->add_option("--seed", gc_seed, "model init + sampling seed");
  gradcheck->add_option("--coords", gc_coords, "number of sampled coordinates");
  gradcheck->add_option("--aps", gc_aps, "APs of the probe building");
  gradcheck->add_option("--path", gc_path, "path length of the probe building");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen(gen_preset, gen_aps, gen_path, gen_seed, gen_out, gen_name, gen_eta, gen_p0,
                     gen_sigma);
    }
    if (train->parsed()) {
      return cmd_train(train_data, train_config, train_nc, train_seed,
                       train_seed_opt->count() > 0, train_out, train_log);
    }
    if (attack->parsed()) {
      return cmd_attack(atk_data, atk_ckpt, atk_kind, atk_eps, atk_phi, atk_mode, atk_steps,
                        atk_alpha, atk_mu, atk_target, atk_seed, atk_out);
    }
    if (eval->parsed()) {
      return cmd_eval(ev_data, ev_ckpt, ev_baseline, ev_surrogate, ev_kinds, ev_eps, ev_phi,
                      ev_mode, ev_steps, ev_alpha, ev_mu, ev_target, ev_devices, ev_k,
                      ev_dnn_epochs, ev_seed, ev_per_sample, ev_mask_per_row, ev_out_csv,
                      ev_out_json);
    }
    if (report->parsed()) {
      return cmd_report(rp_in, rp_attack, rp_building, rp_device, rp_metric);
    }
    if (gradcheck->parsed()) {
      return cmd_gradcheck(gc_seed, gc_coords, gc_aps, gc_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << app.help() << "\n";
  return 2;
}
