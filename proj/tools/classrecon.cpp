// classrecon: command-line front end for training, attacks and reports.

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "classrecon/config.hpp"
#include "classrecon/errors.hpp"
#include "classrecon/image_io.hpp"
#include "classrecon/pipeline.hpp"
#include "classrecon/synthetic_faces.hpp"

namespace fs = std::filesystem;
using namespace classrecon;

namespace {

struct Globals {
  std::string config_file;
  std::optional<uint64_t> seed;
  std::string out_root;
  std::vector<std::string> overrides;       // --set key=value
  std::vector<std::string> flag_overrides;  // from subcommand flags, applied last
};

ExperimentConfig resolve(const Globals& g) {
  ExperimentConfig cfg = g.config_file.empty() ? ExperimentConfig{} : load_config(g.config_file);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out_root.empty()) cfg.out_root = g.out_root;
  std::vector<std::string> all = g.overrides;
  all.insert(all.end(), g.flag_overrides.begin(), g.flag_overrides.end());
  for (const auto& kv : all) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.sync_sides();
  cfg.validate();
  torch::set_num_threads(static_cast<int>(cfg.threads));
  return cfg;
}

struct Prepared {
  FaceDataset dataset;  // at the working resolution
  AttackScenario scenario;
  SeedMap seeds;
};

Prepared prepare(const ExperimentConfig& cfg) {
  Prepared p;
  p.seeds = seed_everything(cfg.seed);
  const FaceDataset full = load_experiment_data(cfg);
  p.scenario = make_scenario(full, p.seeds.at("scenario"));
  p.dataset = downsample(full, cfg.image_size);
  return p;
}

int64_t person_to_class(int64_t person) {
  if (person < 1 || person > kCanonicalClasses) throw ConfigError("person ids run from 1 to 40");
  return person - 1;
}

uint64_t attack_seed(const SeedMap& seeds, AttackMethod method, int64_t target) {
  return derive_seed(seeds.at("attack." + to_string(method)), static_cast<uint64_t>(target));
}

void finish_attack(AttackResult r, const SeedMap& seeds, const fs::path& out_dir) {
  r.seeds["master"] = seeds.at("master");
  write_attack_artifacts(r, out_dir);
  std::cout << to_string(r.method) << " person " << r.target + 1 << ": attacked confidence " << std::setprecision(6)
            << r.attacked_confidence << ", final loss " << r.loss_trace.back() << ", " << r.iterations_run
            << " iterations";
  if (auto it = r.info.find("stop_reason"); it != r.info.end()) std::cout << " (" << it->second << ")";
  std::cout << "\n  -> " << out_dir.string() << "\n";
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("not a number: '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class reconstruction attacks against face classifiers"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_file, "Experiment config (key = value per line)");
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out-root", g.out_root, "Root directory for pipeline runs");
  app.add_option("--set", g.overrides, "Override one config key, key=value (repeatable)");

  std::function<void()> action;
  // Subcommand flag that sets one config key.
  auto bind = [&g](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(
        flag, [&g, key](const std::string& v) { g.flag_overrides.push_back(key + "=" + v); },
        help.empty() ? "Sets " + key : help);
  };

  // make-faces
  auto* faces = app.add_subcommand("make-faces", "Write the synthetic 40x10 face set");
  std::string faces_out;
  bool faces_packed = false;
  uint64_t faces_seed = 2023;
  faces->add_option("--out", faces_out, "Output directory (or file with --packed)")->required();
  faces->add_flag("--packed", faces_packed, "Write one float32 file plus a .labels sidecar");
  faces->add_option("--synthetic-seed", faces_seed, "Identity/view generator seed");
  faces->callback([&] {
    action = [&] {
      SyntheticFaceOptions opts;
      opts.seed = faces_seed;
      const FaceDataset ds = make_synthetic_faces(opts);
      if (faces_packed) {
        save_dataset_packed(ds, faces_out);
      } else {
        save_dataset_pgm(ds, faces_out);
      }
      std::cout << "wrote " << ds.size() << " faces to " << faces_out << "\n";
    };
  });

  // train-classifier
  auto* tc = app.add_subcommand("train-classifier", "Train cnn2 or vgg11 on the 7/3 split");
  std::string tc_arch = "cnn2", tc_out;
  tc->add_option("--arch", tc_arch, "cnn2 or vgg11")->check(CLI::IsMember({"cnn2", "vgg11"}));
  bind(tc, "--data", "data", "");
  tc->add_option("--out", tc_out, "Checkpoint file")->required();
  tc->callback([&] {
    action = [&] {
      const auto cfg = resolve(g);
      const auto p = prepare(cfg);
      const auto arch = parse_arch(tc_arch);
      const auto trained = train_classifier(cfg.spec_for(arch), subset(p.dataset, p.scenario.train_flat()),
                                            subset(p.dataset, p.scenario.val_flat()), p.seeds.at(tc_arch));
      save_checkpoint(trained.checkpoint, tc_out);
      const auto& m = trained.metrics;
      std::cout << tc_arch << ": epoch " << m.selected_epoch << " selected, train top-1 " << m.selected_train_top1
                << ", val top-1 " << m.selected_val_top1 << "\n";
    };
  });

  // train-diffusion
  auto* td = app.add_subcommand("train-diffusion", "Train the noise predictor on the visible pool");
  std::string td_out;
  bind(td, "--data", "data", "");
  bind(td, "--steps", "diffusion.steps", "");
  bind(td, "--beta-start", "diffusion.beta_start", "");
  bind(td, "--beta-end", "diffusion.beta_end", "");
  td->add_option("--out", td_out, "Checkpoint file")->required();
  td->callback([&] {
    action = [&] {
      const auto cfg = resolve(g);
      const auto p = prepare(cfg);
      const auto sched = build_schedule(cfg.diffusion_steps, cfg.diffusion.beta_start, cfg.diffusion.beta_end);
      const auto trained = train_diffusion(visible_pool(p.dataset, p.scenario), sched, cfg.diffusion,
                                           p.seeds.at("diffusion"));
      save_checkpoint(trained.predictor.checkpoint, td_out);
      std::cout << "final noise MSE " << trained.loss_trace.back() << "\n";
    };
  });

  // sample
  auto* sm = app.add_subcommand("sample", "Sample one image along a seeded noise path");
  std::string sm_ckpt, sm_out;
  uint64_t sm_path_seed = 0;
  std::optional<uint64_t> sm_fresh;
  sm->add_option("--diffusion", sm_ckpt, "Noise predictor checkpoint")->required();
  sm->add_option("--path-seed", sm_path_seed, "Seed of x_T and the z's");
  sm->add_option("--fresh-z", sm_fresh, "Keep x_T but redraw the z's from this seed");
  sm->add_option("--out", sm_out, "Output PGM")->required();
  sm->callback([&] {
    action = [&] {
      resolve(g);
      const auto predictor = restore_predictor(load_checkpoint(sm_ckpt));
      const int64_t side = predictor.checkpoint.meta_int("side");
      NoisePath path = make_noise_path(sm_path_seed, side, predictor.schedule.steps());
      if (sm_fresh) path = with_fresh_injections(path, *sm_fresh);
      const auto image = sample(*predictor.net, predictor.schedule, path);
      write_pgm(sm_out, to_gray(image[0]));
      write_f32(fs::path(sm_out).replace_extension(".f32"), image[0]);
      std::cout << "sample checksum " << image_checksum(image) << "\n";
    };
  });

  // attack-diffusion
  auto* ad = app.add_subcommand("attack-diffusion", "Optimize x_T of a fixed denoising path");
  std::string ad_clf, ad_diff, ad_out;
  int64_t ad_target = 8;
  ad->add_option("--classifier", ad_clf, "Attacked classifier checkpoint")->required();
  ad->add_option("--diffusion", ad_diff, "Noise predictor checkpoint")->required();
  ad->add_option("--target", ad_target, "Target person (1-based)");
  bind(ad, "--lr", "attack.diffusion.lr", "");
  bind(ad, "--iters", "attack.diffusion.max_iters", "");
  bind(ad, "--grad-mode", "attack.diffusion.grad_mode", "full or checkpointed:<n>");
  bind(ad, "--plateau-window", "attack.diffusion.plateau_window", "");
  ad->add_flag("--optimize-z", [&](int64_t) { g.flag_overrides.push_back("attack.diffusion.optimize_z=true"); });
  ad->add_option("--out-dir", ad_out, "Result directory")->required();
  ad->callback([&] {
    action = [&] {
      const auto cfg = resolve(g);
      const auto seeds = seed_everything(cfg.seed);
      const auto clf = LoadedClassifier::from(load_checkpoint(ad_clf));
      const auto predictor = restore_predictor(load_checkpoint(ad_diff));
      PathAttackConfig c = cfg.attack_diffusion;
      c.target = person_to_class(ad_target);
      const auto path = make_noise_path(attack_seed(seeds, AttackMethod::diffusion, c.target),
                                        predictor.checkpoint.meta_int("side"), predictor.schedule.steps());
      finish_attack(attack(clf, predictor, path, c), seeds, ad_out);
    };
  });

  // lr-study
  auto* ls = app.add_subcommand("lr-study", "Rerun the diffusion attack per learning rate on one path");
  std::string ls_clf, ls_diff, ls_out, ls_lrs = "1,10";
  int64_t ls_target = 8;
  ls->add_option("--classifier", ls_clf, "Attacked classifier checkpoint")->required();
  ls->add_option("--diffusion", ls_diff, "Noise predictor checkpoint")->required();
  ls->add_option("--target", ls_target, "Target person (1-based)");
  ls->add_option("--lrs", ls_lrs, "Comma-separated learning rates");
  bind(ls, "--iters", "attack.diffusion.max_iters", "");
  ls->add_option("--out-dir", ls_out, "Report directory")->required();
  ls->callback([&] {
    action = [&] {
      const auto cfg = resolve(g);
      const auto seeds = seed_everything(cfg.seed);
      const auto clf = LoadedClassifier::from(load_checkpoint(ls_clf));
      const auto predictor = restore_predictor(load_checkpoint(ls_diff));
      PathAttackConfig c = cfg.attack_diffusion;
      c.target = person_to_class(ls_target);
      const auto path = make_noise_path(attack_seed(seeds, AttackMethod::diffusion, c.target),
                                        predictor.checkpoint.meta_int("side"), predictor.schedule.steps());
      const auto lrs = parse_doubles(ls_lrs);
      const auto report = lr_study(clf, predictor, path, c, lrs);
      write_lr_study(report, ls_out);
      for (const auto& row : report.rows) {
        std::cout << "lr " << row.lr << ": final loss " << row.final_loss << ", plateau at "
                  << row.iterations_to_plateau << ", " << (row.converged ? "converged" : "not converged") << "\n";
      }
    };
  });

  // attack-gan
  auto* ag = app.add_subcommand("attack-gan", "Train a generator against the classifier and a discriminator");
  std::string ag_clf, ag_out;
  int64_t ag_target = 8;
  ag->add_option("--classifier", ag_clf, "Attacked classifier checkpoint")->required();
  bind(ag, "--data", "data", "");
  ag->add_option("--target", ag_target, "Target person (1-based)");
  bind(ag, "--alpha", "attack.gan.alpha", "");
  bind(ag, "--rounds", "attack.gan.rounds", "");
  ag->add_flag("--reinit-discriminator",
               [&](int64_t) { g.flag_overrides.push_back("attack.gan.reinit_discriminator=true"); });
  ag->add_option("--out-dir", ag_out, "Result directory")->required();
  ag->callback([&] {
    action = [&] {
      const auto cfg = resolve(g);
      const auto p = prepare(cfg);
      const auto clf = LoadedClassifier::from(load_checkpoint(ag_clf));
      GanAttackConfig c = cfg.attack_gan;
      c.target = person_to_class(ag_target);
      c.seed = attack_seed(p.seeds, AttackMethod::gan, c.target);
      finish_attack(train_attack_gan(clf, visible_pool(p.dataset, p.scenario), c).result, p.seeds, ag_out);
    };
  });

  // train-vae
  auto* tv = app.add_subcommand("train-vae", "Train the VAE on the visible pool");
  std::string tv_out;
  bind(tv, "--data", "data", "");
  tv->add_option("--out", tv_out, "Checkpoint file")->required();
  tv->callback([&] {
    action = [&] {
      const auto cfg = resolve(g);
      const auto p = prepare(cfg);
      const auto trained = train_vae(visible_pool(p.dataset, p.scenario), cfg.vae, p.seeds.at("vae"));
      save_checkpoint(trained.checkpoint, tv_out);
      std::cout << "final loss " << trained.loss_trace.back() << ", recon MSE " << trained.recon_trace.back()
                << ", KL " << trained.kl_trace.back() << "\n";
    };
  });

  // attack-vae
  auto* av = app.add_subcommand("attack-vae", "Optimize a VAE latent code against the classifier");
  std::string av_vae, av_clf, av_out;
  int64_t av_target = 8;
  av->add_option("--vae", av_vae, "VAE checkpoint")->required();
  av->add_option("--classifier", av_clf, "Attacked classifier checkpoint")->required();
  bind(av, "--data", "data", "");
  av->add_option("--target", av_target, "Target person (1-based)");
  bind(av, "--init", "attack.vae.init", "pool or prior");
  av->add_option("--out-dir", av_out, "Result directory")->required();
  av->callback([&] {
    action = [&] {
      const auto cfg = resolve(g);
      const auto p = prepare(cfg);
      const auto vae = restore_vae(load_checkpoint(av_vae));
      const auto clf = LoadedClassifier::from(load_checkpoint(av_clf));
      LatentAttackConfig c = cfg.attack_vae;
      c.target = person_to_class(av_target);
      c.seed = attack_seed(p.seeds, AttackMethod::vae, c.target);
      finish_attack(latent_attack(*vae, clf, visible_pool(p.dataset, p.scenario), c), p.seeds, av_out);
    };
  });

  // attack-pixel
  auto* ap = app.add_subcommand("attack-pixel", "Pixel-space adversarial noise baseline");
  std::string ap_clf, ap_out;
  int64_t ap_target = 8;
  ap->add_option("--classifier", ap_clf, "Attacked classifier checkpoint")->required();
  ap->add_option("--target", ap_target, "Target person (1-based)");
  bind(ap, "--iters", "attack.pixel.iters", "");
  bind(ap, "--step", "attack.pixel.step", "");
  ap->add_option("--out-dir", ap_out, "Result directory")->required();
  ap->callback([&] {
    action = [&] {
      const auto cfg = resolve(g);
      const auto seeds = seed_everything(cfg.seed);
      const auto ckpt = load_checkpoint(ap_clf);
      const auto clf = LoadedClassifier::from(ckpt);
      PixelAttackConfig c = cfg.attack_pixel;
      c.target = person_to_class(ap_target);
      c.seed = attack_seed(seeds, AttackMethod::pixel, c.target);
      finish_attack(pixel_space_attack(clf, ckpt.meta_int("side"), c), seeds, ap_out);
    };
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score attack results with the evaluation classifier");
  ev->alias("report");
  std::string ev_clf, ev_out;
  std::vector<std::string> ev_results;
  ev->add_option("--classifier", ev_clf, "Evaluation classifier checkpoint")->required();
  ev->add_option("--results", ev_results, "Attack result directories")->required();
  ev->add_option("--out-dir", ev_out, "Report directory")->required();
  ev->callback([&] {
    action = [&] {
      resolve(g);
      const auto eval = LoadedClassifier::from(load_checkpoint(ev_clf));
      std::vector<ReportInput> inputs;
      for (const auto& dir : ev_results) inputs.push_back({read_attack_artifacts(dir), dir});
      const auto report = build_report(inputs, eval);
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
      write_report(report, ev_out);
      std::cout << report.table();
    };
  });

  // run
  auto* rn = app.add_subcommand("run", "Run pipeline stages inside one run directory");
  std::string rn_stages = "all", rn_id;
  rn->add_option("--stages", rn_stages, "all, or any of data,classifiers,diffusion,vae,attacks,eval");
  rn->add_option("--run-id", rn_id, "Continue (or name) a run instead of creating a timestamped one");
  rn->callback([&] {
    action = [&] {
      const auto cfg = resolve(g);
      PipelineOptions opts{rn_id, &std::cerr};
      const auto outcome = run_pipeline(cfg, parse_stages(rn_stages, cfg), opts);
      std::cout << outcome.run_dir.string() << "\n";
    };
  });

  // replay
  auto* rp = app.add_subcommand("replay", "Rerun a recorded run from its manifest");
  std::string rp_dir;
  rp->add_option("--run", rp_dir, "Run directory to replay")->required();
  rp->callback([&] {
    action = [&] {
      PipelineOptions opts{"", &std::cerr};
      const auto outcome = replay_run(rp_dir, opts);
      const fs::path a = fs::path(rp_dir) / "reports/table.csv", b = outcome.run_dir / "reports/table.csv";
      std::cout << outcome.run_dir.string() << "\n";
      if (fs::exists(a) && fs::exists(b)) {
        const bool same = sha256_file(a) == sha256_file(b);
        std::cout << "report " << (same ? "identical" : "DIFFERS") << "\n";
        if (!same) throw NumericalError("replayed report differs from the original");
      }
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    action();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const PrerequisiteError& e) {
    std::cerr << "missing prerequisite: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const c10::Error& e) {
    std::cerr << "config error: " << e.what_without_backtrace() << "\n";
    return 2;
  }
}
