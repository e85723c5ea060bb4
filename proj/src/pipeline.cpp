#include "classrecon/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "classrecon/errors.hpp"
#include "classrecon/synthetic_faces.hpp"

namespace fs = std::filesystem;

namespace classrecon {
namespace {

constexpr Stage kAllStages[] = {Stage::data, Stage::classifiers, Stage::diffusion, Stage::vae, Stage::attacks,
                                Stage::eval};

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw PrerequisiteError("cannot read " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& file, const std::string& text) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  out << text;
  if (!out) throw ConfigError("cannot write " + file.string());
}

std::string trace_csv(const std::string& header, const std::vector<std::vector<double>>& columns) {
  std::ostringstream out;
  out << header << "\n" << std::setprecision(9);
  const size_t rows = columns.empty() ? 0 : columns.front().size();
  for (size_t i = 0; i < rows; ++i) {
    out << i + 1;
    for (const auto& c : columns) out << "," << c[i];
    out << "\n";
  }
  return out.str();
}

std::vector<Stage> dependencies(Stage stage, const ExperimentConfig& cfg) {
  auto uses = [&](AttackMethod m) { return std::ranges::find(cfg.methods, m) != cfg.methods.end(); };
  switch (stage) {
    case Stage::data:
      return {};
    case Stage::classifiers:
    case Stage::diffusion:
    case Stage::vae:
      return {Stage::data};
    case Stage::attacks: {
      std::vector<Stage> deps = {Stage::data, Stage::classifiers};
      if (uses(AttackMethod::diffusion)) deps.push_back(Stage::diffusion);
      if (uses(AttackMethod::vae)) deps.push_back(Stage::vae);
      return deps;
    }
    case Stage::eval:
      return {Stage::data, Stage::classifiers, Stage::attacks};
  }
  return {};
}

int stage_rank(Stage s) {
  return static_cast<int>(std::ranges::find(kAllStages, s) - std::begin(kAllStages));
}

class Runner {
 public:
  Runner(const ExperimentConfig& cfg, ArtifactStore& store, const SeedMap& seeds, std::ostream* log)
      : cfg_(cfg), store_(store), seeds_(seeds), log_(log) {}

  void run(Stage stage, PipelineOutcome& outcome) {
    const auto start = std::chrono::steady_clock::now();
    say("stage " + to_string(stage) + " ...");
    switch (stage) {
      case Stage::data: data_stage(); break;
      case Stage::classifiers: classifiers_stage(); break;
      case Stage::diffusion: diffusion_stage(); break;
      case Stage::vae: vae_stage(); break;
      case Stage::attacks: attacks_stage(); break;
      case Stage::eval: outcome.report = eval_stage(); break;
    }
    store_.mark_stage(stage);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream msg;
    msg << "stage " << to_string(stage) << " done in " << std::fixed << std::setprecision(1) << secs << "s";
    say(msg.str());
  }

 private:
  void say(const std::string& line) {
    if (log_) *log_ << "[" << store_.run_id() << "] " << line << std::endl;
  }

  void save(const ModelCheckpoint& ckpt, const std::string& rel) {
    save_checkpoint(ckpt, store_.path(rel));
    store_.record(rel);
  }

  void text(const std::string& rel, const std::string& content) {
    write_text(store_.path(rel), content);
    store_.record(rel);
  }

  const FaceDataset& dataset() {
    if (!dataset_) dataset_ = downsample(load_dataset(store_.path("data/faces.f32")), cfg_.image_size);
    return *dataset_;
  }

  const AttackScenario& scenario() {
    if (!scenario_) scenario_ = load_scenario(store_.path("data/scenario.txt"));
    return *scenario_;
  }

  const FaceDataset& pool() {
    if (!pool_) pool_ = visible_pool(dataset(), scenario());
    return *pool_;
  }

  ModelCheckpoint checkpoint(const std::string& rel) {
    const auto file = store_.path(rel);
    if (!fs::exists(file)) throw PrerequisiteError("missing artifact " + rel + " in run " + store_.run_id());
    return load_checkpoint(file);
  }

  static std::string classifier_file(ClassifierArch arch) { return "checkpoints/" + to_string(arch) + ".ckpt"; }

  void data_stage() {
    const FaceDataset ds = load_experiment_data(cfg_);
    const AttackScenario sc = make_scenario(ds, seeds_.at("scenario"));
    save_dataset_packed(ds, store_.path("data/faces.f32"));
    store_.record("data/faces.f32");
    store_.record("data/faces.f32.labels");
    save_scenario(sc, store_.path("data/scenario.txt"));
    store_.record("data/scenario.txt");
    say("data: " + std::to_string(ds.size()) + " images, " + std::to_string(ds.num_classes) + " classes");
  }

  void classifiers_stage() {
    const FaceDataset train = subset(dataset(), scenario().train_flat());
    const FaceDataset val = subset(dataset(), scenario().val_flat());
    std::string summary = "arch,selected_epoch,epochs_run,train_top1,val_top1\n";
    for (ClassifierArch arch : {ClassifierArch::cnn2, ClassifierArch::vgg11}) {
      const auto trained = train_classifier(cfg_.spec_for(arch), train, val, seeds_.at(to_string(arch)));
      const auto& m = trained.metrics;
      save(trained.checkpoint, classifier_file(arch));
      text("reports/" + to_string(arch) + "_training.csv",
           trace_csv("epoch,train_loss,train_top1,val_top1", {m.train_loss, m.train_top1, m.val_top1}));
      std::ostringstream row;
      row << to_string(arch) << "," << m.selected_epoch << "," << m.train_loss.size() << "," << std::setprecision(9)
          << m.selected_train_top1 << "," << m.selected_val_top1 << "\n";
      summary += row.str();
      say(to_string(arch) + ": selected epoch " + std::to_string(m.selected_epoch) + ", train top-1 " +
          std::to_string(m.selected_train_top1) + ", val top-1 " + std::to_string(m.selected_val_top1));
    }
    text("reports/classifiers.csv", summary);
  }

  void diffusion_stage() {
    const auto sched = build_schedule(cfg_.diffusion_steps, cfg_.diffusion.beta_start, cfg_.diffusion.beta_end);
    const auto trained = train_diffusion(pool(), sched, cfg_.diffusion, seeds_.at("diffusion"));
    save(trained.predictor.checkpoint, "checkpoints/diffusion.ckpt");
    text("reports/diffusion_loss.csv", trace_csv("iteration,mse", {trained.loss_trace}));
    say("diffusion: final loss " + std::to_string(trained.loss_trace.back()));
  }

  void vae_stage() {
    const auto trained = train_vae(pool(), cfg_.vae, seeds_.at("vae"));
    save(trained.checkpoint, "checkpoints/vae.ckpt");
    text("reports/vae_loss.csv",
         trace_csv("epoch,loss,recon_mse,kl", {trained.loss_trace, trained.recon_trace, trained.kl_trace}));
    say("vae: final loss " + std::to_string(trained.loss_trace.back()));
  }

  void attacks_stage() {
    const auto attacked = LoadedClassifier::from(checkpoint(classifier_file(cfg_.attacked)));
    std::optional<NoisePredictor> predictor;
    std::shared_ptr<VaeNet> vae;
    for (AttackMethod method : cfg_.methods) {
      if (method == AttackMethod::diffusion) predictor = restore_predictor(checkpoint("checkpoints/diffusion.ckpt"));
      if (method == AttackMethod::vae) vae = restore_vae(checkpoint("checkpoints/vae.ckpt"));
    }
    for (int64_t target : cfg_.targets) {
      for (AttackMethod method : cfg_.methods) {
        const uint64_t seed = derive_seed(seeds_.at("attack." + to_string(method)), static_cast<uint64_t>(target));
        AttackResult r;
        switch (method) {
          case AttackMethod::diffusion: {
            PathAttackConfig c = cfg_.attack_diffusion;
            c.target = target;
            const NoisePath path = make_noise_path(seed, cfg_.image_size, predictor->schedule.steps());
            r = attack(attacked, *predictor, path, c);
            break;
          }
          case AttackMethod::gan: {
            GanAttackConfig c = cfg_.attack_gan;
            c.target = target;
            c.seed = seed;
            r = train_attack_gan(attacked, pool(), c).result;
            break;
          }
          case AttackMethod::vae: {
            LatentAttackConfig c = cfg_.attack_vae;
            c.target = target;
            c.seed = seed;
            r = latent_attack(*vae, attacked, pool(), c);
            break;
          }
          case AttackMethod::pixel: {
            PixelAttackConfig c = cfg_.attack_pixel;
            c.target = target;
            c.seed = seed;
            r = pixel_space_attack(attacked, cfg_.image_size, c);
            break;
          }
        }
        r.seeds["master"] = seeds_.at("master");
        const std::string rel = result_dir(method, target);
        write_attack_artifacts(r, store_.path(rel));
        store_.record(rel);
        std::ostringstream msg;
        msg << to_string(method) << " person " << target + 1 << ": attacked confidence " << std::setprecision(4)
            << r.attacked_confidence << " after " << r.iterations_run << " iterations";
        say(msg.str());
      }
    }
  }

  EvaluationReport eval_stage() {
    const auto evaluator = LoadedClassifier::from(checkpoint(classifier_file(cfg_.evaluator)));
    std::vector<ReportInput> inputs;
    for (int64_t target : cfg_.targets) {
      for (AttackMethod method : cfg_.methods) {
        const std::string rel = result_dir(method, target);
        if (!fs::exists(store_.path(rel) / "run.txt")) {
          throw PrerequisiteError("eval needs " + rel + " from stage attacks, which is missing in run " +
                                  store_.run_id());
        }
        inputs.push_back({read_attack_artifacts(store_.path(rel)), rel});
      }
    }
    const EvaluationReport report = build_report(inputs, evaluator);
    for (const auto& w : report.warnings) say("warning: " + w);
    write_report(report, store_.path("reports"));
    store_.record("reports/table.csv");
    store_.record("reports/table.txt");

    // Figure layout: the target's own face, then one column per method.
    std::vector<AttackMethod> order;
    for (AttackMethod m : {AttackMethod::gan, AttackMethod::diffusion, AttackMethod::vae, AttackMethod::pixel}) {
      if (std::ranges::find(cfg_.methods, m) != cfg_.methods.end()) order.push_back(m);
    }
    std::vector<torch::Tensor> tiles;
    std::vector<std::string> labels;
    for (int64_t target : cfg_.targets) {
      const int64_t shown = scenario().val_index.at(static_cast<size_t>(target)).front();
      tiles.push_back(dataset().images[shown]);
      labels.push_back("P" + std::to_string(target + 1));
      for (AttackMethod m : order) {
        const auto* cell = report.find(target, m);
        tiles.push_back(read_attack_artifacts(store_.path(result_dir(m, target))).image);
        std::ostringstream l;
        l << to_string(m).substr(0, 3) << " " << std::fixed << std::setprecision(2) << cell->transfer_confidence;
        labels.push_back(l.str());
      }
    }
    export_grid(tiles, labels, static_cast<int64_t>(order.size()) + 1, store_.path("figures/grid.pgm"));
    store_.record("figures/grid.pgm");
    say("report:\n" + report.table());
    return report;
  }

  const ExperimentConfig& cfg_;
  ArtifactStore& store_;
  const SeedMap& seeds_;
  std::ostream* log_;
  std::optional<FaceDataset> dataset_;
  std::optional<AttackScenario> scenario_;
  std::optional<FaceDataset> pool_;
};

PipelineOutcome execute(const ExperimentConfig& cfg, const SeedMap& seeds, const std::vector<Stage>& requested,
                        const PipelineOptions& options) {
  cfg.validate();
  torch::set_num_threads(static_cast<int>(cfg.threads));

  const fs::path out_root = cfg.out_root;
  std::string run_id = options.run_id;
  const bool continuing = !run_id.empty() && fs::exists(out_root / "runs" / run_id);
  if (run_id.empty()) {
    run_id = make_run_id(cfg.seed);
    for (int n = 2; fs::exists(out_root / "runs" / run_id); ++n) run_id = make_run_id(cfg.seed) + "-" + std::to_string(n);
  }

  std::vector<Stage> stages = requested;
  std::ranges::sort(stages, {}, stage_rank);
  stages.erase(std::unique(stages.begin(), stages.end()), stages.end());

  std::optional<ArtifactStore> store;
  if (continuing) {
    store = ArtifactStore::open(out_root / "runs" / run_id);
    if (read_text(store->path("config.txt")) != cfg.snapshot()) {
      throw ConfigError("run " + run_id + " was created with a different config; start a new run instead");
    }
    for (Stage s : stages) {
      if (store->stage_done(s)) {
        throw ConfigError("run " + run_id + " already has stage " + to_string(s) + "; refusing to overwrite it");
      }
    }
  }
  auto available = [&](Stage s) {
    return std::ranges::find(stages, s) != stages.end() || (store && store->stage_done(s));
  };
  for (Stage s : stages) {
    for (Stage dep : dependencies(s, cfg)) {
      if (!available(dep)) {
        throw PrerequisiteError("stage " + to_string(s) + " needs stage " + to_string(dep) +
                                ", which is neither requested nor recorded in run " + run_id);
      }
    }
  }

  if (!store) {
    store = ArtifactStore::create(out_root, run_id);
    write_text(store->path("config.txt"), cfg.snapshot());
    store->record("config.txt");
    write_text(store->path("seeds.txt"), format_seed_map(seeds));
    store->record("seeds.txt");
  }

  PipelineOutcome outcome;
  outcome.run_dir = store->root();
  Runner runner(cfg, *store, seeds, options.log);
  for (Stage s : stages) {
    runner.run(s, outcome);
    outcome.ran.push_back(s);
  }
  return outcome;
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::data: return "data";
    case Stage::classifiers: return "classifiers";
    case Stage::diffusion: return "diffusion";
    case Stage::vae: return "vae";
    case Stage::attacks: return "attacks";
    case Stage::eval: return "eval";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  for (Stage s : kAllStages) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + name + "'");
}

std::vector<Stage> default_stages(const ExperimentConfig& cfg) {
  std::vector<Stage> out;
  for (Stage s : kAllStages) {
    const auto deps = dependencies(Stage::attacks, cfg);
    const bool needed = s == Stage::attacks || s == Stage::eval || std::ranges::find(deps, s) != deps.end();
    if (needed) out.push_back(s);
  }
  return out;
}

std::vector<Stage> parse_stages(const std::string& text, const ExperimentConfig& cfg) {
  if (text == "all") return default_stages(cfg);
  std::vector<Stage> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(parse_stage(item));
  }
  if (out.empty()) throw ConfigError("no stages given");
  return out;
}

ArtifactStore::ArtifactStore(fs::path root, std::string run_id) : root_(std::move(root)), run_id_(std::move(run_id)) {}

ArtifactStore ArtifactStore::create(const fs::path& out_root, const std::string& run_id) {
  if (run_id.empty() || run_id.find('/') != std::string::npos || run_id.starts_with(".")) {
    throw ConfigError("invalid run id '" + run_id + "'");
  }
  const fs::path root = out_root / "runs" / run_id;
  if (fs::exists(root)) throw ConfigError("run directory " + root.string() + " exists; refusing to overwrite");
  for (const char* sub : {"checkpoints", "results", "reports", "figures", "data"}) fs::create_directories(root / sub);
  ArtifactStore store(root, run_id);
  store.append("run " + run_id);
  return store;
}

ArtifactStore ArtifactStore::open(const fs::path& run_dir) {
  if (!fs::exists(run_dir / "manifest.txt")) throw PrerequisiteError("no run manifest in " + run_dir.string());
  return ArtifactStore(run_dir, run_dir.filename().string());
}

void ArtifactStore::append(const std::string& line) {
  std::ofstream out(root_ / "manifest.txt", std::ios::app);
  out << line << "\n";
  if (!out) throw ConfigError("cannot append to manifest of run " + run_id_);
}

void ArtifactStore::record(const std::string& relative) {
  const fs::path target = root_ / relative;
  if (!fs::exists(target)) throw ConfigError("cannot record missing artifact " + relative);
  std::vector<fs::path> files;
  if (fs::is_directory(target)) {
    for (const auto& e : fs::recursive_directory_iterator(target)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::ranges::sort(files);
  } else {
    files.push_back(target);
  }
  for (const auto& f : files) append("file " + sha256_file(f) + " " + fs::relative(f, root_).generic_string());
}

void ArtifactStore::mark_stage(Stage stage) { append("stage " + to_string(stage)); }

bool ArtifactStore::stage_done(Stage stage) const {
  return std::ranges::any_of(manifest(),
                             [&](const ManifestEntry& e) { return e.kind == "stage" && e.value == to_string(stage); });
}

std::vector<ManifestEntry> ArtifactStore::manifest() const {
  std::vector<ManifestEntry> out;
  std::stringstream in(read_text(root_ / "manifest.txt"));
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream fields(line);
    ManifestEntry e;
    fields >> e.kind;
    if (e.kind == "file") fields >> e.checksum;
    std::getline(fields >> std::ws, e.value);
    if (!e.kind.empty()) out.push_back(std::move(e));
  }
  return out;
}

std::string make_run_id(uint64_t seed) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream id;
  id << std::put_time(&tm, "%Y%m%d-%H%M%S") << "-" << std::setw(3) << std::setfill('0') << ms << "-s" << seed;
  return id.str();
}

FaceDataset load_experiment_data(const ExperimentConfig& cfg) {
  if (cfg.data == "synthetic") {
    SyntheticFaceOptions opts;
    opts.seed = cfg.synthetic_seed;
    return make_synthetic_faces(opts);
  }
  return load_dataset(cfg.data);
}

PipelineOutcome run_pipeline(const ExperimentConfig& cfg, const std::vector<Stage>& stages,
                             const PipelineOptions& options) {
  return execute(cfg, seed_everything(cfg.seed), stages, options);
}

PipelineOutcome replay_run(const fs::path& run_dir, const PipelineOptions& options) {
  auto source = ArtifactStore::open(run_dir);
  ExperimentConfig cfg = parse_config(read_text(run_dir / "config.txt"));
  const SeedMap seeds = parse_seed_map(read_text(run_dir / "seeds.txt"));
  if (seeds != seed_everything(cfg.seed)) throw ConfigError("seed map of " + run_dir.string() + " does not match its master seed");
  cfg.out_root = run_dir.parent_path().parent_path().string();
  std::vector<Stage> stages;
  for (const auto& e : source.manifest()) {
    if (e.kind == "stage") stages.push_back(parse_stage(e.value));
  }
  if (stages.empty()) throw PrerequisiteError("run " + run_dir.string() + " recorded no completed stage");
  return execute(cfg, seeds, stages, options);
}

std::string result_dir(AttackMethod method, int64_t target) {
  return "results/" + to_string(method) + "/person" + std::to_string(target + 1);
}

}  // namespace classrecon
