// Experiment runner: every subcommand is driven by one JSON config file plus
// optional dotted-key overrides, and everything an invocation writes lands in
// the config's output directory together with the exact resolved config.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure, 4 I/O. On
// failure stdout carries a single machine-parsable line ("error: <category>")
// and the human-readable detail goes to stderr.

#include <CLI11.hpp>
#include <fcntl.h>
#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "igan/dataset.hpp"
#include "igan/eval.hpp"
#include "igan/png.hpp"
#include "igan/squares.hpp"
#include "igan/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace igan;

namespace {

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------

json default_config() {
  json cfg;
  cfg["experiment"] = "experiment";
  cfg["output_dir"] = "runs/experiment";
  cfg["dataset"] = {{"kind", "squares"},
                    {"attributes", json::array({"small", "left"})},
                    {"per_domain", 4096},
                    {"side", 32},
                    {"seed", 5},
                    {"augment", false},
                    {"images", ""},
                    {"labels", ""},
                    {"pad_to", 0},
                    {"domains", json::array()}};
  cfg["model"] = {{"gen", to_json(GeneratorConfig{})},
                  {"disc", to_json(DiscriminatorConfig{})},
                  {"share", to_json(ShareConfig{})}};
  cfg["train"] = to_json(TrainConfig{});
  cfg["weights"] = to_json(LossWeights{});
  cfg["eval"] = {{"embedding", "raw8"},
                 {"samples", 512},
                 {"seed", 99},
                 {"predicates", json::array()},
                 {"accepted", json::array()},
                 {"metrics", json::array()},
                 {"probe",
                  {{"classes", 10},
                   {"image_side", 32},
                   {"base_channels", 16},
                   {"batch", 64},
                   {"lr", 1e-3},
                   {"max_epochs", 8},
                   {"holdout_fraction", 0.1},
                   {"accuracy_gate", 0.95},
                   {"seed", 7}}}};
  return cfg;
}

void apply_override(json& cfg, const std::string& kv) {
  const size_t eq = kv.find('=');
  check(eq != std::string::npos && eq > 0, ErrorKind::usage,
        "override '", kv, "' is not of the form dotted.key=value");
  std::string key = "/" + kv.substr(0, eq);
  for (auto& c : key)
    if (c == '.') c = '/';
  const std::string raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings are taken literally
  }
  try {
    cfg[json::json_pointer(key)] = value;
  } catch (const json::exception& e) {
    fail(ErrorKind::usage, "cannot apply override '", kv, "': ", e.what());
  }
}

json load_experiment(const std::string& path,
                     const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  check(in.good(), ErrorKind::io, "cannot open config '", path, "'");
  json user;
  try {
    in >> user;
  } catch (const json::exception& e) {
    fail(ErrorKind::usage, "config '", path, "' is not valid JSON: ",
         e.what());
  }
  json cfg = default_config();
  cfg.merge_patch(user);
  for (const auto& kv : overrides) apply_override(cfg, kv);
  return cfg;
}

// Resolves the output directory (honoring IGAN_OUTPUT_ROOT for relative
// paths), creates it, and rewrites the config to the absolute result.
std::string resolve_output_dir(json& cfg) {
  fs::path dir = cfg.at("output_dir").get<std::string>();
  if (dir.is_relative())
    if (const char* root = std::getenv("IGAN_OUTPUT_ROOT")) dir = root / dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  check(!ec, ErrorKind::io, "cannot create output directory '", dir.string(),
        "': ", ec.message());
  const std::string abs = fs::absolute(dir).lexically_normal().string();
  cfg["output_dir"] = abs;
  return abs;
}

// One command per process: the process owns its output directory through an
// exclusively-created lock file for as long as it runs.
class DirLock {
 public:
  explicit DirLock(const std::string& dir) : path_(dir + "/.lock") {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    check(fd >= 0, ErrorKind::io, "output directory '", dir,
          "' is locked by another process ('", path_,
          "' exists; remove it if stale)");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const ssize_t n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~DirLock() { ::unlink(path_.c_str()); }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
};

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  check(out.good(), ErrorKind::io, "cannot open '", path, "' for writing");
  out << j.dump(2) << "\n";
  check(out.good(), ErrorKind::io, "failed while writing '", path, "'");
}

std::string iter_tag(int64_t it) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(it));
  return buf;
}

// ---------------------------------------------------------------------------
// Dataset construction
// ---------------------------------------------------------------------------

struct BuiltData {
  std::vector<ImageSet> sets;
  std::vector<SquareDomain> squares;  // kept for the exact scene oracle
  Tensor labeled_images;              // full labeled pool (idx datasets)
  std::vector<uint8_t> labels;
  bool has_labels = false;
};

BuiltData build_datasets(const json& ds) {
  BuiltData out;
  const std::string kind = ds.at("kind").get<std::string>();
  if (kind == "squares") {
    const auto names = ds.at("attributes").get<std::vector<std::string>>();
    check(!names.empty(), ErrorKind::usage,
          "dataset.attributes must name at least one attribute");
    const int64_t per = ds.at("per_domain").get<int64_t>();
    const int64_t side = ds.at("side").get<int64_t>();
    const bool augment = ds.at("augment").get<bool>();
    Rng rng(ds.at("seed").get<uint64_t>(), "dataset");
    out.squares = build_square_domains(names, per, side, rng);
    for (const auto& d : out.squares) {
      if (d.images.dim(0) == 0)
        std::cerr << "warning: domain '" << d.name << "' was generated empty"
                  << std::endl;
      out.sets.push_back(d.to_image_set(augment));
    }
  } else if (kind == "idx") {
    const std::string images = ds.at("images").get<std::string>();
    const std::string labels = ds.at("labels").get<std::string>();
    check(!images.empty() && !labels.empty(), ErrorKind::usage,
          "idx datasets need dataset.images and dataset.labels paths");
    Tensor imgs = load_idx_images(images);
    out.labels = load_idx_labels(labels);
    const int64_t pad_to = ds.at("pad_to").get<int64_t>();
    if (pad_to > 0) imgs = pad_images(imgs, pad_to, Real(-1));
    out.labeled_images = std::move(imgs);
    out.has_labels = true;
    const bool augment = ds.at("augment").get<bool>();
    check(ds.at("domains").is_array() && !ds.at("domains").empty(),
          ErrorKind::usage,
          "idx datasets need a dataset.domains list of {name, digits}");
    for (const auto& d : ds.at("domains")) {
      const auto name = d.at("name").get<std::string>();
      const auto digits = d.at("digits").get<std::vector<uint8_t>>();
      ImageSet set =
          partition_by_content(name, out.labeled_images, out.labels, digits);
      set.augment = augment;
      out.sets.push_back(std::move(set));
    }
  } else {
    fail(ErrorKind::usage, "unknown dataset.kind '", kind,
         "' (expected squares or idx)");
  }
  return out;
}

Trainer make_trainer(const json& cfg, std::vector<ImageSet> sets) {
  return Trainer(std::move(sets),
                 gen_config_from_json(cfg.at("model").at("gen")),
                 disc_config_from_json(cfg.at("model").at("disc")),
                 share_config_from_json(cfg.at("model").at("share")),
                 loss_weights_from_json(cfg.at("weights")),
                 train_config_from_json(cfg.at("train")));
}

// Rebuilds a trainer from a checkpoint alone, with empty image pools shaped
// from the checkpoint's own descriptor — enough for sampling and evaluation,
// which never draw training batches.
Trainer load_for_inference(const std::string& ckpt) {
  Archive a = Archive::load(ckpt);
  check(a.descriptor.value("kind", std::string()) == "igan-checkpoint",
        ErrorKind::io, "'", ckpt, "' is not a training checkpoint");
  const auto domains =
      a.descriptor.at("domains").get<std::vector<std::string>>();
  const DiscriminatorConfig dcfg =
      disc_config_from_json(a.descriptor.at("disc"));
  std::vector<ImageSet> sets;
  for (const auto& d : domains)
    sets.push_back(
        ImageSet{d, Tensor({0, dcfg.in_channels, dcfg.in_side, dcfg.in_side}),
                 false});
  return Trainer::load_checkpoint(ckpt, std::move(sets));
}

std::string default_checkpoint(const json& cfg) {
  return cfg.at("output_dir").get<std::string>() + "/checkpoint.igan";
}

// Evaluation-mode samples drawn in batches so big requests stay cheap.
Tensor generate_batched(Trainer& t, const std::string& which, int64_t count,
                        Rng& rng) {
  Tensor out;
  int64_t done = 0;
  while (done < count) {
    const int64_t take = std::min<int64_t>(64, count - done);
    const Tensor chunk = t.generate(which, take, rng);
    if (done == 0)
      out = Tensor({count, chunk.dim(1), chunk.dim(2), chunk.dim(3)});
    const int64_t plane = chunk.numel() / take;
    for (int64_t j = 0; j < take * plane; ++j)
      out.at(done * plane + j) = chunk.at(j);
    done += take;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void run_gen_data(json cfg) {
  check(cfg.at("dataset").at("kind") == "squares", ErrorKind::usage,
        "gen-data materializes procedural squares datasets; idx datasets "
        "already live on disk");
  const std::string outdir = resolve_output_dir(cfg);
  DirLock lock(outdir);
  write_json_file(outdir + "/config.json", cfg);
  const BuiltData data = build_datasets(cfg.at("dataset"));
  fs::create_directories(outdir + "/data");
  for (const auto& d : data.squares) {
    Archive a;
    a.descriptor["kind"] = "igan-dataset";
    a.descriptor["name"] = d.name;
    json preds = json::array();
    for (const auto& p : d.attributes) preds.push_back(p.name);
    a.descriptor["attributes"] = preds;
    json scenes = json::array();
    for (const auto& s : d.scenes)
      scenes.push_back({{"square_color", {s.square_color.r, s.square_color.g,
                                          s.square_color.b}},
                        {"background_color",
                         {s.background_color.r, s.background_color.g,
                          s.background_color.b}},
                        {"side", s.side},
                        {"center_x", s.center_x},
                        {"center_y", s.center_y}});
    a.descriptor["scenes"] = scenes;
    if (d.images.dim(0) > 0) a.put("images", d.images);
    a.save(outdir + "/data/" + d.name + ".igan");
    if (d.images.dim(0) > 0) {
      const int64_t preview = std::min<int64_t>(64, d.images.dim(0));
      Tensor head({preview, 3, d.images.dim(2), d.images.dim(3)});
      for (int64_t j = 0; j < head.numel(); ++j) head.at(j) = d.images.at(j);
      write_image_grid_png(outdir + "/data/" + d.name + "-preview.png", head,
                           8);
    }
    std::cout << "wrote domain '" << d.name << "' with " << d.images.dim(0)
              << " images" << std::endl;
  }
}

void run_train(json cfg, bool resume, std::string resume_path,
               int64_t stop_after) {
  const std::string outdir = resolve_output_dir(cfg);
  DirLock lock(outdir);
  write_json_file(outdir + "/config.json", cfg);

  BuiltData data = build_datasets(cfg.at("dataset"));
  check(data.sets.size() >= 2, ErrorKind::usage,
        "training needs at least 2 domains, got ", data.sets.size());

  if (resume_path.empty()) resume_path = default_checkpoint(cfg);
  Trainer trainer =
      resume ? Trainer::load_checkpoint(resume_path, std::move(data.sets))
             : make_trainer(cfg, std::move(data.sets));

  const TrainConfig& tc = trainer.config();
  const int64_t limit = stop_after > 0
                            ? std::min<int64_t>(stop_after, tc.iterations)
                            : tc.iterations;
  std::ofstream metrics(outdir + "/metrics.jsonl",
                        resume ? std::ios::app : std::ios::trunc);
  check(metrics.good(), ErrorKind::io, "cannot open metrics log in '", outdir,
        "'");
  fs::create_directories(outdir + "/samples");
  fs::create_directories(outdir + "/checkpoints");

  while (trainer.iteration() < limit) {
    const double lr = double(lr_at(tc, trainer.iteration()));
    const LossReport rep = trainer.step();
    const int64_t it = trainer.iteration();
    metrics << report_json(rep, it, lr).dump() << "\n";
    check(metrics.good(), ErrorKind::io, "failed while writing metrics log");
    if (tc.sample_every > 0 && it % tc.sample_every == 0) {
      const Tensor grid =
          trainer.generate(kIntersectionName, 32, trainer.stream("sample"));
      write_image_grid_png(
          outdir + "/samples/intersection-" + iter_tag(it) + ".png", grid, 8);
    }
    if (tc.checkpoint_every > 0 && it % tc.checkpoint_every == 0) {
      trainer.save_checkpoint(outdir + "/checkpoints/ckpt-" + iter_tag(it) +
                              ".igan");
      trainer.save_checkpoint(default_checkpoint(cfg));
    }
  }
  metrics.flush();
  trainer.save_checkpoint(default_checkpoint(cfg));
  std::cout << "trained to iteration " << trainer.iteration() << " of "
            << tc.iterations << "; checkpoint at "
            << default_checkpoint(cfg) << std::endl;
}

void run_sample(json cfg, std::string ckpt, std::string which, int64_t rows,
                int64_t cols, uint64_t seed) {
  const std::string outdir = resolve_output_dir(cfg);
  DirLock lock(outdir);
  write_json_file(outdir + "/config.sample.json", cfg);
  if (ckpt.empty()) ckpt = default_checkpoint(cfg);
  Trainer trainer = load_for_inference(ckpt);
  fs::create_directories(outdir + "/samples");
  std::vector<std::string> targets;
  if (which == "all") {
    targets.push_back(kIntersectionName);
    for (const auto& d : trainer.domains()) targets.push_back(d);
  } else {
    targets.push_back(which);
  }
  Rng rng(seed, "cli/sample");
  for (const auto& t : targets) {
    const Tensor grid = generate_batched(trainer, t, rows * cols, rng);
    const std::string path = outdir + "/samples/" + t + "-" +
                             iter_tag(trainer.iteration()) + ".png";
    write_image_grid_png(path, grid, cols);
    std::cout << "wrote " << path << std::endl;
  }
}

void run_interpolate(json cfg, std::string ckpt, std::string which,
                     int64_t pairs, int64_t steps, uint64_t seed) {
  check(pairs > 0 && steps >= 2, ErrorKind::usage,
        "interpolation needs pairs >= 1 and steps >= 2");
  const std::string outdir = resolve_output_dir(cfg);
  DirLock lock(outdir);
  write_json_file(outdir + "/config.interpolate.json", cfg);
  if (ckpt.empty()) ckpt = default_checkpoint(cfg);
  Trainer trainer = load_for_inference(ckpt);
  const int64_t noise_dim =
      trainer.generator(which).config().noise_dim;

  Rng rng(seed, "cli/interpolate");
  Tensor z({pairs * steps, noise_dim});
  for (int64_t p = 0; p < pairs; ++p) {
    const Tensor z0 = rng.normal_tensor({noise_dim});
    const Tensor z1 = rng.normal_tensor({noise_dim});
    for (int64_t s = 0; s < steps; ++s) {
      const Real t = Real(s) / Real(steps - 1);
      for (int64_t j = 0; j < noise_dim; ++j)
        z.at((p * steps + s) * noise_dim + j) =
            (Real(1) - t) * z0.at(j) + t * z1.at(j);
    }
  }
  const Tensor images = trainer.generate_from(which, z);
  fs::create_directories(outdir + "/samples");
  const std::string path = outdir + "/samples/interpolate-" + which + "-" +
                           iter_tag(trainer.iteration()) + ".png";
  write_image_grid_png(path, images, steps);
  std::cout << "wrote " << path << std::endl;
}

void run_trio(json cfg, std::string ckpt, int64_t count, uint64_t seed) {
  check(count > 0, ErrorKind::usage, "trio needs a positive row count");
  const std::string outdir = resolve_output_dir(cfg);
  DirLock lock(outdir);
  write_json_file(outdir + "/config.trio.json", cfg);
  if (ckpt.empty()) ckpt = default_checkpoint(cfg);
  Trainer trainer = load_for_inference(ckpt);
  check(trainer.domains().size() == 2, ErrorKind::usage,
        "trio grids are defined for exactly 2 domains, got ",
        trainer.domains().size());
  const int64_t noise_dim =
      trainer.generator(kIntersectionName).config().noise_dim;
  Rng rng(seed, "cli/trio");
  const Tensor z = rng.normal_tensor({count, noise_dim});
  const Tensor a = trainer.generate_from(trainer.domains()[0], z);
  const Tensor y = trainer.generate_from(kIntersectionName, z);
  const Tensor b = trainer.generate_from(trainer.domains()[1], z);
  // One row per z: G_1(z) | G_Y(z) | G_2(z).
  Tensor grid({count * 3, a.dim(1), a.dim(2), a.dim(3)});
  const int64_t plane = a.dim(1) * a.dim(2) * a.dim(3);
  for (int64_t i = 0; i < count; ++i)
    for (int64_t j = 0; j < plane; ++j) {
      grid.at((i * 3 + 0) * plane + j) = a.at(i * plane + j);
      grid.at((i * 3 + 1) * plane + j) = y.at(i * plane + j);
      grid.at((i * 3 + 2) * plane + j) = b.at(i * plane + j);
    }
  fs::create_directories(outdir + "/samples");
  const std::string path =
      outdir + "/samples/trio-" + iter_tag(trainer.iteration()) + ".png";
  write_image_grid_png(path, grid, 3);
  std::cout << "wrote " << path << std::endl;
}

void run_evaluate(json cfg, std::string ckpt) {
  const std::string outdir = resolve_output_dir(cfg);
  DirLock lock(outdir);
  write_json_file(outdir + "/config.evaluate.json", cfg);
  if (ckpt.empty()) ckpt = default_checkpoint(cfg);
  Trainer trainer = load_for_inference(ckpt);

  const json& ev = cfg.at("eval");
  const json& ds = cfg.at("dataset");
  const std::string kind = ds.at("kind").get<std::string>();
  std::vector<std::string> metrics =
      ev.at("metrics").get<std::vector<std::string>>();
  if (metrics.empty())
    metrics = kind == "squares"
                  ? std::vector<std::string>{"attribute_score", "frechet"}
                  : std::vector<std::string>{"content_score", "frechet"};

  const int64_t n_samples = ev.at("samples").get<int64_t>();
  Rng rng(ev.at("seed").get<uint64_t>(), "cli/evaluate");
  const Tensor fakes =
      generate_batched(trainer, kIntersectionName, n_samples, rng);

  // Shared context every metric record carries.
  json mcfg{{"experiment", cfg.at("experiment")},
            {"checkpoint_iteration", trainer.iteration()},
            {"samples", n_samples},
            {"eval_seed", ev.at("seed")},
            {"dataset_kind", kind}};

  BuiltData data;  // built lazily: only metrics that need real data pay
  bool built = false;
  auto ensure_data = [&]() {
    if (!built) {
      data = build_datasets(ds);
      built = true;
    }
  };
  auto pooled_real = [&]() {
    ensure_data();
    int64_t total = 0;
    for (const auto& s : data.sets) total += s.count();
    check(total > 0, ErrorKind::data, "no real images to evaluate against");
    const auto& first = data.sets.front().images;
    Tensor pool({total, first.dim(1), first.dim(2), first.dim(3)});
    int64_t at = 0;
    for (const auto& s : data.sets) {
      for (int64_t j = 0; j < s.images.numel(); ++j)
        pool.at(at + j) = s.images.at(j);
      at += s.images.numel();
    }
    return pool;
  };

  json records = json::array();
  auto emit = [&](const std::string& name, double value, json extra) {
    json c = mcfg;
    c.update(extra);
    const json rec = metric_record(name, value, c);
    records.push_back(rec);
    std::cout << rec.dump() << std::endl;
  };

  for (const auto& m : metrics) {
    if (m == "attribute_score") {
      std::vector<std::string> names =
          ev.at("predicates").get<std::vector<std::string>>();
      if (names.empty() && kind == "squares")
        names = ds.at("attributes").get<std::vector<std::string>>();
      check(!names.empty(), ErrorKind::usage,
            "attribute_score needs eval.predicates (or squares attributes)");
      std::vector<AttributePredicate> preds;
      for (const auto& n : names) preds.push_back(predicate_from_name(n));
      emit("attribute_score", attribute_score(fakes, preds),
           {{"predicates", names}});
      // Scene-level oracle over the pooled real data: the fraction of real
      // scenes (exact factors, no estimation) satisfying the same joint
      // predicate set.
      ensure_data();
      check(!data.squares.empty(), ErrorKind::usage,
            "the real-data baseline needs a squares dataset");
      int64_t sat = 0, total = 0;
      for (const auto& d : data.squares)
        for (const auto& s : d.scenes) {
          ++total;
          bool all = true;
          for (const auto& p : preds)
            if (!p.holds(s)) {
              all = false;
              break;
            }
          sat += all;
        }
      check(total > 0, ErrorKind::data, "no real scenes for the baseline");
      emit("attribute_score_real_baseline", double(sat) / double(total),
           {{"predicates", names}});
    } else if (m == "frechet") {
      const std::string embedding = ev.at("embedding").get<std::string>();
      Tensor fake_f, real_f;
      if (embedding == "raw8") {
        fake_f = embed_raw(fakes);
        real_f = embed_raw(pooled_real());
      } else if (embedding == "probe") {
        ensure_data();
        check(data.has_labels, ErrorKind::usage,
              "the probe embedding needs a labeled idx dataset");
        ProbeConfig pc;
        const json& pj = ev.at("probe");
        pc.classes = pj.at("classes").get<int64_t>();
        pc.image_side = pj.at("image_side").get<int64_t>();
        pc.base_channels = pj.at("base_channels").get<int64_t>();
        pc.batch = pj.at("batch").get<int64_t>();
        pc.lr = Real(pj.at("lr").get<double>());
        pc.max_epochs = pj.at("max_epochs").get<int64_t>();
        pc.holdout_fraction = pj.at("holdout_fraction").get<double>();
        pc.accuracy_gate = pj.at("accuracy_gate").get<double>();
        pc.seed = pj.at("seed").get<uint64_t>();
        const Probe probe = train_probe(data.labeled_images, data.labels, pc);
        check(probe.held_out_accuracy() >= pc.accuracy_gate, ErrorKind::data,
              "probe held-out accuracy ", probe.held_out_accuracy(),
              " is below the ", pc.accuracy_gate, " gate; refusing to embed");
        fake_f = probe.embed(fakes);
        real_f = probe.embed(pooled_real());
      } else {
        fail(ErrorKind::usage, "unknown eval.embedding '", embedding,
             "' (expected raw8 or probe)");
      }
      const double fd =
          frechet_distance(fit_gaussian(fake_f), fit_gaussian(real_f));
      emit("frechet", fd, {{"embedding", embedding}});
    } else if (m == "content_score") {
      ensure_data();
      check(data.has_labels, ErrorKind::usage,
            "content_score needs a labeled idx dataset");
      const auto accepted = ev.at("accepted").get<std::vector<uint8_t>>();
      ProbeConfig pc;
      const json& pj = ev.at("probe");
      pc.classes = pj.at("classes").get<int64_t>();
      pc.image_side = pj.at("image_side").get<int64_t>();
      pc.base_channels = pj.at("base_channels").get<int64_t>();
      pc.batch = pj.at("batch").get<int64_t>();
      pc.lr = Real(pj.at("lr").get<double>());
      pc.max_epochs = pj.at("max_epochs").get<int64_t>();
      pc.holdout_fraction = pj.at("holdout_fraction").get<double>();
      pc.accuracy_gate = pj.at("accuracy_gate").get<double>();
      pc.seed = pj.at("seed").get<uint64_t>();
      const Probe probe = train_probe(data.labeled_images, data.labels, pc);
      emit("probe_accuracy", probe.held_out_accuracy(),
           {{"gate", pc.accuracy_gate}});
      emit("content_score", content_score(probe, fakes, accepted),
           {{"accepted", accepted}});
    } else {
      fail(ErrorKind::usage, "unknown metric '", m,
           "' (expected attribute_score, frechet or content_score)");
    }
  }
  write_json_file(outdir + "/evaluation.json", records);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"domain-intersection GAN experiment runner"};
  app.require_subcommand(1);

  struct Common {
    std::string config;
    std::vector<std::string> overrides;
  };
  auto add_common = [](CLI::App* sub, Common& c) {
    sub->add_option("-c,--config", c.config, "experiment config (JSON)")
        ->required();
    sub->add_option("-s,--set", c.overrides,
                    "override a config key: dotted.key=value");
  };

  Common c_gen, c_train, c_sample, c_interp, c_trio, c_eval;
  bool resume = false;
  std::string resume_path, ckpt_sample, ckpt_interp, ckpt_trio, ckpt_eval;
  std::string which_sample = kIntersectionName;
  std::string which_interp = kIntersectionName;
  int64_t stop_after = 0, rows = 4, cols = 8, pairs = 4, steps = 8,
          trio_count = 8;
  uint64_t seed_sample = 99, seed_interp = 99, seed_trio = 99;

  CLI::App* sc_gen = app.add_subcommand("gen-data", "materialize datasets");
  add_common(sc_gen, c_gen);

  CLI::App* sc_train = app.add_subcommand("train", "run training");
  add_common(sc_train, c_train);
  sc_train->add_flag("--resume", resume, "continue from a checkpoint");
  sc_train->add_option("--resume-path", resume_path,
                       "checkpoint to resume from (default: "
                       "<output>/checkpoint.igan)");
  sc_train->add_option("--stop-after", stop_after,
                       "stop (with a checkpoint) after this iteration");

  CLI::App* sc_sample = app.add_subcommand("sample", "render sample grids");
  add_common(sc_sample, c_sample);
  sc_sample->add_option("--checkpoint", ckpt_sample, "checkpoint path");
  sc_sample->add_option("--which", which_sample,
                        "generator: a domain name, 'intersection', or 'all'");
  sc_sample->add_option("--rows", rows, "grid rows");
  sc_sample->add_option("--cols", cols, "grid columns");
  sc_sample->add_option("--seed", seed_sample, "noise seed");

  CLI::App* sc_interp =
      app.add_subcommand("interpolate", "render noise interpolation rows");
  add_common(sc_interp, c_interp);
  sc_interp->add_option("--checkpoint", ckpt_interp, "checkpoint path");
  sc_interp->add_option("--which", which_interp, "generator to drive");
  sc_interp->add_option("--pairs", pairs, "number of z pairs (rows)");
  sc_interp->add_option("--steps", steps, "interpolation steps per row");
  sc_interp->add_option("--seed", seed_interp, "noise seed");

  CLI::App* sc_trio =
      app.add_subcommand("trio", "render aligned G_1/G_Y/G_2 triples");
  add_common(sc_trio, c_trio);
  sc_trio->add_option("--checkpoint", ckpt_trio, "checkpoint path");
  sc_trio->add_option("--count", trio_count, "number of shared-z rows");
  sc_trio->add_option("--seed", seed_trio, "noise seed");

  CLI::App* sc_eval =
      app.add_subcommand("evaluate", "compute metrics on a checkpoint");
  add_common(sc_eval, c_eval);
  sc_eval->add_option("--checkpoint", ckpt_eval, "checkpoint path");

  try {
    app.parse(argc, argv);
    if (*sc_gen) run_gen_data(load_experiment(c_gen.config, c_gen.overrides));
    if (*sc_train)
      run_train(load_experiment(c_train.config, c_train.overrides), resume,
                resume_path, stop_after);
    if (*sc_sample)
      run_sample(load_experiment(c_sample.config, c_sample.overrides),
                 ckpt_sample, which_sample, rows, cols, seed_sample);
    if (*sc_interp)
      run_interpolate(load_experiment(c_interp.config, c_interp.overrides),
                      ckpt_interp, which_interp, pairs, steps, seed_interp);
    if (*sc_trio)
      run_trio(load_experiment(c_trio.config, c_trio.overrides), ckpt_trio,
               trio_count, seed_trio);
    if (*sc_eval)
      run_evaluate(load_experiment(c_eval.config, c_eval.overrides),
                   ckpt_eval);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cout << "error: usage" << std::endl;
    std::cerr << e.what() << std::endl;
    return 1;
  } catch (const Error& e) {
    std::cout << "error: " << to_string(e.kind()) << std::endl;
    std::cerr << e.what() << std::endl;
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cout << "error: numeric" << std::endl;
    std::cerr << "unexpected failure: " << e.what() << std::endl;
    return 3;
  }
}
