#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "sfield/dataio.hpp"
#include "sfield/kernels.hpp"
#include "sfield/gradcheck.hpp"
#include "sfield/metrics.hpp"
#include "sfield/parallel.hpp"
#include "sfield/pipeline.hpp"
#include "sfield/render.hpp"

namespace sfield::pipeline {

namespace fs = std::filesystem;

namespace {

// seed streams, kept disjoint by purpose
enum : std::uint64_t {
  kStreamInit = 0x11,
  kStreamBatch = 0x22,
  kStreamEps = 0x33,
  kStreamCamera = 0x44,
  kStreamGenerate = 0x55,
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  require(out.good(), "cannot write ", path.string());
  out << text;
  require(out.good(), "write failed for ", path.string());
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SynthConfig synth_section_to_config(const RunConfig& cfg, int count,
                                    std::uint64_t seed) {
  SynthConfig sc;
  sc.archetypes = cfg.synth.archetypes;
  sc.min_objects = cfg.synth.min_objects;
  sc.max_objects = cfg.synth.max_objects;
  sc.count = count;
  sc.seed = seed;
  return sc;
}

std::vector<AABB> gt_boxes(const Scene& scene) {
  std::vector<AABB> boxes;
  for (const SceneObject& o : scene.objects)
    boxes.push_back(o.transform.box());
  return boxes;
}

}  // namespace

std::vector<Scene> load_scene_dir(const fs::path& dir) {
  require(fs::is_directory(dir), "not a directory: ", dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".scene") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Scene> scenes;
  scenes.reserve(files.size());
  for (const fs::path& f : files) scenes.push_back(load_scene(f));
  return scenes;
}

// ---- synth-data ------------------------------------------------------------

void cmd_synth_data(const RunConfig& cfg) {
  require(!cfg.paths.out.empty(), "synth-data: paths.out is required");
  const fs::path out(cfg.paths.out);
  fs::create_directories(out / "train");
  fs::create_directories(out / "eval");

  // one corpus drawn in a single stream, then split head/tail
  SynthConfig sc = synth_section_to_config(
      cfg, cfg.synth.train_count + cfg.synth.eval_count, cfg.seed);
  const std::vector<Scene> scenes = synth_dataset(sc);

  std::string manifest;
  std::map<std::string, int> archetype_counts;
  std::map<std::size_t, int> size_histogram;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const bool is_train = i < static_cast<std::size_t>(cfg.synth.train_count);
    const fs::path dir = out / (is_train ? "train" : "eval");
    save_scene(scenes[i], dir / (scenes[i].id + ".scene"));
    manifest += scenes[i].id;
    manifest += is_train ? " train " : " eval ";
    manifest += scenes[i].archetype + "\n";
    archetype_counts[scenes[i].archetype]++;
    size_histogram[scenes[i].objects.size()]++;
  }
  write_text(out / "manifest.txt", manifest);

  write_asset_library(synth_assets(cfg.synth.styles_per_category),
                      out / "assets");

  RunConfig resolved = cfg;
  resolved.paths.dataset = out.string();
  resolved.save(out / "run_config.json");

  std::cout << "corpus: " << cfg.synth.train_count << " train + "
            << cfg.synth.eval_count << " eval scenes\n";
  for (const auto& [arch, count] : archetype_counts)
    std::cout << "  archetype " << arch << ": " << count << "\n";
  std::cout << "object-count histogram:\n";
  for (const auto& [size, count] : size_histogram)
    std::cout << "  " << size << " objects: " << count << "\n";
  std::cout << "assets: "
            << synth_assets(cfg.synth.styles_per_category).size()
            << " meshes\n";
}

// ---- training --------------------------------------------------------------

namespace {

struct ItemResult {
  std::vector<Tensor> grads;
  StepLosses losses;
};

// forward + backward for one scene on its own tape
ItemResult train_item(const SceneModel& model, const Scene& scene,
                      std::uint64_t eps_seed, std::uint64_t camera_seed,
                      const RunConfig& cfg, bool with_grads) {
  ItemResult out;
  Tape tape;
  const std::vector<Value> params = model.bind(tape);

  auto [mean, logvar] = model.encoder_forward(tape, params,
                                              model.voxelize(scene));
  Tensor eps({1, model.config().latent_width});
  {
    Rng rng(eps_seed);
    for (std::int64_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
  }
  Value z = model.reparameterize_op(tape, mean, logvar, eps);
  const SceneModel::Decoded dec =
      model.decode_relationships_op(tape, params, z);

  const std::vector<AABB> boxes = gt_boxes(scene);
  const LayoutSlots slots = slots_from_tensor(tape.value(dec.slot_params));
  const auto matching = match_slots(slots, boxes);
  Value layout = layout_loss_op(dec.slot_params, boxes, matching);

  SoftRasterConfig raster_cfg;
  raster_cfg.temperature = cfg.render.temperature;
  raster_cfg.depth_sharpness = cfg.render.depth_sharpness;
  Value render_acc;
  for (std::size_t k = 0; k < matching.size(); ++k) {
    const auto [slot_idx, gt_idx] = matching[k];
    const Camera cam = sample_camera(
        derive_seed(camera_seed, k), cfg.render.camera_radius,
        cfg.render.train_resolution, cfg.render.train_resolution,
        cfg.render.fov_deg);
    Value verts = model.deform_slot_op(tape, params, dec, slot_idx);
    Value raster = rasterize_soft_op(verts, model.shape_template().faces,
                                     cam, raster_cfg);
    // ground truth runs through the same soft rasterizer (no domain gap)
    const RenderBuffers gt =
        rasterize_soft(scene.objects[gt_idx].placed_mesh(), cam,
                       raster_cfg.temperature, raster_cfg.depth_sharpness);
    Value pair_loss = render_loss_op(raster, gt);
    render_acc = k == 0 ? pair_loss : add(render_acc, pair_loss);
  }
  Value render =
      scale(render_acc, 1.0 / static_cast<double>(matching.size()));
  Value kl = kl_loss_op(mean, logvar);
  Value total = add(add(scale(kl, kKlWeight), render), layout);

  out.losses.kl = tape.value(kl).item();
  out.losses.render = tape.value(render).item();
  out.losses.layout = tape.value(layout).item();
  out.losses.total = tape.value(total).item();
  if (with_grads) {
    tape.backward(total);
    out.grads.reserve(params.size());
    for (Value p : params) out.grads.push_back(tape.grad(p));
  }
  return out;
}

}  // namespace

StepLosses train_step(SceneModel& model, AdamW& optimizer,
                      const std::vector<Scene>& corpus, long step_index,
                      const RunConfig& cfg) {
  require(!corpus.empty(), "train: empty corpus");
  const int batch = cfg.train.batch;
  std::vector<int> indices(batch, 0);
  if (!cfg.train.overfit_one) {
    Rng rng(derive_seed(derive_seed(cfg.seed, kStreamBatch), step_index));
    for (int b = 0; b < batch; ++b)
      indices[b] = rng.uniform_int(0, static_cast<int>(corpus.size()) - 1);
  }

  // one chunk per batch item; merged in item order, so worker count
  // never changes the result
  std::vector<ItemResult> results(batch);
  parallel_chunks(batch, [&](std::size_t b) {
    const std::uint64_t item_stream =
        static_cast<std::uint64_t>(step_index) * batch + b;
    results[b] = train_item(
        model, corpus[indices[b]],
        derive_seed(derive_seed(cfg.seed, kStreamEps), item_stream),
        derive_seed(derive_seed(cfg.seed, kStreamCamera), item_stream), cfg,
        /*with_grads=*/true);
  });

  StepLosses mean_losses;
  std::vector<Tensor> grads;
  for (int b = 0; b < batch; ++b) {
    mean_losses.kl += results[b].losses.kl / batch;
    mean_losses.render += results[b].losses.render / batch;
    mean_losses.layout += results[b].losses.layout / batch;
    mean_losses.total += results[b].losses.total / batch;
    if (b == 0) {
      grads = std::move(results[b].grads);
    } else {
      for (std::size_t i = 0; i < grads.size(); ++i)
        kernels::active().axpy(grads[i].data(), 1.0,
                               results[b].grads[i].data(), grads[i].size());
    }
  }
  for (Tensor& g : grads)
    kernels::active().scale(g.data(), g.data(), 1.0 / batch, g.size());
  optimizer.step(model.params(), grads);
  return mean_losses;
}

StepLosses eval_losses(const SceneModel& model,
                       const std::vector<Scene>& scenes, const RunConfig& cfg,
                       std::uint64_t seed) {
  require(!scenes.empty(), "eval_losses: empty scene set");
  StepLosses acc;
  std::vector<StepLosses> per_scene(scenes.size());
  parallel_chunks(scenes.size(), [&](std::size_t i) {
    per_scene[i] = train_item(model, scenes[i], derive_seed(seed, 2 * i),
                              derive_seed(seed, 2 * i + 1), cfg,
                              /*with_grads=*/false)
                       .losses;
  });
  for (const StepLosses& s : per_scene) {
    acc.kl += s.kl / scenes.size();
    acc.render += s.render / scenes.size();
    acc.layout += s.layout / scenes.size();
    acc.total += s.total / scenes.size();
  }
  return acc;
}

void cmd_train(const RunConfig& cfg) {
  require(!cfg.paths.dataset.empty(), "train: paths.dataset is required");
  require(!cfg.paths.out.empty(), "train: paths.out is required");
  const fs::path out(cfg.paths.out);
  fs::create_directories(out);

  const std::vector<Scene> corpus =
      load_scene_dir(fs::path(cfg.paths.dataset) / "train");
  require(!corpus.empty(), "train: no scenes in ", cfg.paths.dataset);

  SceneModel model(cfg.model, derive_seed(cfg.seed, kStreamInit));
  AdamWConfig ac;
  ac.lr = cfg.train.lr;
  ac.weight_decay = cfg.train.weight_decay;
  AdamW optimizer(ac);
  long start_step = 0;
  if (!cfg.paths.checkpoint.empty()) {
    const Checkpoint ckpt = load_checkpoint(cfg.paths.checkpoint);
    ckpt.restore_into(model, optimizer);
    start_step = optimizer.step_count();
    std::cout << "resumed from " << cfg.paths.checkpoint << " at step "
              << start_step << "\n";
  }

  cfg.save(out / "run_config.json");
  std::ofstream log(out / "loss_log.txt",
                    start_step > 0 ? std::ios::app : std::ios::out);
  require(log.good(), "cannot open loss log in ", out.string());

  for (long step = start_step; step < cfg.train.steps; ++step) {
    StepLosses losses;
    try {
      losses = train_step(model, optimizer, corpus, step, cfg);
    } catch (const Error& e) {
      fail("training aborted at step ", step, ": ", e.what());
    }
    log << step << ' ' << fmt17(losses.kl) << ' ' << fmt17(losses.render)
        << ' ' << fmt17(losses.layout) << ' ' << fmt17(losses.total) << '\n';
    if ((step + 1) % 50 == 0 || step == start_step)
      std::cout << "step " << step << " total " << losses.total << " (kl "
                << losses.kl << ", render " << losses.render << ", layout "
                << losses.layout << ")\n";
    if (cfg.train.checkpoint_every > 0 &&
        (step + 1) % cfg.train.checkpoint_every == 0)
      save_checkpoint(model, optimizer,
                      out / ("checkpoint_" + std::to_string(step + 1) + ".bin"));
  }
  save_checkpoint(model, optimizer, out / "checkpoint_final.bin");
}

// ---- generate ---------------------------------------------------------------

void cmd_generate(const RunConfig& cfg, int n, bool render_images) {
  require(n >= 0, "generate: n must be nonnegative");
  require(!cfg.paths.checkpoint.empty(), "generate: paths.checkpoint required");
  require(!cfg.paths.out.empty(), "generate: paths.out is required");
  require(!cfg.paths.dataset.empty(),
          "generate: paths.dataset (for the asset library) is required");
  const fs::path out(cfg.paths.out);
  fs::create_directories(out / "scenes");
  if (render_images) fs::create_directories(out / "renders");

  const Checkpoint ckpt = load_checkpoint(cfg.paths.checkpoint);
  SceneModel model = ckpt.restore();
  const AssetLibrary library =
      AssetLibrary::build(fs::path(cfg.paths.dataset) / "assets");

  cfg.save(out / "run_config.json");
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(derive_seed(cfg.seed, kStreamGenerate), i));
    std::vector<double> z(model.config().latent_width);
    for (double& v : z) v = rng.normal();
    const auto [shapes, layout] = model.generate(z);
    Scene scene =
        assemble_scene(shapes, layout, library, cfg.retrieval_category_filter);
    char id[32];
    std::snprintf(id, sizeof id, "gen_%04d", i);
    scene.id = id;
    scene.archetype = "generated";
    if (!scene.objects.empty()) scene = normalize_scene(scene);
    scene.id = id;
    save_scene(scene, out / "scenes" / (scene.id + std::string(".scene")));
    if (render_images) {
      const Tensor img = topdown_render(scene, cfg.render.metric_resolution);
      RenderBuffers buf;
      buf.normal = img;
      buf.mask = Tensor({img.dim(0), img.dim(1)});
      write_pfm(img, out / "renders" / (scene.id + std::string(".pfm")));
      write_image(buf, out / "renders" / (scene.id + std::string(".ppm")),
                  ImageFormat::kPpm);
    }
  }
  std::cout << "generated " << n << " scenes into " << (out / "scenes")
            << "\n";
}

// ---- evaluate ---------------------------------------------------------------

std::vector<Tensor> render_corpus(const std::vector<Scene>& scenes,
                                  int resolution) {
  std::vector<Tensor> images(scenes.size());
  parallel_chunks(scenes.size(), [&](std::size_t i) {
    const Scene normalized = scenes[i].objects.empty()
                                 ? scenes[i]
                                 : normalize_scene(scenes[i]);
    images[i] = topdown_render(normalized, resolution);
  });
  return images;
}

void cmd_evaluate(const RunConfig& cfg, const fs::path& generated_dir,
                  const fs::path& reference_dir) {
  require(!cfg.paths.out.empty(), "evaluate: paths.out is required");
  const std::vector<Scene> generated = load_scene_dir(generated_dir);
  const std::vector<Scene> reference = load_scene_dir(reference_dir);
  require(!generated.empty(), "evaluate: no scenes in ",
          generated_dir.string());
  require(!reference.empty(), "evaluate: no scenes in ",
          reference_dir.string());

  const int res = cfg.render.metric_resolution;
  const std::vector<Tensor> gen_images = render_corpus(generated, res);
  const std::vector<Tensor> ref_images = render_corpus(reference, res);

  std::vector<std::vector<double>> gen_feats, ref_feats;
  for (const Tensor& img : gen_images)
    gen_feats.push_back(extract_features(img));
  for (const Tensor& img : ref_images)
    ref_feats.push_back(extract_features(img));
  const double fid_style = frechet_distance(summarize_features(gen_feats),
                                            summarize_features(ref_feats));
  const double kl = category_kl(category_histogram(generated),
                                category_histogram(reference));
  const double div = diversity(gen_images);
  const double accuracy = sca(ref_images, gen_images, cfg.seed);

  const fs::path out(cfg.paths.out);
  fs::create_directories(out);
  cfg.save(out / "run_config.json");
  std::string report;
  report += "fid_style " + fmt17(fid_style) + "\n";
  report += "category_kl " + fmt17(kl) + "\n";
  report += "sca " + fmt17(accuracy) + "\n";
  report += "diversity " + fmt17(div) + "\n";
  report += "n_generated " + std::to_string(generated.size()) + "\n";
  report += "n_reference " + std::to_string(reference.size()) + "\n";
  report += "resolution " + std::to_string(res) + "\n";
  report += "seed " + std::to_string(cfg.seed) + "\n";
  write_text(out / "report.txt", report);
  std::cout << report;
}

}  // namespace sfield::pipeline
