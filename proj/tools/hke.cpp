// Command-line front end: experiments, data generation and the annotation server.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hke/hke.hpp"
#include "hke/service/server.hpp"

namespace fs = std::filesystem;

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

hke::Dataset dataset_from_arg(const std::string& arg, std::uint64_t seed) {
  if (arg == "shapes") return hke::generate_shapes(seed).dataset;
  if (arg == "blobs") return hke::object_blobs(seed);
  return hke::load_dataset(arg);
}

std::vector<hke::VirtualParticipant> participants_for(const hke::ExperimentConfig& cfg, const hke::Dataset& data,
                                                      const fs::path& base) {
  std::vector<hke::VirtualParticipant> out;
  for (const auto& spec : cfg.participants) out.push_back(hke::make_participant(spec, data, base));
  if (out.empty()) {
    bool has_classes = true;
    auto labels = data.leaf_labels();
    for (const auto& cls : hke::object_classes()) {
      bool found = false;
      for (const auto& [id, l] : labels) found = found || l == cls;
      has_classes = has_classes && found;
    }
    if (has_classes) return hke::make_object_participants(data, cfg.seed);
    out.emplace_back("participant", hke::LatentHierarchy::from_label_paths(data), data, 0.0, cfg.seed);
  }
  return out;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
  auto cfg = hke::load_config(config_path);
  const fs::path base = fs::path(config_path).parent_path();
  auto data = hke::resolve_dataset(cfg.dataset, base);
  for (auto& p : participants_for(cfg, data, base)) {
    auto result = hke::run_elicitation(data, p, cfg);
    const fs::path dir = fs::path(out_dir) / p.id();
    hke::report(result, dir);
    std::cout << p.id() << ": final purity " << result.final_purity() << " after " << result.pool.size()
              << " answers -> " << dir.string() << "\n";
  }
  return 0;
}

int cmd_ablate(const std::string& dataset_arg, std::uint64_t seed, const std::string& config_path,
               const std::string& out_dir) {
  hke::ExperimentConfig cfg = dataset_arg == "shapes" ? hke::shape_protocol(seed) : hke::blob_protocol(seed);
  fs::path base;
  if (!config_path.empty()) {
    cfg = hke::load_config(config_path);
    base = fs::path(config_path).parent_path();
  }
  cfg.seed = seed;
  auto data = dataset_from_arg(dataset_arg, seed);
  auto participants = participants_for(cfg, data, base);
  auto result = hke::run_ablation(data, participants, cfg, seed);

  for (const auto& p : result.participants) {
    std::cout << p.participant;
    for (const auto& a : p.arms) std::cout << "  " << a.arm << "=" << a.purity.back();
    std::cout << "\n";
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream(fs::path(out_dir) / "ablation.json") << hke::to_json(result).dump(2) << "\n";
    std::ofstream csv(fs::path(out_dir) / "ablation.csv");
    hke::write_ablation_csv(result, csv);
  }
  return 0;
}

int cmd_export_tree(const std::string& run_dir, const std::string& format) {
  auto tree = hke::load_tree(fs::path(run_dir) / "tree.json");
  if (format == "csv") {
    hke::write_tree_csv(tree, std::cout);
  } else {
    std::cout << hke::to_json(tree).dump(2) << "\n";
  }
  return 0;
}

int cmd_gen_shapes(std::uint64_t seed, const std::string& out_dir, bool svg) {
  auto set = hke::generate_shapes(seed);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  hke::save_dataset(set.dataset, dir / "shapes.csv");
  hke::save_latent(set.hierarchy, (dir / "shapes.hierarchy.json").string());
  if (svg) {
    fs::create_directories(dir / "stimuli");
    for (const auto& item : set.dataset.items()) {
      std::ofstream(dir / "stimuli" / (std::to_string(item.id) + ".svg")) << hke::render_stimulus(item);
    }
  }
  std::cout << "wrote " << set.dataset.size() << " shapes to " << dir.string() << "\n";
  return 0;
}

int cmd_gen_blobs(int taxonomy, std::size_t per_leaf, std::size_t dim, std::uint64_t seed,
                  const std::string& out_dir) {
  hke::DatasetRef ref;
  ref.generator = "blobs";
  ref.taxonomy = taxonomy;
  ref.per_leaf = per_leaf;
  ref.dim = dim;
  ref.seed = seed;
  auto data = hke::resolve_dataset(ref);
  auto tree = hke::LatentHierarchy::from_label_paths(data, "objects");
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  hke::save_dataset(data, dir / "blobs.csv");
  hke::save_latent(tree, (dir / "blobs.hierarchy.json").string());
  std::cout << "wrote " << data.size() << " items to " << dir.string() << "\n";
  return 0;
}

int cmd_serve(const std::string& dataset_arg, const std::string& config_path, int port, const std::string& host,
              const std::string& state_dir) {
  hke::ExperimentConfig cfg;
  if (!config_path.empty()) cfg = hke::load_config(config_path);
  auto data = dataset_from_arg(dataset_arg, cfg.dataset.seed);
  hke::SessionManager manager(std::move(data), cfg, state_dir);

  httplib::Server server;
  hke::install_routes(server, manager);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  int bound = port;
  if (port == 0) {
    bound = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    std::cerr << "error: cannot bind " << host << ":" << port << "\n";
    return 1;
  }
  std::cout << "listening on " << host << ":" << bound << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchy elicitation from odd-one-out judgments"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "runs/latest";
  auto* run = app.add_subcommand("run", "Run the elicitation loop described by a config file");
  run->add_option("--config", config_path, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Report directory");

  std::string dataset_arg;
  std::uint64_t seed = 0;
  std::string ablate_out, ablate_config;
  auto* ablate = app.add_subcommand("ablate", "Compare raw features, random, active and adaptive-margin arms");
  ablate->add_option("--dataset", dataset_arg, "Dataset CSV, or 'blobs' / 'shapes'")->required();
  ablate->add_option("--seed", seed, "Seed");
  ablate->add_option("--config", ablate_config, "Base experiment config JSON");
  ablate->add_option("--out", ablate_out, "Directory for ablation.json / ablation.csv");

  std::string run_dir, format = "json";
  auto* export_tree = app.add_subcommand("export-tree", "Print the final tree of a run");
  export_tree->add_option("--run", run_dir, "Run directory")->required();
  export_tree->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));

  std::uint64_t shape_seed = 7;
  std::string shapes_out;
  bool svg = false;
  auto* gen_shapes = app.add_subcommand("gen-shapes", "Write the synthetic shape dataset");
  gen_shapes->add_option("--seed", shape_seed, "Jitter seed");
  gen_shapes->add_option("--out", shapes_out, "Output directory")->required();
  gen_shapes->add_flag("--svg", svg, "Also write one SVG per stimulus");

  int taxonomy = 0;
  std::size_t per_leaf = 100, dim = 32;
  std::uint64_t blob_seed = 7;
  std::string blobs_out;
  auto* gen_blobs = app.add_subcommand("gen-blobs", "Write a Gaussian blob dataset over the ten object classes");
  gen_blobs->add_option("--taxonomy", taxonomy, "0 = unrelated classes, 1..3 = centers follow that taxonomy")
      ->check(CLI::Range(0, 3));
  gen_blobs->add_option("--per-leaf", per_leaf, "Items per class");
  gen_blobs->add_option("--dim", dim, "Feature dimension");
  gen_blobs->add_option("--seed", blob_seed, "Seed");
  gen_blobs->add_option("--out", blobs_out, "Output directory")->required();

  std::string serve_dataset, serve_config, host = "127.0.0.1", state_dir = "hke-state";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve the annotation HTTP API");
  serve->add_option("--dataset", serve_dataset, "Dataset CSV, or 'shapes' / 'blobs'")->required();
  serve->add_option("--config", serve_config, "Default experiment config JSON");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--state-dir", state_dir, "Directory holding session state");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, out_dir);
    if (*ablate) return cmd_ablate(dataset_arg, seed, ablate_config, ablate_out);
    if (*export_tree) return cmd_export_tree(run_dir, format);
    if (*gen_shapes) return cmd_gen_shapes(shape_seed, shapes_out, svg);
    if (*gen_blobs) return cmd_gen_blobs(taxonomy, per_leaf, dim, blob_seed, blobs_out);
    if (*serve) return cmd_serve(serve_dataset, serve_config, port, host, state_dir);
  } catch (const hke::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
