#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "stormsim/harness/experiment.hpp"
#include "stormsim/harness/fit.hpp"
#include "stormsim/harness/report.hpp"

namespace {

constexpr int kExitUsage = 2;

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::invalid_argument("cannot write output file: " + path);
  out << text;
}

std::vector<std::uint64_t> parse_values(const std::string& csv) {
  std::vector<std::uint64_t> out;
  std::istringstream in(csv);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoull(tok));
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stormsim: RDMA fabric simulator and Storm dataplane harness"};
  app.require_subcommand(1);

  std::string config_path, out_path, axis_name, values_csv;
  std::string anchors_path, template_path, preset_out;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  double drop_target = 0;
  bool drop_set = false;

  auto* run = app.add_subcommand("run", "run one experiment config");
  run->add_option("--config", config_path, "experiment config file")
      ->required();
  run->add_option("--seed", seed_override, "override the config seed")
      ->each([&](const std::string&) { seed_set = true; });
  run->add_option("--out", out_path, "results CSV path (default stdout)");

  auto* sweep = app.add_subcommand("sweep", "run a config across axis values");
  sweep->add_option("--config", config_path, "experiment config file")
      ->required();
  sweep->add_option("--axis", axis_name, "msg_size | connections | nodes")
      ->required();
  sweep->add_option("--values", values_csv, "comma-separated axis values")
      ->required();
  sweep->add_option("--seed", seed_override, "override the config seed")
      ->each([&](const std::string&) { seed_set = true; });
  sweep->add_option("--out", out_path, "results CSV path (default stdout)");

  auto* fit = app.add_subcommand("fit", "fit preset constants to anchors");
  fit->add_option("--anchors", anchors_path, "anchor CSV (op,payload,ns[,w])")
      ->required();
  fit->add_option("--template", template_path,
                  "preset supplying the platform constants")
      ->required();
  fit->add_option("--out", preset_out, "fitted preset output path");
  fit->add_option("--drop-target", drop_target,
                  "also calibrate miss overlap to this 8->64 drop")
      ->each([&](const std::string&) { drop_set = true; });

  auto* report = app.add_subcommand("report", "render a results CSV");
  report->add_option("--results", config_path, "results CSV file")->required();
  report->add_option("--out", out_path, "report output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run || *sweep) {
      stormsim::harness::ExperimentConfig cfg =
          stormsim::harness::load_config(config_path);
      if (seed_set) cfg.seed = seed_override;

      const char* log_path = std::getenv("STORMSIM_LOG");
      stormsim::harness::RunOutput out;
      if (*run) {
        out = stormsim::harness::run_experiment(cfg, log_path != nullptr);
      } else {
        out = stormsim::harness::run_sweep(
            cfg, stormsim::harness::parse_axis(axis_name),
            parse_values(values_csv));
      }
      if (log_path && !out.event_log.empty()) {
        std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
        log << out.event_log;
      }
      std::string target = out_path.empty() ? cfg.results_path : out_path;
      write_or_print(target, stormsim::harness::results_csv(out.rows));
      return 0;
    }

    if (*fit) {
      auto anchors = stormsim::harness::load_anchor_csv(anchors_path);
      auto tmpl = stormsim::nic::load_preset(template_path);
      auto result = stormsim::harness::fit_preset(anchors, tmpl);
      if (drop_set) {
        auto cal =
            stormsim::harness::calibrate_drop(result.preset, drop_target);
        result.preset = cal.preset;
        std::cout << "drop calibration: target " << drop_target
                  << ", achieved " << cal.achieved_drop
                  << ", miss_overlap_factor "
                  << result.preset.miss_overlap_factor << "\n";
      }
      for (const auto& r : result.residuals) {
        std::cout << (r.anchor.op == stormsim::harness::AnchorOp::RR ? "rr"
                                                                     : "rpc")
                  << " @" << r.anchor.payload_bytes << "B: target "
                  << r.anchor.target_ns << " ns, model " << r.model_ns
                  << " ns, residual " << r.relative * 100.0 << "%\n";
      }
      std::cout << "max relative residual: " << result.max_relative * 100.0
                << "%\n";
      if (!preset_out.empty())
        stormsim::nic::save_preset(result.preset, preset_out);
      return 0;
    }

    if (*report) {
      std::string rendered =
          stormsim::harness::render_report(read_file(config_path));
      write_or_print(out_path, rendered);
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
