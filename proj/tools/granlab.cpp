#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "granlab/acceptance.hpp"
#include "granlab/lab.hpp"

namespace {

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  ss.imbue(std::locale::classic());
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t used = 0;
    out.push_back(std::stod(item, &used));
    if (used != item.size()) throw std::invalid_argument("bad sweep value: " + item);
  }
  if (out.empty()) throw std::invalid_argument("no sweep values");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"granularity lab: hierarchical multi-view toy experiments"};
  app.require_subcommand(1);

  std::string config, out, axis, values, level = "fast", name, emit, inject;

  auto* run = app.add_subcommand("run", "train one configuration and write a run directory");
  run->add_option("--config", config, "config JSON")->required();
  run->add_option("--out", out, "output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "coarse and fine sub-runs over one config axis");
  sweep->add_option("--config", config, "base config JSON")->required();
  sweep->add_option("--axis", axis, "k | sigma_zeta | s_star")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("--out", out, "output directory")->required();

  auto* verify = app.add_subcommand("verify", "run the acceptance checks");
  verify->add_option("--level", level, "fast | full")->check(CLI::IsMember({"fast", "full"}));
  verify->add_option("--inject", inject, "deliberate fault for mutation testing")
      ->check(CLI::IsMember({"gradient-scale"}))
      ->group("");

  auto* pre = app.add_subcommand("preset", "write a named preset as a config file");
  pre->add_option("--name", name, "desk | paper-asymptotic")->required();
  pre->add_option("--emit", emit, "output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return granlab::cmd_run(config, out, std::cerr);
    if (*sweep) {
      std::vector<double> vals;
      granlab::SweepAxis ax;
      try {
        vals = parse_values(values);
        ax = granlab::sweep_axis_from_string(axis);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
      }
      return granlab::cmd_sweep(config, ax, vals, out, std::cerr);
    }
    if (*verify) {
      const auto step = inject.empty() ? granlab::default_step() : granlab::off_by_eta_step();
      return granlab::cmd_verify(granlab::verify_level_from_string(level), std::cout, step);
    }
    if (*pre) return granlab::cmd_preset(name, emit, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
