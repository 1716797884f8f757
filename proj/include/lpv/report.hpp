#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "lpv/config.hpp"
#include "lpv/stats.hpp"

namespace lpv {

inline constexpr int kReportSchemaVersion = 1;

struct epoch_record {
  int epoch = 0;
  double val_acc = 0;
  double probe_loss = 0;
  double dw_hierarchy = 0, dw_lateral = 0, dw_side = 0, dw_cross = 0,
         dw_memory = 0, dw_feedback = 0;
  double decorrelation = 0;   // mean |off-diagonal| output correlation
  double g_in_band = 0;       // fraction of homeostatic gains in the dead band
  double rho_mean = 1.0;
};

struct run_report {
  int schema_version = kReportSchemaVersion;
  json config;
  std::string config_hash;
  int seed = 0;
  std::vector<epoch_record> epochs;
  double test_acc = 0;
  double ncm_acc = 0;
  std::map<std::string, std::size_t> param_counts;
  std::string weight_checksum;
  std::vector<std::string> notes;
};

inline json to_json(const epoch_record& e) {
  return json{{"epoch", e.epoch},
              {"val_acc", e.val_acc},
              {"probe_loss", e.probe_loss},
              {"dw_hierarchy", e.dw_hierarchy},
              {"dw_lateral", e.dw_lateral},
              {"dw_side", e.dw_side},
              {"dw_cross", e.dw_cross},
              {"dw_memory", e.dw_memory},
              {"dw_feedback", e.dw_feedback},
              {"decorrelation", e.decorrelation},
              {"g_in_band", e.g_in_band},
              {"rho_mean", e.rho_mean}};
}

inline epoch_record epoch_from_json(const json& j) {
  epoch_record e;
  e.epoch = j.at("epoch");
  e.val_acc = j.at("val_acc");
  e.probe_loss = j.at("probe_loss");
  e.dw_hierarchy = j.at("dw_hierarchy");
  e.dw_lateral = j.at("dw_lateral");
  e.dw_side = j.at("dw_side");
  e.dw_cross = j.at("dw_cross");
  e.dw_memory = j.at("dw_memory");
  e.dw_feedback = j.at("dw_feedback");
  e.decorrelation = j.at("decorrelation");
  e.g_in_band = j.at("g_in_band");
  e.rho_mean = j.at("rho_mean");
  return e;
}

inline json to_json(const run_report& r) {
  json j;
  j["schema_version"] = r.schema_version;
  j["config"] = r.config;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  json eps = json::array();
  for (const auto& e : r.epochs) eps.push_back(to_json(e));
  j["epochs"] = eps;
  j["test_acc"] = r.test_acc;
  j["ncm_acc"] = r.ncm_acc;
  j["param_counts"] = r.param_counts;
  j["weight_checksum"] = r.weight_checksum;
  j["notes"] = r.notes;
  return j;
}

inline run_report report_from_json(const json& j) {
  run_report r;
  r.schema_version = j.at("schema_version");
  if (r.schema_version != kReportSchemaVersion)
    throw io_error("run report: unsupported schema version");
  r.config = j.at("config");
  r.config_hash = j.at("config_hash");
  r.seed = j.at("seed");
  for (const auto& e : j.at("epochs")) r.epochs.push_back(epoch_from_json(e));
  r.test_acc = j.at("test_acc");
  r.ncm_acc = j.at("ncm_acc");
  r.param_counts =
      j.at("param_counts").get<std::map<std::string, std::size_t>>();
  r.weight_checksum = j.at("weight_checksum");
  r.notes = j.at("notes").get<std::vector<std::string>>();
  return r;
}

inline void write_report(const run_report& r, const std::string& path) {
  std::filesystem::create_directories(
      std::filesystem::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw io_error("write_report: cannot write " + path);
  out << to_json(r).dump(2) << "\n";
}

inline run_report load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("load_report: cannot open " + path);
  json j;
  in >> j;
  return report_from_json(j);
}

inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// per-epoch learning-curve data across seeds; one optional leading row
// carries the frozen-weights reference accuracy as a constant baseline
inline void write_learning_curve_csv(
    const std::vector<run_report>& seed_reports, const std::string& path,
    const run_report* epoch0_reference = nullptr) {
  if (seed_reports.empty()) throw config_error("learning curve: no reports");
  std::filesystem::create_directories(
      std::filesystem::path(path).parent_path());
  std::ofstream out(path);
  out << "epoch,mean_acc,ci_low,ci_high,config_hash\n";
  if (epoch0_reference) {
    out << 0 << "," << format_fixed(epoch0_reference->test_acc) << ","
        << format_fixed(epoch0_reference->test_acc) << ","
        << format_fixed(epoch0_reference->test_acc) << ","
        << epoch0_reference->config_hash << "\n";
  }
  const std::size_t n_epochs = seed_reports.front().epochs.size();
  for (std::size_t e = 0; e < n_epochs; ++e) {
    std::vector<double> accs;
    for (const auto& r : seed_reports) accs.push_back(r.epochs[e].val_acc);
    double m = stats::mean(accs);
    stats::interval ci{m, m};
    if (accs.size() >= 2) ci = stats::bca_ci(accs, 0.95, 2000);
    out << seed_reports.front().epochs[e].epoch << "," << format_fixed(m)
        << "," << format_fixed(ci.low) << "," << format_fixed(ci.high) << ","
        << seed_reports.front().config_hash << "\n";
  }
}

// one ablation-table row after seed aggregation
struct ablation_row {
  std::string name;
  double mean_acc = 0;
  stats::stat_report delta;  // vs the full/base configuration
  bool exploratory_pair = false;
};

inline std::string ablation_table_text(const std::string& title,
                                       double base_acc,
                                       const std::vector<ablation_row>& rows) {
  std::ostringstream out;
  out << title << "\n";
  out << "configuration                 acc%    delta     p_holm     d      "
         "power   status\n";
  auto fmt = [](double v, int w, int p) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(p) << std::setw(w) << v;
    return s.str();
  };
  out << std::left << std::setw(28) << "full system" << std::right
      << fmt(base_acc * 100, 7, 2) << "\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(28) << r.name << std::right
        << fmt(r.mean_acc * 100, 7, 2) << fmt(r.delta.mean * 100, 9, 2)
        << fmt(r.delta.p_holm, 11, 4);
    if (std::isinf(r.delta.d))
      out << "       inf";
    else
      out << fmt(r.delta.d, 10, 2);
    out << fmt(r.delta.power, 8, 2) << "   "
        << stats::to_string(r.delta.status);
    if (r.exploratory_pair) out << " (exploratory)";
    out << "\n";
  }
  out << "note: removing a component removes both its computation and its "
         "parameters;\nthe deltas conflate the two (see the side-branch "
         "variants for a partial split).\n";
  return out.str();
}

}  // namespace lpv
