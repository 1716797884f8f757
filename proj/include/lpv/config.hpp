#pragma once

#include <json.hpp>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lpv/core.hpp"

namespace lpv {

using json = nlohmann::json;

// named rule-set presets; membership follows the published configurations
inline const std::set<std::string> kRuleSetNames = {
    "cifar10_reduced", "cifar10_full", "cifar100_reduced", "cifar100_full",
    "hebbian_only"};

struct run_config {
  // experiment-level switches
  std::string memory_mode = "hopfield";  // the only implemented mode
  int batch_size = 16;
  int epochs = 100;
  std::vector<int> seeds = {0};
  bool stop_gradient = true;
  bool deterministic = false;
  bool augmentation = false;

  // dataset
  std::string dataset = "cifar10";  // cifar10 | cifar100 | synthetic
  std::string data_dir;
  int subset_train = 0;  // 0 = all
  int subset_test = 0;
  double val_fraction = 0.10;

  // architecture
  std::string rule_set = "cifar10_full";
  int lateral_radius = 2;
  int memory_slots = 96;
  bool single_stream = false;   // Hebbian-only baseline uses one Gabor stream
  int single_stream_index = 3;  // centre frequency of the bank

  // component toggles (ablation surface)
  bool hebbian_on = true;
  bool anti_hebbian_on = true;
  bool free_energy_on = true;
  bool recursive_on = true;
  bool memory_on = true;
  bool feedback_on = true;
  bool side_branch_on = true;
  bool div_norm_on = true;
  bool homeostasis_on = true;
  std::string gate = "saliency";  // saliency | uniform | random
  bool rho_dynamics = true;       // per-neuron plasticity gain dynamics
  bool extended_rules = false;    // holographic / hyperbolic / wavelet

  // plasticity rates (shipped defaults; one entry per published value)
  double alpha_h = 5e-3;
  double delta_h = 1e-4;
  double alpha_a = 2e-3;
  double lambda_f = 3e-3;
  double alpha_r = 1e-3;
  double delta_r = 1e-4;
  double eta_d = 2e-3;
  double delta_d = 1e-4;
  double alpha_d = 5e-4;
  double eta_x = 1e-3;
  double delta_x = 1e-4;
  double eta_k = 1e-3;
  double delta_k = 5e-4;
  double eta_v = 1e-3;
  double delta_v = 5e-4;
  double eta_q = 1e-3;
  double delta_q = 1e-4;
  double eta_fb = 5e-4;
  double delta_fb = 1e-4;
  double eta_g = 0.01;
  double kappa_g = 0.1;
  double hopfield_beta = 0.5;
  double rho_clip_lo = 0.5;
  double rho_clip_hi = 1.5;
  double probe_lr = 3e-4;
  double probe_weight_decay = 1e-4;

  // supplementary-rule rates (extended configuration only)
  double eta_hrr = 1e-4;
  double alpha_c_hrr = 0.5;
  double lambda_hyp = 1e-5;
  double tau_wavelet = 0.01;
  double lambda_wavelet = 1e-4;

  // hierarchy shape
  double alpha_inhib = 0.2;
  double alpha_div = 1.0;
  double beta_div = 0.5;
  double w_g = 0.5;
  double w_l = 0.5;
  int fixed_point_iters = 3;

  // io
  std::string out_dir = "runs";

  // test fixture: corrupts the stop-gradient barrier so the start-of-run
  // audit must abort
  bool break_barrier_fixture = false;

  int class_count() const { return dataset == "cifar100" ? 100 : 10; }

  void zero_all_plasticity() {
    alpha_h = alpha_a = lambda_f = alpha_r = 0.0;
    eta_d = eta_x = eta_k = eta_v = eta_q = eta_fb = 0.0;
    eta_hrr = lambda_hyp = lambda_wavelet = 0.0;
  }
};

inline void apply_rule_set(run_config& c, const std::string& name) {
  if (!kRuleSetNames.count(name))
    throw config_error("unknown rule set: " + name);
  c.rule_set = name;
  c.single_stream = false;
  c.hebbian_on = true;
  c.anti_hebbian_on = true;
  c.free_energy_on = true;
  c.memory_on = true;
  c.div_norm_on = true;
  c.homeostasis_on = true;
  if (name == "hebbian_only") {
    // single Gabor frequency stream, Hebbian rule only, no side pathway,
    // no memory, no feedback; normalisation machinery stays active
    c.single_stream = true;
    c.anti_hebbian_on = false;
    c.free_energy_on = false;
    c.recursive_on = false;
    c.memory_on = false;
    c.feedback_on = false;
    c.side_branch_on = false;
  } else if (name == "cifar10_reduced") {
    c.recursive_on = false;
    c.feedback_on = false;
    c.side_branch_on = false;
  } else if (name == "cifar10_full") {
    c.recursive_on = true;
    c.feedback_on = true;
    c.side_branch_on = true;
  } else if (name == "cifar100_reduced") {
    c.recursive_on = true;
    c.feedback_on = true;
    c.side_branch_on = false;
  } else {  // cifar100_full
    c.recursive_on = true;
    c.feedback_on = true;
    c.side_branch_on = true;
  }
}

// overrides used for all published experiments
inline void apply_paper_preset(run_config& c) {
  c.memory_mode = "hopfield";
  c.batch_size = 4;
  c.epochs = 300;
  c.seeds.clear();
  for (int s = 0; s <= 13; ++s) c.seeds.push_back(s);
  c.stop_gradient = true;
  c.deterministic = true;
  c.augmentation = false;
}

// ablation surface: component names -> config mutation
inline const std::vector<std::string> kAblatableComponents = {
    "anti_hebbian", "free_energy", "recursive",   "memory",
    "feedback",     "side_branch", "div_norm",    "homeostasis",
    "uniform_gate", "random_gate"};

inline run_config disable_component(const run_config& base,
                                    const std::string& component) {
  run_config c = base;
  if (component == "anti_hebbian")
    c.anti_hebbian_on = false;
  else if (component == "free_energy")
    c.free_energy_on = false;
  else if (component == "recursive")
    c.recursive_on = false;
  else if (component == "memory")
    c.memory_on = false;
  else if (component == "feedback")
    c.feedback_on = false;
  else if (component == "side_branch")
    c.side_branch_on = false;
  else if (component == "div_norm")
    c.div_norm_on = false;
  else if (component == "homeostasis")
    c.homeostasis_on = false;
  else if (component == "uniform_gate")
    c.gate = "uniform";
  else if (component == "random_gate")
    c.gate = "random";
  else
    throw config_error("unknown ablation component: " + component);
  return c;
}

inline void validate(const run_config& c) {
  if (c.memory_mode == "hebbian_sa")
    throw config_error(
        "memory_mode 'hebbian_sa' is not supported by this build; only "
        "'hopfield' is implemented");
  if (c.memory_mode != "hopfield")
    throw config_error("unknown memory_mode: " + c.memory_mode);
  if (c.augmentation)
    throw config_error("augmentation is rejected: training uses raw images");
  if (!c.stop_gradient)
    throw config_error(
        "stop_gradient=false is an unsupported reference mode; the "
        "representation is never gradient-trained");
  if (c.batch_size < 1) throw config_error("batch_size must be >= 1");
  if (c.epochs < 0) throw config_error("epochs must be >= 0");
  if (c.seeds.empty()) throw config_error("at least one seed required");
  if (!kRuleSetNames.count(c.rule_set))
    throw config_error("unknown rule set: " + c.rule_set);
  if (c.gate != "saliency" && c.gate != "uniform" && c.gate != "random")
    throw config_error("gate must be saliency|uniform|random");
  if (c.dataset != "cifar10" && c.dataset != "cifar100" &&
      c.dataset != "synthetic")
    throw config_error("dataset must be cifar10|cifar100|synthetic");
  if (c.val_fraction < 0.0 || c.val_fraction > 0.5)
    throw config_error("val_fraction must be in [0, 0.5]");
}

inline json to_json(const run_config& c) {
  json j;
  j["memory_mode"] = c.memory_mode;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seeds"] = c.seeds;
  j["stop_gradient"] = c.stop_gradient;
  j["deterministic"] = c.deterministic;
  j["augmentation"] = c.augmentation;
  j["dataset"] = c.dataset;
  j["data_dir"] = c.data_dir;
  j["subset_train"] = c.subset_train;
  j["subset_test"] = c.subset_test;
  j["val_fraction"] = c.val_fraction;
  j["rule_set"] = c.rule_set;
  j["lateral_radius"] = c.lateral_radius;
  j["memory_slots"] = c.memory_slots;
  j["single_stream"] = c.single_stream;
  j["single_stream_index"] = c.single_stream_index;
  j["hebbian_on"] = c.hebbian_on;
  j["anti_hebbian_on"] = c.anti_hebbian_on;
  j["free_energy_on"] = c.free_energy_on;
  j["recursive_on"] = c.recursive_on;
  j["memory_on"] = c.memory_on;
  j["feedback_on"] = c.feedback_on;
  j["side_branch_on"] = c.side_branch_on;
  j["div_norm_on"] = c.div_norm_on;
  j["homeostasis_on"] = c.homeostasis_on;
  j["gate"] = c.gate;
  j["rho_dynamics"] = c.rho_dynamics;
  j["extended_rules"] = c.extended_rules;
  j["alpha_h"] = c.alpha_h;
  j["delta_h"] = c.delta_h;
  j["alpha_a"] = c.alpha_a;
  j["lambda_f"] = c.lambda_f;
  j["alpha_r"] = c.alpha_r;
  j["delta_r"] = c.delta_r;
  j["eta_d"] = c.eta_d;
  j["delta_d"] = c.delta_d;
  j["alpha_d"] = c.alpha_d;
  j["eta_x"] = c.eta_x;
  j["delta_x"] = c.delta_x;
  j["eta_k"] = c.eta_k;
  j["delta_k"] = c.delta_k;
  j["eta_v"] = c.eta_v;
  j["delta_v"] = c.delta_v;
  j["eta_q"] = c.eta_q;
  j["delta_q"] = c.delta_q;
  j["eta_fb"] = c.eta_fb;
  j["delta_fb"] = c.delta_fb;
  j["eta_g"] = c.eta_g;
  j["kappa_g"] = c.kappa_g;
  j["hopfield_beta"] = c.hopfield_beta;
  j["rho_clip_lo"] = c.rho_clip_lo;
  j["rho_clip_hi"] = c.rho_clip_hi;
  j["probe_lr"] = c.probe_lr;
  j["probe_weight_decay"] = c.probe_weight_decay;
  j["eta_hrr"] = c.eta_hrr;
  j["alpha_c_hrr"] = c.alpha_c_hrr;
  j["lambda_hyp"] = c.lambda_hyp;
  j["tau_wavelet"] = c.tau_wavelet;
  j["lambda_wavelet"] = c.lambda_wavelet;
  j["alpha_inhib"] = c.alpha_inhib;
  j["alpha_div"] = c.alpha_div;
  j["beta_div"] = c.beta_div;
  j["w_g"] = c.w_g;
  j["w_l"] = c.w_l;
  j["fixed_point_iters"] = c.fixed_point_iters;
  j["out_dir"] = c.out_dir;
  return j;
}

inline run_config config_from_json(const json& j) {
  run_config c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("memory_mode", c.memory_mode);
  get("batch_size", c.batch_size);
  get("epochs", c.epochs);
  get("seeds", c.seeds);
  get("stop_gradient", c.stop_gradient);
  get("deterministic", c.deterministic);
  get("augmentation", c.augmentation);
  get("dataset", c.dataset);
  get("data_dir", c.data_dir);
  get("subset_train", c.subset_train);
  get("subset_test", c.subset_test);
  get("val_fraction", c.val_fraction);
  if (j.contains("rule_set")) apply_rule_set(c, j.at("rule_set"));
  get("lateral_radius", c.lateral_radius);
  get("memory_slots", c.memory_slots);
  get("single_stream", c.single_stream);
  get("single_stream_index", c.single_stream_index);
  get("hebbian_on", c.hebbian_on);
  get("anti_hebbian_on", c.anti_hebbian_on);
  get("free_energy_on", c.free_energy_on);
  get("recursive_on", c.recursive_on);
  get("memory_on", c.memory_on);
  get("feedback_on", c.feedback_on);
  get("side_branch_on", c.side_branch_on);
  get("div_norm_on", c.div_norm_on);
  get("homeostasis_on", c.homeostasis_on);
  get("gate", c.gate);
  get("rho_dynamics", c.rho_dynamics);
  get("extended_rules", c.extended_rules);
  get("alpha_h", c.alpha_h);
  get("delta_h", c.delta_h);
  get("alpha_a", c.alpha_a);
  get("lambda_f", c.lambda_f);
  get("alpha_r", c.alpha_r);
  get("delta_r", c.delta_r);
  get("eta_d", c.eta_d);
  get("delta_d", c.delta_d);
  get("alpha_d", c.alpha_d);
  get("eta_x", c.eta_x);
  get("delta_x", c.delta_x);
  get("eta_k", c.eta_k);
  get("delta_k", c.delta_k);
  get("eta_v", c.eta_v);
  get("delta_v", c.delta_v);
  get("eta_q", c.eta_q);
  get("delta_q", c.delta_q);
  get("eta_fb", c.eta_fb);
  get("delta_fb", c.delta_fb);
  get("eta_g", c.eta_g);
  get("kappa_g", c.kappa_g);
  get("hopfield_beta", c.hopfield_beta);
  get("rho_clip_lo", c.rho_clip_lo);
  get("rho_clip_hi", c.rho_clip_hi);
  get("probe_lr", c.probe_lr);
  get("probe_weight_decay", c.probe_weight_decay);
  get("eta_hrr", c.eta_hrr);
  get("alpha_c_hrr", c.alpha_c_hrr);
  get("lambda_hyp", c.lambda_hyp);
  get("tau_wavelet", c.tau_wavelet);
  get("lambda_wavelet", c.lambda_wavelet);
  get("alpha_inhib", c.alpha_inhib);
  get("alpha_div", c.alpha_div);
  get("beta_div", c.beta_div);
  get("w_g", c.w_g);
  get("w_l", c.w_l);
  get("fixed_point_iters", c.fixed_point_iters);
  get("out_dir", c.out_dir);
  return c;
}

// hash of the canonicalised (sorted-key, fixed-format) config text; stable
// across platforms because only serialised text is hashed
inline std::uint64_t config_hash(const run_config& c) {
  return fnv1a64(to_json(c).dump());
}

}  // namespace lpv
