#pragma once

#include <algorithm>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>

#include "lpv/engine.hpp"
#include "lpv/report.hpp"
#include "lpv/synthetic.hpp"

namespace lpv {

// ---------------------------------------------------------------------------
// experiment orchestration: dataset + front-end feature preparation shared
// across runs, the per-seed training loop, the evaluation protocols, and the
// ablation / greedy / batch-sweep drivers.
// ---------------------------------------------------------------------------

using scalar_t = float;  // training scalar; oracle tests instantiate double

struct experiment_data {
  dataset train, test;
  std::vector<frontend_features<scalar_t>> train_features;
  std::vector<frontend_features<scalar_t>> test_features;
};

template <class S>
std::vector<frontend_features<S>> compute_features(const front_end<S>& fe,
                                                   const dataset& d) {
  std::vector<frontend_features<S>> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    out[i] = fe.process(to_planes<S>(d.images[i]));
  return out;
}

// load (or synthesize), subset, and featurize once; shared by every run in
// an experiment
inline experiment_data prepare_data(const run_config& cfg,
                                    std::uint64_t subset_seed = 0) {
  experiment_data d;
  if (cfg.dataset == "synthetic" && cfg.data_dir.empty()) {
    std::size_t n_train = cfg.subset_train ? cfg.subset_train : 5000;
    std::size_t n_test = cfg.subset_test ? cfg.subset_test : 1000;
    d.train = make_synthetic_dataset(n_train, 1234, "train");
    d.test = make_synthetic_dataset(n_test, 1234, "test");
  } else {
    auto v = cfg.dataset == "cifar100" ? cifar_variant::cifar100
                                       : cifar_variant::cifar10;
    if (cfg.data_dir.empty())
      throw config_error("--data-dir required for dataset " + cfg.dataset);
    auto tt = load_cifar_dir(cfg.data_dir, v);
    d.train = std::move(tt.train);
    d.test = std::move(tt.test);
    if (cfg.subset_train > 0)
      d.train = d.train.select(stratified_subset(
          d.train.labels, d.train.class_count(), cfg.subset_train,
          subset_seed));
    if (cfg.subset_test > 0)
      d.test = d.test.select(stratified_subset(
          d.test.labels, d.test.class_count(), cfg.subset_test, subset_seed));
  }
  front_end<scalar_t> fe;
  d.train_features = compute_features(fe, d.train);
  d.test_features = compute_features(fe, d.test);
  return d;
}

template <class S>
batch_input<S> gather_batch(const std::vector<frontend_features<S>>& feats,
                            const std::vector<std::uint32_t>& idx,
                            std::size_t lo, std::size_t hi) {
  batch_input<S> in;
  const int b = static_cast<int>(hi - lo);
  in.r0.resize(kR0Dim, b);
  in.saliency.resize(kPooledArea, b);
  for (int i = 0; i < b; ++i) {
    in.r0.col(i) = feats[idx[lo + i]].r0;
    in.saliency.col(i) = feats[idx[lo + i]].saliency;
  }
  return in;
}

// representation for a list of samples under the current weights (no
// plasticity); batched for throughput, per-sample results are independent
// of the batching
template <class S>
mat<S> compute_representations(const model<S>& m,
                               const std::vector<frontend_features<S>>& feats,
                               const std::vector<std::uint32_t>& idx,
                               int chunk = 64) {
  mat<S> z(m.rep_dim(), idx.size());
  for (std::size_t lo = 0; lo < idx.size(); lo += chunk) {
    std::size_t hi = std::min(idx.size(), lo + chunk);
    batch_input<S> in = gather_batch(feats, idx, lo, hi);
    mat<S> gate = m.make_gate(in.saliency, 0, 0);
    forward_trace<S> t = m.two_pass(in, gate);
    z.middleCols(lo, hi - lo) = t.z_final;
  }
  return z;
}

inline std::vector<std::uint32_t> all_indices(std::size_t n) {
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

template <class S>
double mean_offdiag_correlation(const mat<S>& z) {
  const int n = static_cast<int>(z.rows());
  const int cols = static_cast<int>(z.cols());
  mat<S> centered = z.colwise() - z.rowwise().mean();
  vec<S> sd = (centered.array().square().rowwise().sum() / S(cols))
                  .sqrt()
                  .matrix();
  double acc = 0;
  long pairs = 0;
  for (int i = 0; i < n; ++i) {
    if (sd[i] <= S(0)) continue;
    for (int j = i + 1; j < n; ++j) {
      if (sd[j] <= S(0)) continue;
      double c = centered.row(i).dot(centered.row(j)) /
                 (static_cast<double>(cols) * sd[i] * sd[j]);
      acc += std::abs(c);
      ++pairs;
    }
  }
  return pairs ? acc / pairs : 0.0;
}

struct run_options {
  bool train_representation = true;  // false = frozen-weights baseline
  bool zero_labels = false;          // label-firewall harness
  bool quiet = true;
  std::string checkpoint_path;       // optional final checkpoint
};

struct run_artifacts {
  run_report report;
  model<scalar_t> final_model;
  probe<scalar_t> final_probe;
  std::vector<std::uint32_t> train_idx, val_idx;
};

// one seeded run of the training protocol: per mini-batch pass 1, local
// updates, pass 2, recursive update, stop-gradient, probe step. Labels are
// consumed only by the probe step and the readout evaluations.
inline run_artifacts run_single(const run_config& cfg,
                                const experiment_data& data, int seed,
                                const run_options& opt = {}) {
  validate(cfg);
  run_artifacts art;
  model<scalar_t>& m = art.final_model;
  m.init(cfg, static_cast<std::uint64_t>(seed));
  probe<scalar_t>& pr = art.final_probe;
  pr.init(cfg.class_count(), m.rep_dim(),
          fnv1a64("probe", static_cast<std::uint64_t>(seed)));
  pr.lr = static_cast<scalar_t>(cfg.probe_lr);
  pr.weight_decay = static_cast<scalar_t>(cfg.probe_weight_decay);

  stop_gradient<scalar_t> barrier;
  if (cfg.break_barrier_fixture) barrier.backward_factor = scalar_t(1);

  // start-of-run isolation audit on a diagnostic batch
  {
    std::size_t nb = std::min<std::size_t>(data.train.size(), 16);
    auto idx = all_indices(nb);
    batch_input<scalar_t> in =
        gather_batch(data.train_features, idx, 0, nb);
    std::vector<int> labels(nb);
    for (std::size_t i = 0; i < nb; ++i) labels[i] = data.train.labels[i];
    stop_gradient_audit(m, pr, barrier, in, labels);
  }

  auto split = split_train_val(data.train.size(),
                               static_cast<std::uint64_t>(seed),
                               cfg.val_fraction);
  art.train_idx = split.train;
  art.val_idx = split.val;

  std::vector<int> val_labels(split.val.size());
  for (std::size_t i = 0; i < split.val.size(); ++i)
    val_labels[i] =
        opt.zero_labels ? 0 : data.train.labels[split.val[i]];

  run_report& rep = art.report;
  rep.config = to_json(cfg);
  rep.config_hash = hex64(config_hash(cfg));
  rep.seed = seed;
  if (!cfg.side_branch_on)
    rep.notes.push_back(
        "side branch disabled: representation is 384-dim and the probe is "
        "sized accordingly");
  if (opt.zero_labels)
    rep.notes.push_back("label-firewall harness: probe labels zeroed");

  const std::size_t n_train = split.train.size();
  const int bsz = cfg.batch_size;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    epoch_record er;
    er.epoch = epoch;
    update_norms norms;
    double loss_sum = 0;
    long batches = 0;
    auto perm = epoch_permutation(static_cast<std::uint64_t>(seed),
                                  static_cast<std::uint64_t>(epoch), n_train);
    std::vector<std::uint32_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = split.train[perm[i]];
    for (std::size_t lo = 0; lo < n_train; lo += bsz) {
      std::size_t hi = std::min(n_train, lo + bsz);
      batch_input<scalar_t> in =
          gather_batch(data.train_features, order, lo, hi);
      mat<scalar_t> gate =
          m.make_gate(in.saliency, static_cast<std::uint64_t>(epoch),
                      lo / bsz);
      mat<scalar_t> z_final;
      if (opt.train_representation) {
        forward_trace<scalar_t> t = m.train_batch(in, gate, &norms);
        z_final = std::move(t.z_final);
      } else {
        forward_trace<scalar_t> t = m.two_pass(in, gate);
        z_final = std::move(t.z_final);
      }
      std::vector<int> labels(hi - lo);
      for (std::size_t i = lo; i < hi; ++i)
        labels[i - lo] = opt.zero_labels ? 0 : data.train.labels[order[i]];
      mat<scalar_t> z_bar = barrier.detach(z_final);
      loss_sum += pr.adam_step(z_bar, labels);
      ++batches;
    }

    er.probe_loss = batches ? loss_sum / batches : 0.0;
    er.dw_hierarchy = norms.hierarchy;
    er.dw_lateral = norms.lateral;
    er.dw_side = norms.side;
    er.dw_cross = norms.cross;
    er.dw_memory = norms.memory;
    er.dw_feedback = norms.feedback;

    // held-out validation accuracy and representation diagnostics
    if (!split.val.empty()) {
      mat<scalar_t> zv =
          compute_representations(m, data.train_features, split.val);
      er.val_acc = pr.accuracy(barrier.detach(zv), val_labels);
      std::size_t probe_n = std::min<std::size_t>(split.val.size(), 256);
      er.decorrelation = mean_offdiag_correlation<scalar_t>(
          zv.topRows(kMainDim).leftCols(probe_n));
    }
    int in_band = 0, total_units = 0;
    double rho_sum = 0;
    for (const auto& l : m.layers) {
      for (Eigen::Index i = 0; i < l.gains.size(); ++i) {
        total_units += 1;
        double g = l.gains[i];
        if (g >= kGainBandLo && g <= kGainBandHi) ++in_band;
      }
      rho_sum += l.gain.rho.mean();
    }
    er.g_in_band = total_units ? static_cast<double>(in_band) / total_units
                               : 1.0;
    er.rho_mean = rho_sum / 4.0;
    rep.epochs.push_back(er);
    if (!opt.quiet)
      std::cerr << "[seed " << seed << "] epoch " << epoch << " val_acc "
                << format_fixed(er.val_acc, 4) << " loss "
                << format_fixed(er.probe_loss, 4) << std::endl;
  }

  // final test evaluation: probe accuracy and the prototype readout
  auto test_idx = all_indices(data.test.size());
  mat<scalar_t> zt = compute_representations(m, data.test_features, test_idx);
  std::vector<int> test_labels(data.test.size());
  for (std::size_t i = 0; i < data.test.size(); ++i)
    test_labels[i] = data.test.labels[i];
  rep.test_acc = pr.accuracy(barrier.detach(zt), test_labels);

  mat<scalar_t> ztr =
      compute_representations(m, data.train_features, split.train);
  std::vector<int> train_labels(split.train.size());
  for (std::size_t i = 0; i < split.train.size(); ++i)
    train_labels[i] = data.train.labels[split.train[i]];
  mat<scalar_t> means = ncm_fit(ztr, train_labels, cfg.class_count());
  int hits = 0;
  for (Eigen::Index i = 0; i < zt.cols(); ++i)
    if (ncm_classify<scalar_t>(zt.col(i), means) == test_labels[i]) ++hits;
  rep.ncm_acc = static_cast<double>(hits) / static_cast<double>(zt.cols());

  rep.param_counts = m.param_counts();
  rep.weight_checksum = hex64(m.full_checksum());
  if (!opt.checkpoint_path.empty()) save_checkpoint(m, opt.checkpoint_path);
  return art;
}

// train a fresh probe on the frozen representation; the weights are not
// touched (checksum-verified by the harness)
inline double fresh_probe_accuracy(const model<scalar_t>& m,
                                   const experiment_data& data,
                                   const std::vector<std::uint32_t>& train_idx,
                                   int epochs, int batch_size, int seed) {
  probe<scalar_t> pr;
  pr.init(m.cfg.class_count(), m.rep_dim(),
          fnv1a64("fresh-probe", static_cast<std::uint64_t>(seed)));
  pr.lr = static_cast<scalar_t>(m.cfg.probe_lr);
  pr.weight_decay = static_cast<scalar_t>(m.cfg.probe_weight_decay);
  stop_gradient<scalar_t> barrier;
  mat<scalar_t> z = compute_representations(m, data.train_features, train_idx);
  mat<scalar_t> zb = barrier.detach(z);
  const std::size_t n = train_idx.size();
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    auto perm = epoch_permutation(fnv1a64("fresh-probe-shuffle",
                                          static_cast<std::uint64_t>(seed)),
                                  static_cast<std::uint64_t>(epoch), n);
    for (std::size_t lo = 0; lo < n; lo += batch_size) {
      std::size_t hi = std::min(n, lo + batch_size);
      mat<scalar_t> zbatch(zb.rows(), hi - lo);
      std::vector<int> labels(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) {
        zbatch.col(i - lo) = zb.col(perm[i]);
        labels[i - lo] = data.train.labels[train_idx[perm[i]]];
      }
      pr.adam_step(zbatch, labels);
    }
  }
  auto test_idx = all_indices(data.test.size());
  mat<scalar_t> zt = compute_representations(m, data.test_features, test_idx);
  std::vector<int> test_labels(data.test.size());
  for (std::size_t i = 0; i < data.test.size(); ++i)
    test_labels[i] = data.test.labels[i];
  return pr.accuracy(barrier.detach(zt), test_labels);
}

// never-trained random classifiers on the frozen representation; averaging
// over probes controls the class-clustered variance of a single random
// partition, the expectation stays at chance iff no label information
// reaches the representation
inline double frozen_classifier_accuracy(const model<scalar_t>& m,
                                         const experiment_data& data,
                                         int n_probes, int seed) {
  auto test_idx = all_indices(data.test.size());
  mat<scalar_t> zt = compute_representations(m, data.test_features, test_idx);
  std::vector<int> test_labels(data.test.size());
  for (std::size_t i = 0; i < data.test.size(); ++i)
    test_labels[i] = data.test.labels[i];
  double acc_sum = 0;
  for (int k = 0; k < n_probes; ++k) {
    probe<scalar_t> pr;
    pr.init(m.cfg.class_count(), m.rep_dim(),
            fnv1a64("frozen-classifier",
                    static_cast<std::uint64_t>(seed) * 1000 + k));
    acc_sum += pr.accuracy(zt, test_labels);
  }
  return acc_sum / n_probes;
}

// -------------------------- experiment drivers -----------------------------

struct seed_series {
  run_config cfg;
  std::vector<run_report> reports;
  std::vector<double> test_accs;
  double mean_acc = 0;
};

inline seed_series run_seeds(const run_config& cfg,
                             const experiment_data& data,
                             const run_options& opt = {}) {
  seed_series s;
  s.cfg = cfg;
  for (int seed : cfg.seeds) {
    auto art = run_single(cfg, data, seed, opt);
    s.test_accs.push_back(art.report.test_acc);
    s.reports.push_back(std::move(art.report));
  }
  s.mean_acc = stats::mean(s.test_accs);
  return s;
}

struct ablation_result {
  seed_series base;
  std::vector<ablation_row> rows;
  std::vector<seed_series> variants;
  std::string table_text;
  // pairwise interaction analysis (exploratory)
  struct pair_row {
    std::string a, b;
    double delta_a, delta_b, delta_ab, interaction;
  };
  std::vector<pair_row> pairs;
};

// component-removal matrix with Holm correction across the table; pair
// entries "a+b" request the joint ablation needed for the interaction metric
inline ablation_result run_ablation(const run_config& base_cfg,
                                    const std::vector<std::string>& components,
                                    const experiment_data& data,
                                    const run_options& opt = {}) {
  ablation_result out;
  out.base = run_seeds(base_cfg, data, opt);

  std::vector<std::string> singles, pairs;
  for (const auto& c : components) {
    if (c.find('+') != std::string::npos)
      pairs.push_back(c);
    else
      singles.push_back(c);
  }

  std::map<std::string, seed_series> by_component;
  auto run_component = [&](const std::string& name,
                           const run_config& cfg) -> seed_series& {
    auto it = by_component.find(name);
    if (it != by_component.end()) return it->second;
    return by_component.emplace(name, run_seeds(cfg, data, opt)).first->second;
  };

  std::vector<double> raw_p;
  for (const auto& c : singles) {
    run_config cfg = disable_component(base_cfg, c);
    seed_series& s = run_component(c, cfg);
    ablation_row row;
    row.name = "-" + c;
    row.mean_acc = s.mean_acc;
    row.delta = stats::compare_paired(s.test_accs, out.base.test_accs);
    raw_p.push_back(row.delta.p_raw);
    out.rows.push_back(row);
    out.variants.push_back(s);
  }
  auto holm = stats::holm_correct(raw_p);
  for (std::size_t i = 0; i < out.rows.size(); ++i)
    out.rows[i].delta.p_holm = holm[i];

  for (const auto& pc : pairs) {
    auto plus = pc.find('+');
    std::string a = pc.substr(0, plus), b = pc.substr(plus + 1);
    run_config cfg_a = disable_component(base_cfg, a);
    run_config cfg_b = disable_component(base_cfg, b);
    run_config cfg_ab = disable_component(cfg_a, b);
    double da = run_component(a, cfg_a).mean_acc - out.base.mean_acc;
    double db = run_component(b, cfg_b).mean_acc - out.base.mean_acc;
    double dab =
        run_component(pc, cfg_ab).mean_acc - out.base.mean_acc;
    out.pairs.push_back(
        {a, b, da, db, dab, stats::interaction_strength(da, db, dab)});
  }

  out.table_text =
      ablation_table_text("component ablation", out.base.mean_acc, out.rows);
  return out;
}

struct greedy_step {
  std::string label;
  double mean_acc = 0;
  double delta = 0;           // vs step 0
  double gain_fraction = 0;   // of total gain, annotation only
};

// stepwise component-addition replay; the published construction order
inline std::vector<greedy_step> run_greedy_replay(const run_config& base_cfg,
                                                  const experiment_data& data,
                                                  const run_options& opt = {}) {
  struct step_def {
    std::string label;
    std::function<void(run_config&)> apply;
  };
  std::vector<step_def> steps = {
      {"Hebbian only", [](run_config& c) { apply_rule_set(c, "hebbian_only"); }},
      {"+ Multi-frequency streams",
       [](run_config& c) { c.single_stream = false; }},
      {"+ Memory module", [](run_config& c) { c.memory_on = true; }},
      {"+ Feedback", [](run_config& c) { c.feedback_on = true; }},
      {"+ AHebb + FE",
       [](run_config& c) {
         c.anti_hebbian_on = true;
         c.free_energy_on = true;
       }},
      {"+ Side branch", [](run_config& c) { c.side_branch_on = true; }},
  };
  run_config cfg = base_cfg;
  std::vector<greedy_step> out;
  for (const auto& sd : steps) {
    sd.apply(cfg);
    seed_series s = run_seeds(cfg, data, opt);
    greedy_step g;
    g.label = sd.label;
    g.mean_acc = s.mean_acc;
    out.push_back(g);
  }
  double base = out.front().mean_acc;
  double total = out.back().mean_acc - base;
  for (auto& g : out) {
    g.delta = g.mean_acc - base;
    g.gain_fraction = total != 0.0 ? g.delta / total : 0.0;
  }
  return out;
}

struct sweep_row {
  int batch_size = 0;
  double mean_acc = 0;
  double ci_low = 0, ci_high = 0;
  double delta_vs_b4 = 0;
  long updates_per_epoch = 0;
};

inline std::vector<sweep_row> run_batch_sweep(const run_config& base_cfg,
                                              const std::vector<int>& sizes,
                                              const experiment_data& data,
                                              std::size_t train_size,
                                              const run_options& opt = {}) {
  std::vector<sweep_row> rows;
  for (int bs : sizes) {
    run_config cfg = base_cfg;
    cfg.batch_size = bs;
    seed_series s = run_seeds(cfg, data, opt);
    sweep_row r;
    r.batch_size = bs;
    r.mean_acc = s.mean_acc;
    if (s.test_accs.size() >= 2) {
      auto ci = stats::bca_ci(s.test_accs, 0.95, 2000);
      r.ci_low = ci.low;
      r.ci_high = ci.high;
    } else {
      r.ci_low = r.ci_high = s.mean_acc;
    }
    r.updates_per_epoch = static_cast<long>(train_size / bs);
    rows.push_back(r);
  }
  for (auto& r : rows) {
    for (const auto& b : rows)
      if (b.batch_size == 4) r.delta_vs_b4 = r.mean_acc - b.mean_acc;
  }
  return rows;
}

}  // namespace lpv
