#pragma once

#include <string>
#include <vector>

#include "kdistill/evalsuite.hpp"
#include "kdistill/util.hpp"

namespace kdistill {

// One summary row per editor, Table-1/3 shaped. Values are exact; rounding
// to one decimal happens only when rendering.
struct EditorMetrics {
  std::string editor;
  double target_pre = 0.0;
  double target_post = 0.0;
  double spec_pre = 0.0;
  double spec_post = 0.0;
  bool has_accuracy = false;
  double acc_pre = 0.0;
  double acc_post = 0.0;
  bool has_definition_ppl = false;
  double def_ppl_pre = 0.0;
  double def_ppl_post = 0.0;

  double target_delta() const { return compute_delta(target_pre, target_post); }
  double spec_delta() const { return compute_delta(spec_pre, spec_post); }
  double acc_delta() const { return compute_delta(acc_pre, acc_post); }
};

struct PerProbeRow {
  std::string probe_id;
  std::string editor;
  double pre = 0.0;
  double post = 0.0;
};

// PPL and percent values render with one decimal, as in the paper's tables.
std::string format_1dp(double v);

void write_summary_csv(const std::string& path, const std::vector<EditorMetrics>& rows);
std::string render_summary_table(const std::vector<EditorMetrics>& rows);

void write_per_probe_jsonl(const std::string& path, const std::vector<PerProbeRow>& rows);

void write_nll_reduction_csv(const std::string& path, const std::vector<NllReductionRecord>& records);

struct SweepRow {
  std::string axis;
  double value = 0.0;
  std::uint64_t seed = 0;
  double target_pre = 0.0;
  double target_post = 0.0;
  double specificity_pre = 0.0;
  double specificity_post = 0.0;
  std::string status = "ok";
};

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);
// Mean with min/max range per axis value over seeds, ok rows only.
void write_sweep_aggregate_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace kdistill
