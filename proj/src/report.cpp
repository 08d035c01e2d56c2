#include "kdistill/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace kdistill {

std::string format_1dp(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  // Avoid the "-0.0" artifact for tiny negative deltas.
  if (std::string(buf) == "-0.0") return "0.0";
  return buf;
}

namespace {

std::string csv_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

void write_summary_csv(const std::string& path, const std::vector<EditorMetrics>& rows) {
  std::ostringstream out;
  out << "editor,target_pre,target_post,target_delta,spec_pre,spec_post,spec_delta,"
         "acc_pre,acc_post,acc_delta,def_ppl_pre,def_ppl_post\n";
  for (const auto& r : rows) {
    out << r.editor << ',' << csv_num(r.target_pre) << ',' << csv_num(r.target_post) << ','
        << csv_num(r.target_delta()) << ',' << csv_num(r.spec_pre) << ',' << csv_num(r.spec_post)
        << ',' << csv_num(r.spec_delta()) << ',';
    if (r.has_accuracy) {
      out << csv_num(r.acc_pre) << ',' << csv_num(r.acc_post) << ',' << csv_num(r.acc_delta());
    } else {
      out << ",,";
    }
    out << ',';
    if (r.has_definition_ppl) {
      out << csv_num(r.def_ppl_pre) << ',' << csv_num(r.def_ppl_post);
    } else {
      out << ',';
    }
    out << '\n';
  }
  write_file(path, out.str());
}

std::string render_summary_table(const std::vector<EditorMetrics>& rows) {
  std::ostringstream out;
  char line[256];
  out << "editor                      target (delta)        spec. (delta)         acc % (delta)\n";
  for (const auto& r : rows) {
    std::string target = format_1dp(r.target_post) + " (" + format_1dp(r.target_delta()) + ")";
    std::string spec = format_1dp(r.spec_post) + " (" + format_1dp(r.spec_delta()) + ")";
    std::string acc = r.has_accuracy ? format_1dp(100.0 * r.acc_post) + " (" +
                                           format_1dp(100.0 * r.acc_delta()) + ")"
                                     : "-";
    std::snprintf(line, sizeof(line), "%-26s  %-20s  %-20s  %-20s\n", r.editor.c_str(),
                  target.c_str(), spec.c_str(), acc.c_str());
    out << line;
  }
  return out.str();
}

void write_per_probe_jsonl(const std::string& path, const std::vector<PerProbeRow>& rows) {
  std::vector<json> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    out.push_back({{"probe_id", r.probe_id},
                   {"editor", r.editor},
                   {"pre", r.pre},
                   {"post", r.post},
                   {"delta", compute_delta(r.pre, r.post)}});
  }
  write_jsonl(path, out);
}

void write_nll_reduction_csv(const std::string& path, const std::vector<NllReductionRecord>& records) {
  std::ostringstream out;
  out << "token,in_definition,nll_unc,reduction\n";
  for (const auto& r : records) {
    out << r.token << ',' << (r.in_definition ? 1 : 0) << ',' << csv_num(r.nll_unconditioned) << ','
        << csv_num(r.reduction) << '\n';
  }
  write_file(path, out.str());
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "axis,value,seed,target_pre,target_post,specificity_pre,specificity_post,status\n";
  for (const auto& r : rows) {
    out << r.axis << ',' << csv_num(r.value) << ',' << r.seed << ',' << csv_num(r.target_pre) << ','
        << csv_num(r.target_post) << ',' << csv_num(r.specificity_pre) << ','
        << csv_num(r.specificity_post) << ',' << r.status << '\n';
  }
  write_file(path, out.str());
}

void write_sweep_aggregate_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::map<double, std::vector<const SweepRow*>> by_value;
  std::string axis = "?";
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    by_value[r.value].push_back(&r);
    axis = r.axis;
  }
  std::ostringstream out;
  out << "axis,value,n_seeds,target_post_mean,target_post_min,target_post_max,"
         "specificity_post_mean,specificity_post_min,specificity_post_max\n";
  for (const auto& [value, group] : by_value) {
    double t_mean = 0.0, t_min = 1e300, t_max = -1e300;
    double s_mean = 0.0, s_min = 1e300, s_max = -1e300;
    for (const auto* r : group) {
      t_mean += r->target_post;
      t_min = std::min(t_min, r->target_post);
      t_max = std::max(t_max, r->target_post);
      s_mean += r->specificity_post;
      s_min = std::min(s_min, r->specificity_post);
      s_max = std::max(s_max, r->specificity_post);
    }
    const double n = static_cast<double>(group.size());
    out << axis << ',' << csv_num(value) << ',' << group.size() << ',' << csv_num(t_mean / n) << ','
        << csv_num(t_min) << ',' << csv_num(t_max) << ',' << csv_num(s_mean / n) << ','
        << csv_num(s_min) << ',' << csv_num(s_max) << '\n';
  }
  write_file(path, out.str());
}

}  // namespace kdistill
