#include "blpnet/report.hpp"

#include <iomanip>
#include <sstream>

#include "blpnet/detector.hpp"
#include "blpnet/ocr.hpp"

namespace blpnet {

std::size_t ParamReport::mismatches() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.matches() ? 0 : 1;
  return n;
}

namespace {

bool reported_layer(LayerKind k) { return k != LayerKind::Relu && k != LayerKind::Softmax; }

}  // namespace

ParamReport ocr_param_report() {
  const auto spec = ocr_network_spec();
  const auto counts = param_count(spec);
  // Trainable-parameter column of the OCR table, one entry per printed row.
  const std::size_t published[] = {80, 0, 0, 2080, 0, 0, 8256, 0, 0, 32896, 0, 0, 131328, 0, 0, 0, 65792, 131584, 0, 25650};

  ParamReport r;
  r.title = "OCR network (64x64x1 input, 60 classes)";
  r.published_total = "397K";
  std::size_t k = 0;
  for (const auto& l : counts.layers) {
    if (!reported_layer(l.kind)) continue;
    ReportRow row{l.name, l.output_shape, l.params, std::nullopt};
    if (k < std::size(published)) row.published = published[k];
    r.published_column_sum += row.published.value_or(0);
    r.rows.push_back(row);
    ++k;
  }
  r.derived_total = counts.total;
  const auto& last = r.rows.back();
  if (!last.matches()) {
    std::ostringstream note;
    note << "final dense: printed " << *last.published << ", rule (512 + 1) x 60 gives " << last.derived << "; "
         << *last.published << " = (512 + 1) x " << *last.published / 513 << ", i.e. a "
         << *last.published / 513 << "-way output";
    r.notes.push_back(note.str());
  }
  std::ostringstream totals;
  totals << "printed column sums to " << r.published_column_sum << " (\"397K\"); rule-derived total " << r.derived_total;
  r.notes.push_back(totals.str());
  return r;
}

ParamReport detector_param_report() {
  const auto head = build_detector_head(1056);
  ParamReport r;
  r.title = "Detector head (pooled 10x10x1056 features)";
  r.published_total = "627k";
  const std::size_t published_class[] = {270592, 32896, 8256, 2080, 66};
  const std::size_t published_bbox[] = {270592, 32896, 8256, 2080, 132};
  std::size_t branch_sum[2] = {0, 0};
  std::size_t b = 0;
  for (const auto* branch : {&head.class_branch, &head.bbox_branch}) {
    const auto counts = param_count(*branch);
    std::size_t k = 0;
    for (const auto& l : counts.layers) {
      if (l.kind != LayerKind::Dense) continue;
      ReportRow row{l.name, l.output_shape, l.params, (b == 0 ? published_class : published_bbox)[k++]};
      r.published_column_sum += *row.published;
      r.rows.push_back(row);
    }
    branch_sum[b++] = counts.total;
    r.derived_total += counts.total;
  }
  // The printed equation doubles the class branch, output layer included.
  const std::size_t equation = 2 * branch_sum[0];
  std::ostringstream note;
  note << "column sum " << r.published_column_sum << "; the doubled-branch equation gives " << equation
       << " (2 x " << branch_sum[0] << "); both round to 627k";
  r.notes.push_back(note.str());
  return r;
}

std::string format_report(const ParamReport& report) {
  std::ostringstream out;
  out << report.title << "\n";
  out << std::left << std::setw(18) << "layer" << std::setw(18) << "shape" << std::right << std::setw(10) << "derived"
      << std::setw(10) << "printed" << "  status\n";
  for (const auto& row : report.rows) {
    out << std::left << std::setw(18) << row.layer << std::setw(18) << to_string(row.shape) << std::right
        << std::setw(10) << row.derived << std::setw(10)
        << (row.published ? std::to_string(*row.published) : std::string("-")) << "  "
        << (row.matches() ? "ok" : "MISMATCH") << "\n";
  }
  out << "total: derived " << report.derived_total << ", printed column sum " << report.published_column_sum
      << ", printed total " << report.published_total << "\n";
  for (const auto& n : report.notes) out << "note: " << n << "\n";
  return out.str();
}

}  // namespace blpnet
