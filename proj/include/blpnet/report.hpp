#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "blpnet/nn.hpp"

namespace blpnet {

struct ReportRow {
  std::string layer;
  Shape shape;                           // output shape without the batch axis
  std::size_t derived = 0;               // from the counting rules
  std::optional<std::size_t> published;  // printed column value, when the table has the row
  bool matches() const { return !published || *published == derived; }
};

struct ParamReport {
  std::string title;
  std::vector<ReportRow> rows;
  std::size_t derived_total = 0;
  std::size_t published_column_sum = 0;  // sum of the printed per-layer values
  std::string published_total;           // as printed, e.g. "627k"
  std::vector<std::string> notes;
  std::size_t mismatches() const;
};

// OCR classifier rows in table order (activations omitted), against the printed column.
ParamReport ocr_param_report();
// Both detector head branches for a 1056-wide pooled feature.
ParamReport detector_param_report();

std::string format_report(const ParamReport& report);

}  // namespace blpnet
