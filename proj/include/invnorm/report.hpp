// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "invnorm/train.hpp"

namespace invnorm {

// Aggregation of evaluation reports into operator-facing artifacts. All
// outputs are deterministic functions of the inputs (no timestamps).
std::string comparison_table_text(const std::vector<EvalReport>& reports);
std::string comparison_table_csv(const std::vector<EvalReport>& reports);
// Grouped bar chart of per-domain accuracy, one group per domain, one bar
// per report.
std::string accuracy_bar_svg(const std::vector<EvalReport>& reports);

EvalReport load_report(const std::string& path);

}  // namespace invnorm
