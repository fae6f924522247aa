#pragma once

#include <string>

#include "fact/experiment.hpp"

namespace fact {

// Deterministic per-run results (no timing column, so equal configs and seeds
// reproduce the file bit for bit).
std::string results_csv(const ResultTable& table);
// Mean and sample std of target accuracy per config.
std::string summary_csv(const ResultTable& table);
// Wall times, kept out of results.csv on purpose.
std::string timings_csv(const ResultTable& table);

// Inverse of results_csv (traces and timings are not representable in the
// CSV and come back empty). Throws FormatError on malformed input.
ResultTable parse_results_csv(const std::string& text);

// Writes results.csv, summary.csv, timings.csv, an accuracy plot over the
// sweep axis (line plot with error bars for numeric sweep labels, bar chart
// otherwise) and one idd-vs-round trace plot per config. Creates out_dir.
void emit_report(const ResultTable& table, const std::string& out_dir);

}  // namespace fact
