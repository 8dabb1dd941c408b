#pragma once
// Text formats: field dumps (JSON), metrics tables (tab separated) and
// laminate trees. Every number is written with 17 significant digits, so a
// dump read back gives bit-identical doubles.

#include <string>
#include <vector>

#include "ncvx/construct.hpp"
#include "ncvx/geometry.hpp"
#include "ncvx/laminate.hpp"

namespace ncvx {

inline constexpr const char* kFieldSchema = "ncvx.field/1";
inline constexpr const char* kMetricsSchema = "ncvx.metrics/1";
inline constexpr const char* kLaminateSchema = "ncvx.laminate/1";

std::string dump_field(const PiecewiseField& f);
// Throws Error(ConfigError) on malformed input or a schema mismatch.
PiecewiseField load_field(const std::string& text);

std::string metrics_table(const std::vector<StageMetrics>& rows);
std::vector<StageMetrics> parse_metrics(const std::string& text);

// 2x2 trees carry (a1, a2, a3); 3x3 trace-free trees carry the 5 + 3
// coordinates of the symmetric and skew parts.
std::string dump_laminate(const LaminateNode& root);

std::string format_double(double x);

}  // namespace ncvx
