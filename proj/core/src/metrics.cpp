#include "fedala/metrics.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "fedala/error.hpp"

namespace fedala {

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::kInit:
      return "init";
    case Phase::kTrained:
      return "trained";
    case Phase::kServer:
      return "server";
  }
  return "server";
}

Phase phase_from_string(const std::string& s) {
  if (s == "init") return Phase::kInit;
  if (s == "trained") return Phase::kTrained;
  if (s == "server") return Phase::kServer;
  throw SchemaError("unknown phase '" + s + "'");
}

std::string format_float(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

void write_metrics_header(std::ostream& out) { out << kMetricsHeader << '\n'; }

void write_metrics_row(std::ostream& out, const MetricsRecord& r) {
  out << r.run_name << ',' << r.repeat << ',' << r.round << ',' << r.client_id << ','
      << to_string(r.phase) << ',' << format_float(r.loss) << ',' << format_float(r.accuracy) << ','
      << r.comm_params << ',' << r.ala_epochs << ',' << format_float(r.ala_drift) << ','
      << r.wall_ms << '\n';
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& rows) {
  write_metrics_header(out);
  for (const auto& r : rows) write_metrics_row(out, r);
}

void write_ala_telemetry_csv(std::ostream& out, const std::vector<AlaTelemetryRecord>& rows) {
  out << kAlaTelemetryHeader << '\n';
  for (const auto& r : rows) {
    out << r.run_name << ',' << r.repeat << ',' << r.round << ',' << r.client_id << ','
        << (r.initial_stage ? 1 : 0) << ',' << r.epochs << ',' << format_float(r.final_loss) << ','
        << format_float(r.drift) << ',' << format_float(r.mean_weight) << ','
        << format_float(r.frac_at_zero) << ',' << format_float(r.frac_at_one) << ','
        << r.loss_increases << '\n';
  }
}

std::vector<MetricsRecord> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("metrics.csv is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) throw SchemaError("metrics.csv header mismatch");
  std::vector<MetricsRecord> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 11) throw ParseError(line_no, "expected 11 columns");
    try {
      MetricsRecord r;
      r.run_name = cells[0];
      r.repeat = std::stoi(cells[1]);
      r.round = std::stoi(cells[2]);
      r.client_id = std::stoi(cells[3]);
      r.phase = phase_from_string(cells[4]);
      r.loss = std::stod(cells[5]);
      r.accuracy = std::stod(cells[6]);
      r.comm_params = std::stoll(cells[7]);
      r.ala_epochs = std::stoi(cells[8]);
      r.ala_drift = std::stod(cells[9]);
      r.wall_ms = std::stoll(cells[10]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw ParseError(line_no, std::string("bad value: ") + e.what());
    }
  }
  return rows;
}

}  // namespace fedala
