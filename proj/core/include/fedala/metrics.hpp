#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fedala {

enum class Phase { kInit, kTrained, kServer };

std::string to_string(Phase phase);
Phase phase_from_string(const std::string& s);

// One row of metrics.csv.
//   client rows (client_id >= 0): `loss` is the client's mean training loss
//     (its term of the global objective), `accuracy` its local test accuracy.
//   client_id == -1 with phase init/trained: `loss` is the weighted global
//     objective sum_i k_i L_i over the round's participants (k renormalized),
//     `accuracy` the unweighted mean of their test accuracies.
//   phase server: the aggregated model on the union of client test sets;
//     `comm_params` is the round's total transmitted parameter count.
struct MetricsRecord {
  std::string run_name;
  int repeat = 0;
  int round = 0;
  int client_id = -1;
  Phase phase = Phase::kServer;
  double loss = 0.0;
  double accuracy = 0.0;
  std::int64_t comm_params = 0;
  int ala_epochs = 0;
  double ala_drift = 0.0;
  std::int64_t wall_ms = 0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

// Per-client weight-learning telemetry, written to ala_telemetry.csv.
struct AlaTelemetryRecord {
  std::string run_name;
  int repeat = 0;
  int round = 0;
  int client_id = 0;
  bool initial_stage = false;
  int epochs = 0;
  double final_loss = 0.0;
  double drift = 0.0;
  double mean_weight = 1.0;
  double frac_at_zero = 0.0;
  double frac_at_one = 1.0;
  int loss_increases = 0;

  friend bool operator==(const AlaTelemetryRecord&, const AlaTelemetryRecord&) = default;
};

inline constexpr const char* kMetricsHeader =
    "run_name,repeat,round,client_id,phase,loss,accuracy,comm_params,ala_epochs,ala_drift,wall_ms";
inline constexpr const char* kAlaTelemetryHeader =
    "run_name,repeat,round,client_id,initial_stage,epochs,final_loss,drift,mean_weight,"
    "frac_at_zero,frac_at_one,loss_increases";

// Floats use 9 significant digits ("%.9g").
std::string format_float(double x);

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRecord& r);
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& rows);

void write_ala_telemetry_csv(std::ostream& out, const std::vector<AlaTelemetryRecord>& rows);

// Parses a metrics.csv stream; throws SchemaError/ParseError on malformed input.
std::vector<MetricsRecord> read_metrics_csv(std::istream& in);

}  // namespace fedala
