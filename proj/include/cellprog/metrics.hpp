#pragma once

// Evaluation metrics (MAE, RMSE, MAPE, MedAE) and signed error series.

#include <string>
#include <vector>

namespace cellprog {

enum class Task { kSoh, kRul };

std::string task_name(Task task);

struct MetricsReport {
  std::string cell_id;
  Task task = Task::kSoh;
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;        // percent; SOH only
  double mape_ratio = 0.0;  // the same quantity as a plain ratio
  double medae = 0.0;       // RUL only
  std::size_t n = 0;
};

double mean_absolute_error(const std::vector<double>& y, const std::vector<double>& yhat);
double root_mean_squared_error(const std::vector<double>& y, const std::vector<double>& yhat);
/// Mean of |(yhat - y) / y| as a ratio. Throws ErrorCode::kData listing every
/// index with y == 0.
double mean_absolute_percentage_ratio(const std::vector<double>& y, const std::vector<double>& yhat);
/// Median of |yhat - y|; mean of the middle two for even n.
double median_absolute_error(const std::vector<double>& y, const std::vector<double>& yhat);

/// All inputs must have equal non-zero length (ErrorCode::kUsage otherwise).
/// MAPE is computed for SOH, MedAE for RUL.
MetricsReport compute_metrics(const std::vector<double>& y, const std::vector<double>& yhat, Task task,
                              const std::string& cell_id = "");

/// (real - predicted) / real * 100 per cycle.
std::vector<double> soh_error_series(const std::vector<double>& c_real, const std::vector<double>& c_pre);
/// real - predicted per cycle.
std::vector<double> rul_error_series(const std::vector<double>& rul_real, const std::vector<double>& rul_pre);

/// "cell,task,mae,rmse,mape_or_medae,n" plus one row per report.
std::string metrics_csv(const std::vector<MetricsReport>& reports);

}  // namespace cellprog
