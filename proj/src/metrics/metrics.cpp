#include "cellprog/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cellprog/data.hpp"
#include "cellprog/error.hpp"

namespace cellprog {

namespace {

void check_pair(const std::vector<double>& a, const std::vector<double>& b, const char* who) {
  if (a.empty() || a.size() != b.size()) {
    throw Error(ErrorCode::kUsage, std::string(who) + ": series must have equal non-zero length (got " +
                                       std::to_string(a.size()) + " and " + std::to_string(b.size()) + ")");
  }
}

void check_no_zero(const std::vector<double>& y, const char* who) {
  std::string bad;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] == 0.0) bad += (bad.empty() ? "" : ",") + std::to_string(i);
  if (!bad.empty()) throw Error(ErrorCode::kData, std::string(who) + ": zero reference value at indices " + bad);
}

}  // namespace

std::string task_name(Task task) { return task == Task::kSoh ? "soh" : "rul"; }

double mean_absolute_error(const std::vector<double>& y, const std::vector<double>& yhat) {
  check_pair(y, yhat, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(yhat[i] - y[i]);
  return s / static_cast<double>(y.size());
}

double root_mean_squared_error(const std::vector<double>& y, const std::vector<double>& yhat) {
  check_pair(y, yhat, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (yhat[i] - y[i]) * (yhat[i] - y[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

double mean_absolute_percentage_ratio(const std::vector<double>& y, const std::vector<double>& yhat) {
  check_pair(y, yhat, "mape");
  check_no_zero(y, "mape");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs((yhat[i] - y[i]) / y[i]);
  return s / static_cast<double>(y.size());
}

double median_absolute_error(const std::vector<double>& y, const std::vector<double>& yhat) {
  check_pair(y, yhat, "medae");
  std::vector<double> e(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) e[i] = std::abs(yhat[i] - y[i]);
  std::sort(e.begin(), e.end());
  const std::size_t n = e.size();
  return n % 2 == 1 ? e[n / 2] : 0.5 * (e[n / 2 - 1] + e[n / 2]);
}

MetricsReport compute_metrics(const std::vector<double>& y, const std::vector<double>& yhat, Task task,
                              const std::string& cell_id) {
  MetricsReport r;
  r.cell_id = cell_id;
  r.task = task;
  r.n = y.size();
  r.mae = mean_absolute_error(y, yhat);
  r.rmse = root_mean_squared_error(y, yhat);
  if (task == Task::kSoh) {
    r.mape_ratio = mean_absolute_percentage_ratio(y, yhat);
    r.mape = r.mape_ratio * 100.0;
  } else {
    r.medae = median_absolute_error(y, yhat);
  }
  return r;
}

std::vector<double> soh_error_series(const std::vector<double>& c_real, const std::vector<double>& c_pre) {
  check_pair(c_real, c_pre, "soh_error_series");
  check_no_zero(c_real, "soh_error_series");
  std::vector<double> out(c_real.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (c_real[i] - c_pre[i]) / c_real[i] * 100.0;
  return out;
}

std::vector<double> rul_error_series(const std::vector<double>& rul_real, const std::vector<double>& rul_pre) {
  if (rul_real.size() != rul_pre.size()) throw Error(ErrorCode::kUsage, "rul_error_series: length mismatch");
  std::vector<double> out(rul_real.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rul_real[i] - rul_pre[i];
  return out;
}

std::string metrics_csv(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "cell,task,mae,rmse,mape_or_medae,n\n";
  for (const auto& r : reports) {
    out << r.cell_id << ',' << task_name(r.task) << ',' << format_double(r.mae) << ',' << format_double(r.rmse) << ','
        << format_double(r.task == Task::kSoh ? r.mape : r.medae) << ',' << r.n << '\n';
  }
  return out.str();
}

}  // namespace cellprog
