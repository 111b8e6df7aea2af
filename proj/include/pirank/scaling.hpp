#pragma once

// Wall-clock scaling of fixed-step training in the list size for several
// divide-and-conquer depths.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pirank::scaling {

struct ScalingConfig {
  std::vector<std::size_t> list_sizes{125, 1000, 2197, 3375};
  std::vector<std::size_t> depths{1, 3};
  std::size_t k = 1;
  std::size_t steps = 100;
  std::size_t batch_size = 16;
  double tau = 1.0;
  std::size_t doc_features = 10;
  std::size_t query_features = 2;
  std::vector<std::size_t> hidden;  // empty: linear scorer
  std::uint64_t seed = 0;
  /// Cells that would start after this many seconds of total run time are
  /// skipped (0 = no budget).
  double max_seconds = 0.0;
};

enum class CellStatus { ok, skipped, failed };

struct Cell {
  std::size_t list_size = 0;
  std::size_t depth = 0;
  CellStatus status = CellStatus::ok;
  std::size_t steps = 0;
  double seconds = 0.0;
  std::uint64_t predicted_ops = 0;  // count_ops total for one query
  std::string note;
};

struct Slope {
  std::size_t depth = 0;
  std::size_t points = 0;
  std::optional<double> slope;
};

/// Least-squares slope of log(y) against log(x); nullopt below two points.
std::optional<double> fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Cells run depth-major in the order given. A cell that throws
/// std::bad_alloc is recorded as failed and the run continues.
std::vector<Cell> run_scaling(const ScalingConfig& cfg, std::ostream* progress = nullptr);

std::vector<Slope> fit_slopes(const std::vector<Cell>& cells);

const char* status_name(CellStatus s);

/// Header: list_size,depth,status,steps,seconds,predicted_ops,note
void write_cells_csv(std::ostream& out, const std::vector<Cell>& cells);
/// Header: depth,points,slope
void write_slopes_csv(std::ostream& out, const std::vector<Slope>& slopes);

}  // namespace pirank::scaling
