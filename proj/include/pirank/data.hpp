#pragma once

// LETOR / SVMLight-with-qid ingestion, query grouping with padding, and the
// synthetic learning-to-rank generator.
//
// Line grammar:
//   <label> qid:<token> <fid>:<value> ... [# comment]
// fids are positive and strictly increasing within a line; missing fids are 0.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pirank/tensor.hpp"

namespace pirank::data {

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
  DataError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

struct QueryGroup {
  std::string qid;
  Tensor features;                 // (L, m)
  std::vector<double> labels;      // L
  std::vector<std::uint8_t> mask;  // L, 1 = real item

  std::size_t size() const { return labels.size(); }
  std::size_t num_valid() const;
  std::size_t num_features() const { return features.rank() == 2 ? features.dim(1) : 0; }
  /// Labels of real items, in order.
  std::vector<double> valid_labels() const;
};

struct Dataset {
  std::vector<QueryGroup> groups;
  std::size_t num_features = 0;

  std::size_t num_items() const;
};

/// Groups by qid in first-appearance order. The feature width is the largest
/// fid seen unless `num_features` is given (a larger fid is then an error).
Dataset parse_letor(std::istream& in, std::optional<std::size_t> num_features = {});
/// Reads a file; names ending in ".gz" are decompressed.
Dataset load_letor(const std::filesystem::path& path,
                   std::optional<std::size_t> num_features = {});
/// Writes every real item with all feature columns; values use the shortest
/// round-trip decimal form.
void write_letor(std::ostream& out, const Dataset& data);
void save_letor(const std::filesystem::path& path, const Dataset& data);

enum class OverflowPolicy { truncate_tail, error };

/// Pads with masked zero rows up to `list_size`, or truncates extra items in
/// file order (or throws DataError, per policy).
QueryGroup pad_truncate(const QueryGroup& group, std::size_t list_size,
                        OverflowPolicy policy = OverflowPolicy::truncate_tail);
Dataset pad_truncate(const Dataset& data, std::size_t list_size,
                     OverflowPolicy policy = OverflowPolicy::truncate_tail);

struct Distribution {
  enum class Kind { uniform, normal };
  Kind kind = Kind::uniform;
  double a = 0.0;  // uniform: low, normal: mean
  double b = 1.0;  // uniform: high, normal: stddev

  /// "uniform:<lo>:<hi>" or "normal:<mean>:<stddev>".
  static Distribution parse(const std::string& text);
  std::string str() const;
};

struct SyntheticConfig {
  std::size_t num_queries = 100;
  std::size_t list_size = 20;
  std::size_t doc_features = 10;
  std::size_t query_features = 2;
  double label_low = 0.0;
  double label_high = 4.0;
  Distribution phi;  // document features
  Distribution psi;  // query coefficients
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per query, drawing from one Rng(seed) stream in this order:
///   1. L x m_d document features from phi, row-major;
///   2. m_q distinct columns by partial Fisher-Yates over 0..m_d-1
///      (position t swaps with t + uniform_int(m_d - t));
///   3. m_q coefficients gamma from psi;
///   4. y = clamp(sum_k gamma_k x[:, c_k], low, high);
///   5. gamma appended to every document's features (width m_d + m_q).
Dataset gen_synthetic(const SyntheticConfig& cfg);

/// key=value lines describing the generator settings.
std::string synthetic_metadata(const SyntheticConfig& cfg);

struct Split {
  Dataset train, valid, test;
};

/// Seeded shuffle of whole queries, then contiguous slices with
/// round(f0 n) and round(f1 n) queries for train and validation.
Split split(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed);

}  // namespace pirank::data
