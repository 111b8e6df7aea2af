#include "pirank/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include "pirank/rng.hpp"

namespace pirank::data {

namespace {

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

bool parse_size(std::string_view text, std::size_t& out) {
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

struct RawItem {
  double label = 0.0;
  std::vector<std::pair<std::size_t, double>> features;  // fid (1-based), value
};

std::string read_gzip(const std::filesystem::path& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (!file) throw DataError("cannot open " + path.string());
  std::string out;
  char buf[1 << 16];
  int n = 0;
  while ((n = gzread(file, buf, sizeof(buf))) > 0) out.append(buf, static_cast<std::size_t>(n));
  const bool failed = n < 0;
  gzclose(file);
  if (failed) throw DataError("corrupt gzip stream in " + path.string());
  return out;
}

}  // namespace

std::size_t QueryGroup::num_valid() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::vector<double> QueryGroup::valid_labels() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (mask[i]) out.push_back(labels[i]);
  return out;
}

std::size_t Dataset::num_items() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.num_valid();
  return n;
}

Dataset parse_letor(std::istream& in, std::optional<std::size_t> num_features) {
  std::vector<std::string> qids;
  std::vector<std::vector<RawItem>> items;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t max_fid = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view body(line);
    if (const auto hash = body.find('#'); hash != std::string_view::npos) {
      body = body.substr(0, hash);
    }
    const auto tokens = split_ws(body);
    if (tokens.empty()) continue;
    RawItem item;
    if (!parse_double(tokens[0], item.label)) {
      throw DataError(lineno, "malformed label '" + std::string(tokens[0]) + "'");
    }
    if (tokens.size() < 2 || tokens[1].substr(0, 4) != "qid:" || tokens[1].size() == 4) {
      throw DataError(lineno, "expected qid:<token> after the label");
    }
    const std::string qid(tokens[1].substr(4));
    std::size_t last = 0;
    for (std::size_t t = 2; t < tokens.size(); ++t) {
      const auto colon = tokens[t].find(':');
      if (colon == std::string_view::npos) {
        throw DataError(lineno, "malformed feature '" + std::string(tokens[t]) + "'");
      }
      std::size_t fid = 0;
      double value = 0.0;
      if (!parse_size(tokens[t].substr(0, colon), fid) || fid == 0) {
        throw DataError(lineno, "malformed feature id in '" + std::string(tokens[t]) + "'");
      }
      if (!parse_double(tokens[t].substr(colon + 1), value)) {
        throw DataError(lineno, "malformed feature value in '" + std::string(tokens[t]) + "'");
      }
      if (fid == last) throw DataError(lineno, "duplicate feature id " + std::to_string(fid));
      if (fid < last) {
        throw DataError(lineno, "feature ids must be strictly increasing (" +
                                    std::to_string(fid) + " after " + std::to_string(last) + ")");
      }
      if (num_features && fid > *num_features) {
        throw DataError(lineno, "feature id " + std::to_string(fid) +
                                    " exceeds configured width " +
                                    std::to_string(*num_features));
      }
      last = fid;
      item.features.emplace_back(fid, value);
    }
    max_fid = std::max(max_fid, last);
    auto [it, inserted] = index.try_emplace(qid, qids.size());
    if (inserted) {
      qids.push_back(qid);
      items.emplace_back();
    }
    items[it->second].push_back(std::move(item));
  }

  Dataset data;
  data.num_features = num_features.value_or(max_fid);
  for (std::size_t q = 0; q < qids.size(); ++q) {
    QueryGroup group;
    group.qid = qids[q];
    const std::size_t n = items[q].size();
    group.features = Tensor(Shape{n, data.num_features});
    for (std::size_t i = 0; i < n; ++i) {
      group.labels.push_back(items[q][i].label);
      for (const auto& [fid, value] : items[q][i].features) group.features.at(i, fid - 1) = value;
    }
    group.mask.assign(n, 1);
    data.groups.push_back(std::move(group));
  }
  return data;
}

Dataset load_letor(const std::filesystem::path& path,
                   std::optional<std::size_t> num_features) {
  if (path.extension() == ".gz") {
    std::istringstream in(read_gzip(path));
    return parse_letor(in, num_features);
  }
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_letor(in, num_features);
}

void write_letor(std::ostream& out, const Dataset& data) {
  for (const auto& group : data.groups) {
    for (std::size_t i = 0; i < group.size(); ++i) {
      if (!group.mask[i]) continue;
      out << format_double(group.labels[i]) << " qid:" << group.qid;
      for (std::size_t f = 0; f < group.num_features(); ++f) {
        out << ' ' << (f + 1) << ':' << format_double(group.features.at(i, f));
      }
      out << '\n';
    }
  }
}

void save_letor(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_letor(out, data);
  if (!out) throw DataError("write failed for " + path.string());
}

QueryGroup pad_truncate(const QueryGroup& group, std::size_t list_size,
                        OverflowPolicy policy) {
  if (list_size < 1) throw std::invalid_argument("list size must be >= 1");
  const std::size_t m = group.num_features();
  // only real items count; earlier padding is discarded
  std::vector<std::size_t> real;
  for (std::size_t i = 0; i < group.size(); ++i)
    if (group.mask[i]) real.push_back(i);
  if (real.size() > list_size) {
    if (policy == OverflowPolicy::error) {
      throw DataError("query " + group.qid + " has " + std::to_string(real.size()) +
                      " items, more than the list size " + std::to_string(list_size));
    }
    real.resize(list_size);
  }
  QueryGroup out;
  out.qid = group.qid;
  out.features = Tensor(Shape{list_size, m});
  out.labels.assign(list_size, 0.0);
  out.mask.assign(list_size, 0);
  for (std::size_t r = 0; r < real.size(); ++r) {
    for (std::size_t f = 0; f < m; ++f) out.features.at(r, f) = group.features.at(real[r], f);
    out.labels[r] = group.labels[real[r]];
    out.mask[r] = 1;
  }
  return out;
}

Dataset pad_truncate(const Dataset& data, std::size_t list_size, OverflowPolicy policy) {
  Dataset out;
  out.num_features = data.num_features;
  for (const auto& g : data.groups) out.groups.push_back(pad_truncate(g, list_size, policy));
  return out;
}

Distribution Distribution::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  Distribution d;
  if (parts.size() != 3 || !parse_double(parts[1], d.a) || !parse_double(parts[2], d.b)) {
    throw std::invalid_argument("distribution must be uniform:<lo>:<hi> or normal:<mean>:<sd>, got '" +
                                text + "'");
  }
  if (parts[0] == "uniform") {
    d.kind = Kind::uniform;
    if (d.a > d.b) throw std::invalid_argument("uniform bounds out of order");
  } else if (parts[0] == "normal") {
    d.kind = Kind::normal;
    if (d.b < 0) throw std::invalid_argument("normal stddev must be >= 0");
  } else {
    throw std::invalid_argument("unknown distribution '" + parts[0] + "'");
  }
  return d;
}

std::string Distribution::str() const {
  return std::string(kind == Kind::uniform ? "uniform:" : "normal:") + format_double(a) + ":" +
         format_double(b);
}

void SyntheticConfig::validate() const {
  if (num_queries < 1) throw std::invalid_argument("need at least one query");
  if (list_size < 1) throw std::invalid_argument("list size must be >= 1");
  if (doc_features < 1) throw std::invalid_argument("need at least one document feature");
  if (query_features > doc_features) {
    throw std::invalid_argument("query features (" + std::to_string(query_features) +
                                ") exceed document features (" +
                                std::to_string(doc_features) + ")");
  }
  if (label_low > label_high) throw std::invalid_argument("label cap low > high");
}

namespace {
double draw(Rng& rng, const Distribution& d) {
  return d.kind == Distribution::Kind::uniform ? rng.uniform(d.a, d.b) : rng.normal(d.a, d.b);
}
}  // namespace

Dataset gen_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t L = cfg.list_size;
  const std::size_t md = cfg.doc_features;
  const std::size_t mq = cfg.query_features;
  Dataset data;
  data.num_features = md + mq;
  for (std::size_t q = 0; q < cfg.num_queries; ++q) {
    std::vector<double> x(L * md);
    for (double& v : x) v = draw(rng, cfg.phi);

    std::vector<std::size_t> cols(md);
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    for (std::size_t t = 0; t < mq; ++t) std::swap(cols[t], cols[t + rng.uniform_int(md - t)]);

    std::vector<double> gamma(mq);
    for (double& v : gamma) v = draw(rng, cfg.psi);

    QueryGroup group;
    group.qid = std::to_string(q + 1);
    group.features = Tensor(Shape{L, md + mq});
    for (std::size_t i = 0; i < L; ++i) {
      double y = 0.0;
      for (std::size_t c = 0; c < mq; ++c) y += gamma[c] * x[i * md + cols[c]];
      group.labels.push_back(std::max(cfg.label_low, std::min(cfg.label_high, y)));
      for (std::size_t f = 0; f < md; ++f) group.features.at(i, f) = x[i * md + f];
      for (std::size_t c = 0; c < mq; ++c) group.features.at(i, md + c) = gamma[c];
    }
    group.mask.assign(L, 1);
    data.groups.push_back(std::move(group));
  }
  return data;
}

std::string synthetic_metadata(const SyntheticConfig& cfg) {
  std::ostringstream os;
  os << "generator = synthetic-ltr\n"
     << "rng = mt19937_64\n"
     << "seed = " << cfg.seed << '\n'
     << "num_queries = " << cfg.num_queries << '\n'
     << "list_size = " << cfg.list_size << '\n'
     << "doc_features = " << cfg.doc_features << '\n'
     << "query_features = " << cfg.query_features << '\n'
     << "label_low = " << format_double(cfg.label_low) << '\n'
     << "label_high = " << format_double(cfg.label_high) << '\n'
     << "phi = " << cfg.phi.str() << '\n'
     << "psi = " << cfg.psi.str() << '\n';
  return os.str();
}

Split split(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw std::invalid_argument("split fractions must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
  const std::size_t n = data.groups.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_valid = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  if (n_train + n_valid > n) throw std::invalid_argument("split sizes exceed query count");
  const std::array<std::size_t, 3> sizes{n_train, n_valid, n - n_train - n_valid};
  for (std::size_t s = 0; s < 3; ++s) {
    if (fractions[s] > 0.0 && sizes[s] == 0) {
      throw std::invalid_argument("split " + std::to_string(s) + " would be empty with " +
                                  std::to_string(n) + " queries");
    }
  }
  Split out;
  std::array<Dataset*, 3> parts{&out.train, &out.valid, &out.test};
  std::size_t pos = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    parts[s]->num_features = data.num_features;
    for (std::size_t i = 0; i < sizes[s]; ++i) parts[s]->groups.push_back(data.groups[order[pos++]]);
  }
  return out;
}

}  // namespace pirank::data
