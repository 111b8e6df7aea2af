#include "pirank/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "pirank/data.hpp"
#include "pirank/kernels.hpp"
#include "pirank/losses.hpp"
#include "pirank/metrics.hpp"
#include "pirank/model.hpp"
#include "pirank/scaling.hpp"
#include "pirank/stats.hpp"

namespace fs = std::filesystem;

namespace pirank::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::vector<std::size_t> parse_sizes(const std::string& text, const std::string& what,
                                     bool allow_empty) {
  std::vector<std::size_t> out;
  if (trim(text).empty()) {
    if (allow_empty) return out;
    throw UsageError(what + " must not be empty");
  }
  for (const std::string& part : split(text, ',')) {
    std::size_t v = 0;
    auto r = std::from_chars(part.data(), part.data() + part.size(), v);
    if (r.ec != std::errc() || r.ptr != part.data() + part.size() || v == 0) {
      throw UsageError("bad " + what + " entry '" + part + "'");
    }
    out.push_back(v);
  }
  return out;
}

double parse_number(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  double v = 0.0;
  auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw UsageError("bad " + what + " '" + text + "'");
  }
  return v;
}

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw data::DataError("cannot create directory " + dir + ": " + ec.message());
  return p;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data::DataError("cannot open " + path.string() + " for writing");
  return out;
}

/// Every option of `cmd` with its resolved value, one `key = value` per
/// line; the file is accepted back by --config.
void write_manifest(const fs::path& path, const CLI::App& cmd) {
  std::ofstream out = open_out(path);
  out << "# pirank " << cmd.get_name() << "\n";
  for (const CLI::Option* opt : cmd.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || opt->get_lnames().empty()) continue;
    std::string value;
    if (opt->count() == 0) {
      value = opt->get_default_str();
    } else {
      for (const std::string& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    }
    out << name << " = " << value << "\n";
  }
}

int threads_from_env() {
  const char* env = std::getenv("PIRANK_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  int v = 0;
  auto r = std::from_chars(env, env + std::char_traits<char>::length(env), v);
  if (r.ec != std::errc() || v < 1) throw UsageError(std::string("bad PIRANK_THREADS '") + env + "'");
  return v;
}

// ---- gen-synthetic ------------------------------------------------------------

struct GenOptions {
  data::SyntheticConfig cfg;
  std::string phi = "uniform:0:1";
  std::string psi = "uniform:0:1";
  std::string split;
  std::string out = "synthetic";
};

void add_gen(CLI::App& app, GenOptions& o) {
  auto* c = app.add_subcommand("gen-synthetic", "Write a seeded synthetic LETOR dataset");
  c->add_option("--config", "key = value defaults file");
  c->add_option("--n", o.cfg.num_queries, "number of queries");
  c->add_option("--list-size", o.cfg.list_size, "items per query");
  c->add_option("--doc-features", o.cfg.doc_features, "document feature width m_d");
  c->add_option("--query-features", o.cfg.query_features, "query coefficients m_q");
  c->add_option("--label-low", o.cfg.label_low, "label clamp low");
  c->add_option("--label-high", o.cfg.label_high, "label clamp high");
  c->add_option("--phi", o.phi, "document feature distribution");
  c->add_option("--psi", o.psi, "query coefficient distribution");
  c->add_option("--seed", o.cfg.seed, "generator seed");
  c->add_option("--split", o.split, "train,valid,test fractions, e.g. 0.6,0.2,0.2");
  c->add_option("--out", o.out, "output directory");
}

int cmd_gen(const CLI::App& cmd, GenOptions& o, std::ostream& out, std::ostream& err) {
  o.cfg.phi = data::Distribution::parse(o.phi);
  o.cfg.psi = data::Distribution::parse(o.psi);
  o.cfg.validate();
  if (o.cfg.label_low == o.cfg.label_high) {
    err << "warning: label-low equals label-high; every label is " << fmt(o.cfg.label_low)
        << "\n";
  }
  const data::Dataset ds = data::gen_synthetic(o.cfg);
  const fs::path dir = prepare_dir(o.out);
  if (o.split.empty()) {
    data::save_letor(dir / "data.txt", ds);
    out << "wrote " << (dir / "data.txt").string() << " (" << ds.groups.size() << " queries)\n";
  } else {
    const auto parts = split(o.split, ',');
    if (parts.size() != 3) throw UsageError("--split needs three fractions");
    std::array<double, 3> f{};
    for (std::size_t i = 0; i < 3; ++i) f[i] = parse_number(parts[i], "split fraction");
    const data::Split s = data::split(ds, f, o.cfg.seed);
    data::save_letor(dir / "train.txt", s.train);
    data::save_letor(dir / "valid.txt", s.valid);
    data::save_letor(dir / "test.txt", s.test);
    out << "wrote " << dir.string() << "/{train,valid,test}.txt (" << s.train.groups.size()
        << "/" << s.valid.groups.size() << "/" << s.test.groups.size() << " queries)\n";
  }
  std::ofstream meta = open_out(dir / "metadata.txt");
  meta << data::synthetic_metadata(o.cfg);
  write_manifest(dir / "manifest.txt", cmd);
  return kOk;
}

// ---- train --------------------------------------------------------------------

struct TrainOptions {
  std::string train_path;
  std::string valid_path;
  std::string out = "run";
  std::string loss = "pirank-ndcg";
  double tau = 5.0;
  double tau_decay = 1.0;
  double tau_floor = 1e-2;
  std::size_t depth = 1;
  std::size_t k = 10;
  std::size_t list_size = 0;
  bool straight_through = true;
  std::string branching;
  std::size_t slack = 0;
  double tau_ratio = 1.0;
  double lr = 1e-3;
  std::size_t batch = 16;
  std::size_t epochs = 100;
  std::size_t max_steps = 0;
  std::size_t patience = 10;
  std::string hidden = "64,32";
  std::string cutoffs = "1,3,5,10";
  std::uint64_t seed = 0;
  double grad_warn = 10.0;
};

void add_train(CLI::App& app, TrainOptions& o) {
  auto* c = app.add_subcommand("train", "Train an MLP scorer and write a checkpoint");
  c->add_option("--config", "key = value defaults file");
  c->add_option("--train", o.train_path, "training LETOR file")->required();
  c->add_option("--valid", o.valid_path, "validation LETOR file");
  c->add_option("--out", o.out, "output directory");
  c->add_option("--loss", o.loss,
                "pirank-ndcg, pirank-arp, mse, ranknet, lambdarank, softmax, neuralsort-ce");
  c->add_option("--tau", o.tau, "temperature");
  c->add_option("--tau-decay", o.tau_decay, "per-epoch temperature factor in (0, 1]");
  c->add_option("--tau-floor", o.tau_floor, "lowest temperature reached by decay");
  c->add_option("--depth", o.depth, "divide-and-conquer depth d");
  c->add_option("--k", o.k, "top-k truncation");
  c->add_option("--list-size", o.list_size, "pad or truncate queries to this size (0 = keep)");
  c->add_option("--straight-through", o.straight_through, "hard forward, relaxed backward");
  c->add_option("--branching", o.branching, "explicit branching b_1,...,b_d");
  c->add_option("--slack", o.slack, "extra rows kept at intermediate levels");
  c->add_option("--tau-ratio", o.tau_ratio, "temperature ratio between levels");
  c->add_option("--lr", o.lr, "Adam learning rate");
  c->add_option("--batch", o.batch, "queries per batch");
  c->add_option("--epochs", o.epochs, "epochs");
  c->add_option("--max-steps", o.max_steps, "optimizer step cap (0 = none)");
  c->add_option("--patience", o.patience, "early-stopping patience in epochs (0 = off)");
  c->add_option("--hidden", o.hidden, "hidden layer widths, e.g. 64,32");
  c->add_option("--cutoffs", o.cutoffs, "metric cutoffs");
  c->add_option("--seed", o.seed, "seed for init and shuffling");
  c->add_option("--grad-warn", o.grad_warn, "gradient norm warning threshold");
}

data::Dataset load_for_training(const std::string& path, std::optional<std::size_t> width,
                                std::size_t list_size) {
  data::Dataset ds = data::load_letor(path, width);
  if (list_size > 0) ds = data::pad_truncate(ds, list_size);
  return ds;
}

int cmd_train(const CLI::App& cmd, const TrainOptions& o, std::ostream& out, std::ostream& err) {
  const auto kind = losses::parse_loss_kind(o.loss);
  if (!kind) throw UsageError("unknown loss '" + o.loss + "'");
  if (!(o.tau > 0.0)) throw UsageError("--tau must be positive");
  if (!(o.lr >= 0.0)) throw UsageError("--lr must be non-negative");
  if (o.batch == 0) throw UsageError("--batch must be at least 1");
  if (o.k == 0 || o.depth == 0) throw UsageError("--k and --depth must be positive");

  model::TrainConfig tc;
  tc.loss.kind = *kind;
  tc.loss.k = o.k;
  tc.loss.tau = o.tau;
  tc.loss.depth = o.depth;
  tc.loss.straight_through = o.straight_through;
  tc.loss.plan.branching = parse_sizes(o.branching, "branching", true);
  tc.loss.plan.slack = o.slack;
  tc.loss.plan.tau_ratio = o.tau_ratio;
  tc.batch_size = o.batch;
  tc.adam.lr = o.lr;
  tc.epochs = o.epochs;
  tc.max_steps = o.max_steps;
  tc.tau_decay = o.tau_decay;
  tc.tau_floor = o.tau_floor;
  tc.patience = o.patience;
  tc.cutoffs = parse_sizes(o.cutoffs, "cutoffs", false);
  tc.seed = o.seed;
  tc.grad_warn = o.grad_warn;

  const data::Dataset train_data = load_for_training(o.train_path, std::nullopt, o.list_size);
  std::optional<data::Dataset> valid;
  if (!o.valid_path.empty()) {
    valid = load_for_training(o.valid_path, train_data.num_features, o.list_size);
  }
  if (train_data.groups.empty()) throw data::DataError("training file has no queries");

  const fs::path dir = prepare_dir(o.out);
  write_manifest(dir / "manifest.txt", cmd);
  model::Mlp mlp({train_data.num_features, parse_sizes(o.hidden, "hidden", true)}, o.seed);
  const model::TrainResult r =
      model::train(std::move(mlp), train_data, valid ? &*valid : nullptr, tc, &err);
  r.model.save(dir / "model.bin");
  std::ofstream csv = open_out(dir / "epochs.csv");
  model::write_epoch_csv(csv, r.log, tc.cutoffs);

  const auto& last = r.log.back();
  out << "epochs " << last.epoch << ", steps " << last.step << ", final loss " << fmt(last.loss);
  if (valid) out << ", best epoch " << r.best_epoch;
  if (r.early_stopped) out << " (early stop)";
  out << "\n";
  if (r.gradient_warnings > 0) {
    err << "warning: " << r.gradient_warnings
        << " batches exceeded the gradient norm threshold; consider a higher --tau\n";
  }
  return kOk;
}

// ---- evaluate -----------------------------------------------------------------

struct EvalOptions {
  std::string model_path;
  std::string data_path;
  std::string report_in;
  std::string cutoffs = "1,3,5,10";
  std::string out;
  std::string name;
  std::vector<std::string> compare;
  std::string compare_out;
  double alpha = 0.05;
  std::size_t list_size = 0;
};

void add_eval(CLI::App& app, EvalOptions& o) {
  auto* c = app.add_subcommand(
      "evaluate", "Per-query metrics for a checkpoint, with optional paired comparison");
  c->add_option("--config", "key = value defaults file");
  c->add_option("--model", o.model_path, "checkpoint file");
  c->add_option("--data", o.data_path, "LETOR file to evaluate on");
  c->add_option("--report", o.report_in, "existing per-query report instead of --model/--data");
  c->add_option("--cutoffs", o.cutoffs, "metric cutoffs");
  c->add_option("--out", o.out, "per-query report CSV to write");
  c->add_option("--name", o.name, "method name in comparisons");
  c->add_option("--compare", o.compare, "per-query report CSVs of other methods");
  c->add_option("--compare-out", o.compare_out, "comparison CSV (default: stdout)");
  c->add_option("--alpha", o.alpha, "one-sided significance level");
  c->add_option("--list-size", o.list_size, "pad or truncate queries to this size (0 = keep)");
}

struct Report {
  std::string name;
  std::vector<std::string> columns;  // metric names
  std::vector<std::string> qids;
  std::vector<std::vector<std::optional<double>>> values;  // [query][column]
};

Report report_from_rows(const std::vector<metrics::QueryMetrics>& rows,
                        const std::vector<std::size_t>& cutoffs) {
  Report r;
  r.columns = metrics::metric_names(cutoffs);
  for (const auto& row : rows) {
    r.qids.push_back(row.qid);
    std::vector<std::optional<double>> v;
    for (const auto& c : r.columns) v.push_back(metrics::metric_value(row, c));
    r.values.push_back(std::move(v));
  }
  return r;
}

void write_report(std::ostream& out, const Report& r) {
  out << "qid";
  for (const auto& c : r.columns) out << ',' << c;
  out << '\n';
  for (std::size_t q = 0; q < r.qids.size(); ++q) {
    out << r.qids[q];
    for (const auto& v : r.values[q]) {
      out << ',';
      if (v) out << fmt(*v);
    }
    out << '\n';
  }
}

Report read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data::DataError("cannot open " + path.string());
  Report r;
  r.name = path.stem().string();
  std::string line;
  if (!std::getline(in, line)) throw data::DataError(path.string() + ": empty report");
  auto header = split(trim(line), ',');
  if (header.empty() || header[0] != "qid") {
    throw data::DataError(path.string() + ": report header must start with qid");
  }
  r.columns.assign(header.begin() + 1, header.end());
  std::set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split(trim(line), ',');
    if (cells.size() != header.size()) {
      throw data::DataError(lineno, path.string() + ": expected " +
                                        std::to_string(header.size()) + " fields");
    }
    if (!seen.insert(cells[0]).second) {
      throw data::DataError(lineno, path.string() + ": duplicate qid " + cells[0]);
    }
    r.qids.push_back(cells[0]);
    std::vector<std::optional<double>> v;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      if (cells[i].empty()) {
        v.emplace_back();
        continue;
      }
      double x = 0.0;
      auto res = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), x);
      if (res.ec != std::errc() || res.ptr != cells[i].data() + cells[i].size()) {
        throw data::DataError(lineno, path.string() + ": bad number '" + cells[i] + "'");
      }
      v.push_back(x);
    }
    r.values.push_back(std::move(v));
  }
  return r;
}

void write_comparison(std::ostream& out, const std::vector<Report>& reports, double alpha) {
  const Report& base = reports.front();
  std::map<std::string, std::size_t> base_index;
  for (std::size_t q = 0; q < base.qids.size(); ++q) base_index[base.qids[q]] = q;
  // Row order of every report, aligned to the first.
  std::vector<std::vector<std::size_t>> align(reports.size());
  for (std::size_t m = 0; m < reports.size(); ++m) {
    const Report& r = reports[m];
    if (r.qids.size() != base.qids.size()) {
      throw data::DataError("query sets differ: " + base.name + " has " +
                            std::to_string(base.qids.size()) + " queries, " + r.name + " has " +
                            std::to_string(r.qids.size()));
    }
    std::map<std::string, std::size_t> idx;
    for (std::size_t q = 0; q < r.qids.size(); ++q) idx[r.qids[q]] = q;
    for (const auto& qid : base.qids) {
      auto it = idx.find(qid);
      if (it == idx.end()) {
        throw data::DataError("query sets differ: " + r.name + " has no query " + qid);
      }
      align[m].push_back(it->second);
    }
  }

  out << "metric,method,mean,t,p,significantly_worse,bold,queries\n";
  for (const std::string& metric : base.columns) {
    std::vector<std::vector<std::optional<double>>> values;
    bool everywhere = true;
    for (std::size_t m = 0; m < reports.size(); ++m) {
      const auto& cols = reports[m].columns;
      auto col = std::find(cols.begin(), cols.end(), metric);
      if (col == cols.end()) {
        everywhere = false;
        break;
      }
      const std::size_t c = static_cast<std::size_t>(col - cols.begin());
      std::vector<std::optional<double>> v;
      for (std::size_t q : align[m]) v.push_back(reports[m].values[q][c]);
      values.push_back(std::move(v));
    }
    if (!everywhere) continue;
    const auto cmp = stats::compare_methods(values, metrics::higher_is_better(metric), alpha);
    for (std::size_t m = 0; m < reports.size(); ++m) {
      const auto& t = cmp.vs_best[m];
      out << metric << ',' << reports[m].name << ',';
      if (cmp.queries > 0) out << fmt(cmp.means[m]);
      out << ',' << fmt(t.t) << ',' << fmt(t.p) << ',' << (t.significant ? 1 : 0) << ','
          << (cmp.bold[m] ? 1 : 0) << ',' << cmp.queries << '\n';
    }
  }
}

int cmd_eval(const CLI::App& cmd, const EvalOptions& o, std::ostream& out) {
  const auto cutoffs = parse_sizes(o.cutoffs, "cutoffs", false);
  Report base;
  if (!o.report_in.empty()) {
    if (!o.model_path.empty() || !o.data_path.empty()) {
      throw UsageError("--report excludes --model and --data");
    }
    base = read_report(o.report_in);
  } else {
    if (o.model_path.empty() || o.data_path.empty()) {
      throw UsageError("evaluate needs --model and --data (or --report)");
    }
    model::Mlp mlp;
    try {
      mlp = model::Mlp::load(o.model_path);
    } catch (const std::runtime_error& e) {
      throw data::DataError(e.what());
    }
    data::Dataset ds = data::load_letor(o.data_path, mlp.input_width());
    if (o.list_size > 0) ds = data::pad_truncate(ds, o.list_size);
    base = report_from_rows(model::evaluate(mlp, ds, cutoffs), cutoffs);
    base.name = "model";
  }
  if (!o.name.empty()) base.name = o.name;

  if (!o.out.empty()) {
    std::ofstream f = open_out(o.out);
    write_report(f, base);
    write_manifest(o.out + ".manifest.txt", cmd);
  }

  out << "metric,mean,queries\n";
  for (std::size_t c = 0; c < base.columns.size(); ++c) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& row : base.values) {
      if (row[c]) {
        total += *row[c];
        ++n;
      }
    }
    out << base.columns[c] << ',';
    if (n > 0) out << fmt(total / static_cast<double>(n));
    out << ',' << n << '\n';
  }
  out << "# opa counts tied predicted scores as incorrectly ordered\n";

  if (!o.compare.empty()) {
    std::vector<Report> reports{base};
    std::set<std::string> names{base.name};
    for (const auto& path : o.compare) {
      Report r = read_report(path);
      std::string name = r.name;
      for (int i = 2; !names.insert(name).second; ++i) name = r.name + "_" + std::to_string(i);
      r.name = name;
      reports.push_back(std::move(r));
    }
    if (o.compare_out.empty()) {
      write_comparison(out, reports, o.alpha);
    } else {
      std::ofstream f = open_out(o.compare_out);
      write_comparison(f, reports, o.alpha);
    }
  }
  return kOk;
}

// ---- bench-scaling ------------------------------------------------------------

struct BenchOptions {
  scaling::ScalingConfig cfg;
  std::string list_sizes = "125,1000,2197,3375";
  std::string depths = "1,3";
  std::string hidden;
  std::string out = "scaling";
};

void add_bench(CLI::App& app, BenchOptions& o) {
  auto* c = app.add_subcommand("bench-scaling", "Time fixed-step training across list sizes");
  c->add_option("--config", "key = value defaults file");
  c->add_option("--list-sizes", o.list_sizes, "list sizes L");
  c->add_option("--depths", o.depths, "depths d");
  c->add_option("--k", o.cfg.k, "top-k");
  c->add_option("--steps", o.cfg.steps, "training steps per cell");
  c->add_option("--batch", o.cfg.batch_size, "queries per batch");
  c->add_option("--tau", o.cfg.tau, "temperature");
  c->add_option("--hidden", o.hidden, "hidden layer widths (empty = linear scorer)");
  c->add_option("--seed", o.cfg.seed, "seed");
  c->add_option("--max-seconds", o.cfg.max_seconds, "skip cells once this budget is spent");
  c->add_option("--out", o.out, "output directory");
}

int cmd_bench(const CLI::App& cmd, BenchOptions& o, std::ostream& out, std::ostream& err) {
  o.cfg.list_sizes = parse_sizes(o.list_sizes, "list sizes", false);
  o.cfg.depths = parse_sizes(o.depths, "depths", false);
  o.cfg.hidden = parse_sizes(o.hidden, "hidden", true);
  if (o.cfg.k == 0 || o.cfg.steps == 0 || o.cfg.batch_size == 0 || !(o.cfg.tau > 0.0)) {
    throw UsageError("--k, --steps, --batch and --tau must be positive");
  }
  const fs::path dir = prepare_dir(o.out);
  write_manifest(dir / "manifest.txt", cmd);
  const auto cells = scaling::run_scaling(o.cfg, &err);
  const auto slopes = scaling::fit_slopes(cells);
  {
    std::ofstream f = open_out(dir / "scaling.csv");
    scaling::write_cells_csv(f, cells);
  }
  {
    std::ofstream f = open_out(dir / "slopes.csv");
    scaling::write_slopes_csv(f, slopes);
  }
  scaling::write_cells_csv(out, cells);
  scaling::write_slopes_csv(out, slopes);
  return kOk;
}

}  // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::vector<std::string> rest;
  std::string path;
  std::size_t insert_at = std::min<std::size_t>(args.size(), 2);
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      path = args[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      path = a.substr(9);
    } else {
      rest.push_back(a);
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  std::vector<std::string> flags;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) throw UsageError(path + ":" + std::to_string(lineno) + ": empty key");
    if (value.empty()) {
      flags.push_back("--" + key);
      flags.emplace_back();
    } else {
      flags.push_back("--" + key + "=" + value);
    }
  }
  insert_at = std::min(insert_at, rest.size());
  out.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(insert_at));
  out.insert(out.end(), flags.begin(), flags.end());
  out.insert(out.end(), rest.begin() + static_cast<std::ptrdiff_t>(insert_at), rest.end());
  return out;
}

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"PiRank: differentiable sorting losses for learning to rank", "pirank"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();

  GenOptions gen;
  TrainOptions tr;
  EvalOptions ev;
  BenchOptions bench;
  add_gen(app, gen);
  add_train(app, tr);
  add_eval(app, ev);
  add_bench(app, bench);
  if (auto* cmp = app.get_subcommand("evaluate")->get_option("--compare")) {
    cmp->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  }

  try {
    if (args.empty()) args.emplace_back("pirank");
    args = expand_config(args);
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kOk : kUsage;
    }
    set_num_threads(threads_from_env());

    const CLI::App& cmd = *app.get_subcommands().front();
    const std::string verb = cmd.get_name();
    if (verb == "gen-synthetic") return cmd_gen(cmd, gen, out, err);
    if (verb == "train") return cmd_train(cmd, tr, out, err);
    if (verb == "evaluate") return cmd_eval(cmd, ev, out);
    return cmd_bench(cmd, bench, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const data::DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const model::NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
}

}  // namespace pirank::cli
