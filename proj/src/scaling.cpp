#include "pirank/scaling.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <new>
#include <ostream>

#include "pirank/data.hpp"
#include "pirank/model.hpp"
#include "pirank/topk_dnc.hpp"

namespace pirank::scaling {

std::optional<double> fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("slope fit: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("slope fit: non-positive value");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y[i]) - my);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

std::vector<Cell> run_scaling(const ScalingConfig& cfg, std::ostream* progress) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  std::vector<Cell> cells;
  for (std::size_t depth : cfg.depths) {
    for (std::size_t L : cfg.list_sizes) {
      Cell cell;
      cell.list_size = L;
      cell.depth = depth;
      cell.predicted_ops = dnc::count_ops(dnc::make_plan(L, cfg.k, depth, cfg.tau)).total();
      const double elapsed = std::chrono::duration<double>(clock::now() - start).count();
      if (cfg.max_seconds > 0.0 && elapsed >= cfg.max_seconds) {
        cell.status = CellStatus::skipped;
        cell.note = "time budget exhausted";
        cells.push_back(cell);
        continue;
      }
      try {
        data::SyntheticConfig sc;
        sc.num_queries = cfg.batch_size;
        sc.list_size = L;
        sc.doc_features = cfg.doc_features;
        sc.query_features = cfg.query_features;
        sc.seed = cfg.seed;
        const data::Dataset ds = data::gen_synthetic(sc);

        model::Mlp mlp({ds.num_features, cfg.hidden}, cfg.seed);
        model::TrainConfig tc;
        tc.loss.kind = losses::LossKind::pirank_ndcg;
        tc.loss.k = cfg.k;
        tc.loss.tau = cfg.tau;
        tc.loss.depth = depth;
        tc.batch_size = cfg.batch_size;
        tc.epochs = cfg.steps;
        tc.max_steps = cfg.steps;
        tc.evaluate_epochs = false;
        tc.patience = 0;
        tc.seed = cfg.seed;
        tc.grad_warn = std::numeric_limits<double>::infinity();

        const auto t0 = clock::now();
        const model::TrainResult r = model::train(std::move(mlp), ds, nullptr, tc);
        cell.seconds = std::chrono::duration<double>(clock::now() - t0).count();
        cell.steps = r.log.back().step;
      } catch (const std::bad_alloc&) {
        cell.status = CellStatus::failed;
        cell.note = "out of memory";
      }
      if (progress != nullptr) {
        *progress << "L=" << L << " d=" << depth << " " << status_name(cell.status) << " "
                  << cell.seconds << "s\n";
      }
      cells.push_back(cell);
    }
  }
  return cells;
}

std::vector<Slope> fit_slopes(const std::vector<Cell>& cells) {
  std::vector<Slope> out;
  for (const Cell& c : cells) {
    bool seen = false;
    for (const Slope& s : out) seen = seen || s.depth == c.depth;
    if (seen) continue;
    std::vector<double> x, y;
    for (const Cell& o : cells) {
      if (o.depth != c.depth || o.status != CellStatus::ok || o.steps == 0 || !(o.seconds > 0.0)) {
        continue;
      }
      x.push_back(static_cast<double>(o.list_size));
      y.push_back(o.seconds / static_cast<double>(o.steps));
    }
    out.push_back({c.depth, x.size(), fit_loglog_slope(x, y)});
  }
  return out;
}

const char* status_name(CellStatus s) {
  switch (s) {
    case CellStatus::ok: return "ok";
    case CellStatus::skipped: return "skipped";
    case CellStatus::failed: return "failed";
  }
  return "?";
}

void write_cells_csv(std::ostream& out, const std::vector<Cell>& cells) {
  out << "list_size,depth,status,steps,seconds,predicted_ops,note\n";
  for (const Cell& c : cells) {
    out << c.list_size << ',' << c.depth << ',' << status_name(c.status) << ',' << c.steps << ','
        << c.seconds << ',' << c.predicted_ops << ',' << c.note << '\n';
  }
}

void write_slopes_csv(std::ostream& out, const std::vector<Slope>& slopes) {
  out << "depth,points,slope\n";
  for (const Slope& s : slopes) {
    out << s.depth << ',' << s.points << ',';
    if (s.slope) out << *s.slope;
    out << '\n';
  }
}

}  // namespace pirank::scaling
