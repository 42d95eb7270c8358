#include "semgen/gridworld.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <deque>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace semgen {

char tile_char(Tile t) {
  switch (t) {
    case Tile::Empty: return '.';
    case Tile::Solid: return '#';
    case Tile::TopLeft: return 'L';
    case Tile::TopRight: return 'R';
    case Tile::BodyLeft: return '[';
    case Tile::BodyRight: return ']';
  }
  return '?';
}

Tile tile_from_char(char c) {
  switch (c) {
    case '.': return Tile::Empty;
    case '#': return Tile::Solid;
    case 'L': return Tile::TopLeft;
    case 'R': return Tile::TopRight;
    case '[': return Tile::BodyLeft;
    case ']': return Tile::BodyRight;
  }
  throw std::invalid_argument(std::string("unknown tile character '") + c + "'");
}

bool is_pipe_tile(Tile t) {
  return t == Tile::TopLeft || t == Tile::TopRight || t == Tile::BodyLeft ||
         t == Tile::BodyRight;
}

GridLevel::GridLevel(int height, int width, Tile fill)
    : height_(height), width_(width), tiles_(std::size_t(height) * width, fill) {
  if (height < 1 || width < 1) throw std::invalid_argument("grid dimensions must be positive");
}

Assignment GridLevel::encode() const {
  Assignment bits(std::size_t(height_) * width_ * kTileCount, 0);
  for (int r = 0; r < height_; ++r)
    for (int c = 0; c < width_; ++c)
      bits[tile_var(width_, r, c, at(r, c))] = 1;
  return bits;
}

std::vector<double> GridLevel::encode_real() const {
  const Assignment bits = encode();
  return std::vector<double>(bits.begin(), bits.end());
}

GridLevel GridLevel::decode(int height, int width, std::span<const std::uint8_t> bits) {
  if (bits.size() != std::size_t(height) * width * kTileCount)
    throw std::invalid_argument("encoded length does not match grid size");
  GridLevel level(height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      int tile = -1;
      for (int t = 0; t < kTileCount; ++t)
        if (bits[tile_var(width, r, c, static_cast<Tile>(t))]) {
          if (tile >= 0) throw std::invalid_argument("cell with two tiles set");
          tile = t;
        }
      if (tile < 0) throw std::invalid_argument("cell with no tile set");
      level.set(r, c, static_cast<Tile>(tile));
    }
  return level;
}

std::string GridLevel::render() const {
  std::string out;
  out.reserve(std::size_t(height_) * (width_ + 1));
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) out += tile_char(at(r, c));
    out += '\n';
  }
  return out;
}

int GridLevel::pipe_tile_count() const {
  int n = 0;
  for (Tile t : tiles_)
    if (is_pipe_tile(t)) ++n;
  return n;
}

int tile_var(int width, int r, int c, Tile t) {
  return (r * width + c) * kTileCount + static_cast<int>(t);
}

std::string tile_var_name(int r, int c, Tile t) {
  static const char* names[kTileCount] = {"E", "S", "TL", "TR", "BL", "BR"};
  return "t_" + std::to_string(r) + "_" + std::to_string(c) + "_" +
         names[static_cast<int>(t)];
}

Formula build_pipe_constraint(int height, int width) {
  if (height < 2 || width < 2)
    throw std::invalid_argument("pipe constraint needs at least a 2x2 grid");
  FormulaBuilder fb;

  // Pre-register every literal so the variable table is exactly the grid
  // encoding order: row-major cells, tiles contiguous per cell.
  std::vector<int> lit(std::size_t(height) * width * kTileCount);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      for (int t = 0; t < kTileCount; ++t) {
        const Tile tile = static_cast<Tile>(t);
        lit[tile_var(width, r, c, tile)] = fb.var(tile_var_name(r, c, tile));
      }
  auto at = [&](int r, int c, Tile t) { return lit[tile_var(width, r, c, t)]; };

  std::vector<int> clauses;
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      // exactly one tile per cell
      std::vector<int> any;
      for (int t = 0; t < kTileCount; ++t) any.push_back(at(r, c, static_cast<Tile>(t)));
      clauses.push_back(fb.disjunction(std::move(any)));
      for (int t1 = 0; t1 < kTileCount; ++t1)
        for (int t2 = t1 + 1; t2 < kTileCount; ++t2)
          clauses.push_back(fb.negation(
              fb.conjunction({at(r, c, static_cast<Tile>(t1)), at(r, c, static_cast<Tile>(t2))})));

      const int tl = at(r, c, Tile::TopLeft);
      const int tr = at(r, c, Tile::TopRight);
      const int bl = at(r, c, Tile::BodyLeft);
      const int br = at(r, c, Tile::BodyRight);

      // horizontal pairing; border columns exclude half-pipes
      if (c + 1 < width) {
        clauses.push_back(fb.implies(tl, at(r, c + 1, Tile::TopRight)));
        clauses.push_back(fb.implies(bl, at(r, c + 1, Tile::BodyRight)));
      } else {
        clauses.push_back(fb.negation(tl));
        clauses.push_back(fb.negation(bl));
      }
      if (c > 0) {
        clauses.push_back(fb.implies(tr, at(r, c - 1, Tile::TopLeft)));
        clauses.push_back(fb.implies(br, at(r, c - 1, Tile::BodyLeft)));
      } else {
        clauses.push_back(fb.negation(tr));
        clauses.push_back(fb.negation(br));
      }

      // a pipe top continues downward; tops cannot sit on the last row
      if (r + 1 < height) {
        clauses.push_back(fb.implies(tl, at(r + 1, c, Tile::BodyLeft)));
        clauses.push_back(fb.implies(tr, at(r + 1, c, Tile::BodyRight)));
      } else {
        clauses.push_back(fb.negation(tl));
        clauses.push_back(fb.negation(tr));
      }

      // bodies continue down into body or solid ground, and are entered from
      // a top or another body above
      if (r + 1 < height) {
        clauses.push_back(
            fb.implies_any(bl, {at(r + 1, c, Tile::BodyLeft), at(r + 1, c, Tile::Solid)}));
        clauses.push_back(
            fb.implies_any(br, {at(r + 1, c, Tile::BodyRight), at(r + 1, c, Tile::Solid)}));
      }
      if (r > 0) {
        clauses.push_back(
            fb.implies_any(bl, {at(r - 1, c, Tile::TopLeft), at(r - 1, c, Tile::BodyLeft)}));
        clauses.push_back(
            fb.implies_any(br, {at(r - 1, c, Tile::TopRight), at(r - 1, c, Tile::BodyRight)}));
      }
    }
  const int root = fb.conjunction(std::move(clauses));
  return std::move(fb).build(root);
}

// ---------------------------------------------------------------------------
// reachability oracle

namespace {

bool standable(const GridLevel& level, int r, int c) {
  if (level.at(r, c) != Tile::Empty) return false;
  return r + 1 < level.height() && level.at(r + 1, c) != Tile::Empty;
}

}  // namespace

ReachResult reachable_tiles(const GridLevel& level, const ReachSpec& spec) {
  const int h = level.height();
  const int w = level.width();
  ReachResult out;
  out.height = h;
  out.width = w;
  out.reachable.assign(std::size_t(h) * w, 0);

  int start_row = -1;
  for (int r = h - 1; r >= 0; --r)
    if (standable(level, r, 0)) {
      start_row = r;
      break;
    }
  if (start_row < 0) return out;  // has_start stays false
  out.has_start = true;

  auto idx = [w](int r, int c) { return std::size_t(r) * w + c; };
  std::deque<std::pair<int, int>> queue{{start_row, 0}};
  out.reachable[idx(start_row, 0)] = 1;
  while (!queue.empty()) {
    const auto [r, c] = queue.front();
    queue.pop_front();
    for (int span = 1; span <= spec.max_jump_span; ++span)
      for (int dc : {-span, span}) {
        const int nc = c + dc;
        if (nc < 0 || nc >= w) continue;
        for (int nr = 0; nr < h; ++nr) {
          if (nr < r - spec.max_jump_up) continue;  // too high to jump; falls are free
          if (!standable(level, nr, nc) || out.reachable[idx(nr, nc)]) continue;
          out.reachable[idx(nr, nc)] = 1;
          queue.emplace_back(nr, nc);
        }
      }
  }
  return out;
}

bool is_playable(const GridLevel& level, const ReachSpec& spec) {
  const ReachResult reach = reachable_tiles(level, spec);
  if (!reach.has_start) return false;
  for (int r = 0; r < level.height(); ++r)
    if (reach.at(r, level.width() - 1)) return true;
  return false;
}

// ---------------------------------------------------------------------------
// dataset synthesis

namespace {

struct GroundPlan {
  std::vector<int> height;  // solid rows from the bottom; 0 = gap column
};

GroundPlan make_ground(int h, int w, Rng& rng, bool allow_gaps, double gap_prob,
                       int max_gap_width) {
  GroundPlan plan;
  plan.height.assign(w, 0);
  const int max_height = std::max(2, h / 2);
  int current = 1 + static_cast<int>(rng.uniform_int(2));
  int c = 0;
  while (c < w) {
    if (allow_gaps && c > 0 && c + 1 < w && rng.uniform() < gap_prob) {
      const int gap = 1 + static_cast<int>(rng.uniform_int(max_gap_width));
      for (int g = 0; g < gap && c < w - 1; ++g) plan.height[c++] = 0;
      continue;
    }
    plan.height[c++] = current;
    const int step = static_cast<int>(rng.uniform_int(3)) - 1;
    current = std::clamp(current + step, 1, max_height);
  }
  if (plan.height[w - 1] == 0) plan.height[w - 1] = current;  // keep a right shore
  return plan;
}

void paint_ground(GridLevel& level, const GroundPlan& plan) {
  for (int c = 0; c < level.width(); ++c)
    for (int k = 0; k < plan.height[c]; ++k)
      level.set(level.height() - 1 - k, c, Tile::Solid);
}

// pipe occupies columns c, c+1; one top pair over (body_rows) body pairs,
// standing on the ground
bool try_place_pipe(GridLevel& level, const GroundPlan& plan, int c, int body_rows) {
  const int h = level.height();
  if (c + 1 >= level.width()) return false;
  const int g = plan.height[c];
  if (g == 0 || plan.height[c + 1] != g) return false;
  const int total = body_rows + 1;
  const int top_row = h - g - total;
  if (top_row < 0) return false;
  for (int r = top_row; r < h - g; ++r)
    if (level.at(r, c) != Tile::Empty || level.at(r, c + 1) != Tile::Empty) return false;
  level.set(top_row, c, Tile::TopLeft);
  level.set(top_row, c + 1, Tile::TopRight);
  for (int r = top_row + 1; r < h - g; ++r) {
    level.set(r, c, Tile::BodyLeft);
    level.set(r, c + 1, Tile::BodyRight);
  }
  return true;
}

}  // namespace

Dataset synth_dataset(int n, int height, int width, const std::string& style,
                      std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("dataset size must be at least 1");
  const bool pipes = style == "pipes";
  const bool gaps = style == "gaps";
  if (!pipes && !gaps && style != "no-pipes")
    throw std::invalid_argument("unknown dataset style '" + style + "'");

  const Formula constraint = build_pipe_constraint(height, width);
  Rng rng(seed);
  Dataset data;
  data.height = height;
  data.width = width;
  data.style = style;
  data.seed = seed;
  data.levels.reserve(n);

  while (static_cast<int>(data.levels.size()) < n) {
    GridLevel level(height, width);
    const GroundPlan plan = gaps ? make_ground(height, width, rng, true, 0.25, 3)
                            : pipes ? make_ground(height, width, rng, true, 0.08, 1)
                                    : make_ground(height, width, rng, false, 0.0, 0);
    paint_ground(level, plan);
    if (pipes) {
      const int want = 1 + static_cast<int>(rng.uniform_int(2));
      int placed = 0;
      for (int attempt = 0; attempt < 12 && placed < want; ++attempt) {
        const int c = static_cast<int>(rng.uniform_int(width - 1));
        const int body = 1 + static_cast<int>(rng.uniform_int(2));
        if (try_place_pipe(level, plan, c, body)) ++placed;
      }
      if (placed == 0) continue;  // resample: a pipes-style level must have a pipe
    }
    if (!constraint.evaluate(level.encode()))
      throw std::logic_error("synthesized level violates the pipe constraint");
    data.levels.push_back(std::move(level));
  }
  return data;
}

Dataset corrupt_dataset(const Dataset& data, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("corruption rate must be in [0,1]");
  const int n = static_cast<int>(data.levels.size());
  const int k = static_cast<int>(std::llround(rate * n));
  Dataset out = data;
  out.corruption_rate = rate;
  if (k == 0) return out;

  const Formula constraint = build_pipe_constraint(data.height, data.width);
  Rng rng(seed);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);

  for (int pick = 0; pick < k; ++pick) {
    GridLevel& level = out.levels[order[pick]];
    // break an existing pipe, or plant a lone top-left tile
    std::vector<std::pair<int, int>> pipe_cells;
    for (int r = 0; r < level.height(); ++r)
      for (int c = 0; c < level.width(); ++c)
        if (is_pipe_tile(level.at(r, c))) pipe_cells.emplace_back(r, c);
    if (!pipe_cells.empty()) {
      const auto [r, c] = pipe_cells[rng.uniform_int(pipe_cells.size())];
      const Tile t = level.at(r, c);
      // erase the horizontal partner so the pairing implication fails
      const int partner =
          (t == Tile::TopLeft || t == Tile::BodyLeft) ? c + 1 : c - 1;
      level.set(r, partner, Tile::Empty);
    } else {
      std::vector<std::pair<int, int>> empties;
      for (int r = 0; r < level.height(); ++r)
        for (int c = 0; c < level.width(); ++c)
          if (level.at(r, c) == Tile::Empty) empties.emplace_back(r, c);
      const auto [r, c] = empties[rng.uniform_int(empties.size())];
      level.set(r, c, Tile::TopLeft);  // unpaired top violates the window rules
    }
    if (constraint.evaluate(level.encode()))
      throw std::logic_error("corruption failed to violate the constraint");
  }
  return out;
}

// ---------------------------------------------------------------------------
// level and dataset I/O

void save_level(const GridLevel& level, std::ostream& out) {
  out << level.height() << ' ' << level.width() << '\n' << level.render();
}

GridLevel load_level(std::istream& in) {
  int h = 0, w = 0;
  in >> h >> w;
  if (!in || h < 1 || w < 1) throw std::runtime_error("bad level header");
  in.ignore();  // trailing newline
  GridLevel level(h, w);
  std::string row;
  for (int r = 0; r < h; ++r) {
    if (!std::getline(in, row) || static_cast<int>(row.size()) != w)
      throw std::runtime_error("bad level row " + std::to_string(r));
    for (int c = 0; c < w; ++c) level.set(r, c, tile_from_char(row[c]));
  }
  return level;
}

void save_dataset(const Dataset& data, std::ostream& out) {
  for (std::size_t i = 0; i < data.levels.size(); ++i) {
    if (i) out << '\n';
    save_level(data.levels[i], out);
  }
}

Dataset load_dataset(std::istream& in) {
  Dataset data;
  while (in >> std::ws, in.good()) {
    GridLevel level = load_level(in);
    if (data.levels.empty()) {
      data.height = level.height();
      data.width = level.width();
    } else if (level.height() != data.height || level.width() != data.width) {
      throw std::runtime_error("dataset mixes level sizes");
    }
    data.levels.push_back(std::move(level));
  }
  if (data.levels.empty()) throw std::runtime_error("empty dataset");
  return data;
}

// ---------------------------------------------------------------------------
// reachability embedding

PhiResult train_phi(const Dataset& data, const std::vector<ReachResult>& labels,
                    const PhiConfig& cfg) {
  if (data.levels.size() != labels.size())
    throw std::invalid_argument("label count does not match dataset size");
  const int n = static_cast<int>(data.levels.size());
  const int in_dim = data.height * data.width * kTileCount;
  const int out_dim = data.height * data.width;

  std::size_t ones = 0, total = 0;
  for (const ReachResult& mask : labels)
    for (std::uint8_t v : mask.reachable) {
      ones += v;
      ++total;
    }
  if (ones == 0 || ones == total)
    throw std::invalid_argument("degenerate labels: a single class");
  const double majority =
      std::max(static_cast<double>(ones), static_cast<double>(total - ones)) /
      static_cast<double>(total);

  Rng rng(cfg.seed);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  const int holdout = std::max(1, static_cast<int>(std::lround(cfg.holdout_fraction * n)));
  const int train_n = n - holdout;
  if (train_n < 1) throw std::invalid_argument("dataset too small for the holdout split");

  MlpSpec spec;
  spec.sizes.push_back(in_dim);
  for (int hsz : cfg.hidden) spec.sizes.push_back(hsz);
  spec.sizes.push_back(out_dim);
  spec.acts.assign(spec.sizes.size() - 1, Activation::Tanh);
  spec.acts.back() = Activation::Sigmoid;
  Mlp net = Mlp::init(spec, rng);
  Adam opt(cfg.lr);

  auto fill_batch = [&](const std::vector<int>& ids, Array& x, Array& y) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto enc = data.levels[ids[i]].encode_real();
      for (int j = 0; j < in_dim; ++j) x.at(static_cast<int>(i), j) = enc[j];
      const auto& mask = labels[ids[i]].reachable;
      for (int j = 0; j < out_dim; ++j) y.at(static_cast<int>(i), j) = mask[j];
    }
  };

  std::vector<int> train_ids(order.begin(), order.begin() + train_n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(train_ids);
    for (int start = 0; start < train_n; start += cfg.batch) {
      const int m = std::min(cfg.batch, train_n - start);
      std::vector<int> ids(train_ids.begin() + start, train_ids.begin() + start + m);
      Array x(m, in_dim), y(m, out_dim);
      fill_batch(ids, x, y);
      Graph g;
      const int input = g.input(std::move(x));
      std::vector<int> params;
      const int pred = net.build(g, input, &params);
      const int loss = g.bce(pred, g.input(std::move(y)));
      g.backward(loss);
      std::vector<const Array*> grads;
      grads.reserve(params.size());
      for (int p : params) grads.push_back(&g.grad(p));
      opt.step(net.parameters(), grads);
    }
  }

  // held-out per-tile accuracy at threshold 0.5
  std::size_t correct = 0, counted = 0;
  for (int i = train_n; i < n; ++i) {
    const int id = order[i];
    const Array pred = net.forward(Array::row(data.levels[id].encode_real()));
    const auto& mask = labels[id].reachable;
    for (int j = 0; j < out_dim; ++j) {
      const bool hit = pred.at(0, j) > 0.5;
      correct += hit == (mask[j] != 0);
      ++counted;
    }
  }

  PhiResult result;
  result.net = std::move(net);
  result.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(counted);
  result.majority_rate = majority;
  return result;
}

Formula build_reachability_constraint(int height) {
  FormulaBuilder fb;
  std::vector<int> vars;
  for (int r = 0; r < height; ++r) vars.push_back(fb.var("r" + std::to_string(r)));
  const int root = fb.disjunction(std::move(vars));
  return std::move(fb).build(root);
}

std::vector<int> reachability_theta_map(int height, int width) {
  std::vector<int> map(std::size_t(height) * width, -1);
  for (int r = 0; r < height; ++r) map[std::size_t(r) * width + (width - 1)] = r;
  return map;
}

// ---------------------------------------------------------------------------
// metrics

Metrics compute_metrics(const std::vector<GridLevel>& samples, const Dataset& data,
                        const Circuit& constraint) {
  if (samples.empty()) throw std::invalid_argument("no samples to score");
  Metrics m;

  std::set<std::string> dataset_keys;
  for (const GridLevel& level : data.levels) dataset_keys.insert(level.render());

  std::size_t valid = 0, novel = 0;
  std::set<std::string> distinct_valid;
  for (const GridLevel& level : samples) {
    const bool ok = constraint.check_validity(level.encode());
    if (!ok) continue;
    ++valid;
    const std::string key = level.render();
    distinct_valid.insert(key);
    if (!dataset_keys.count(key)) ++novel;
  }
  const double n = static_cast<double>(samples.size());
  m.validity = static_cast<double>(valid) / n;
  m.novelty_defined = valid > 0;
  m.novelty = valid > 0 ? static_cast<double>(novel) / static_cast<double>(valid) : 0.0;
  m.uniqueness = static_cast<double>(distinct_valid.size()) / n;

  // mean pairwise L1 over the Boolean encodings, normalized by length
  std::vector<Assignment> encodings;
  encodings.reserve(samples.size());
  for (const GridLevel& level : samples) encodings.push_back(level.encode());
  const double len = static_cast<double>(encodings[0].size());
  double pair_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < encodings.size(); ++i)
    for (std::size_t j = i + 1; j < encodings.size(); ++j) {
      int diff = 0;
      for (std::size_t k = 0; k < encodings[i].size(); ++k)
        diff += encodings[i][k] != encodings[j][k];
      pair_sum += diff / len;
      ++pairs;
    }
  m.diversity = pairs ? pair_sum / static_cast<double>(pairs) : 0.0;

  double pipe_sum = 0.0;
  for (const GridLevel& level : samples) pipe_sum += level.pipe_tile_count();
  m.pipe_tiles = pipe_sum / n;
  return m;
}

std::string metrics_csv_header() {
  return "validity,novelty,uniqueness,diversity,pipe_tiles";
}

std::string metrics_csv_row(const Metrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f", m.validity, m.novelty,
                m.uniqueness, m.diversity, m.pipe_tiles);
  return buf;
}

}  // namespace semgen
