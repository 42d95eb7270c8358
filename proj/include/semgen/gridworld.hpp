#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "semgen/autodiff.hpp"
#include "semgen/circuit.hpp"
#include "semgen/formula.hpp"
#include "semgen/rng.hpp"

namespace semgen {

// Tile alphabet. Pipes are two columns wide: a top pair (TL TR) over one or
// more body pairs (BL BR).
enum class Tile : std::uint8_t {
  Empty = 0,
  Solid = 1,
  TopLeft = 2,
  TopRight = 3,
  BodyLeft = 4,
  BodyRight = 5,
};
constexpr int kTileCount = 6;

char tile_char(Tile t);
Tile tile_from_char(char c);
bool is_pipe_tile(Tile t);

// H x W tile grid. The Boolean view is one literal per (cell, tile): row-major
// cells, the six tile literals contiguous per cell.
class GridLevel {
 public:
  GridLevel(int height, int width, Tile fill = Tile::Empty);

  int height() const { return height_; }
  int width() const { return width_; }
  Tile at(int r, int c) const { return tiles_[std::size_t(r) * width_ + c]; }
  void set(int r, int c, Tile t) { tiles_[std::size_t(r) * width_ + c] = t; }

  Assignment encode() const;                 // length H*W*6, exactly one per cell
  std::vector<double> encode_real() const;   // same bits as doubles
  static GridLevel decode(int height, int width, std::span<const std::uint8_t> bits);

  // rows top to bottom, one character per tile
  std::string render() const;

  bool operator==(const GridLevel&) const = default;

  int pipe_tile_count() const;

 private:
  int height_;
  int width_;
  std::vector<Tile> tiles_;
};

// Boolean variable index of tile t at cell (r, c) on a width-W grid.
int tile_var(int width, int r, int c, Tile t);
std::string tile_var_name(int r, int c, Tile t);

// Local pipe well-formedness: exactly one tile per cell, horizontal top/body
// pairing, vertical continuation, and border exclusions, all from 2x2-window
// implications.
Formula build_pipe_constraint(int height, int width);

// Simplified platformer movement used by the reachability oracle.
struct ReachSpec {
  int max_jump_up = 2;    // rows of upward gain per move
  int max_jump_span = 2;  // columns covered per move (1 = plain step)
};

struct ReachResult {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> reachable;  // H*W row-major mask
  bool has_start = false;

  bool at(int r, int c) const { return reachable[std::size_t(r) * width + c] != 0; }
};

// Breadth-first closure of the movement rules, seeded at the left-most
// column's lowest standable cell. No standable start yields an all-false mask
// with has_start = false.
ReachResult reachable_tiles(const GridLevel& level, const ReachSpec& spec = {});

// true iff any cell in the right-most column is reachable
bool is_playable(const GridLevel& level, const ReachSpec& spec = {});

struct Dataset {
  int height = 0;
  int width = 0;
  std::vector<GridLevel> levels;
  // provenance
  std::string style;
  std::uint64_t seed = 0;
  double corruption_rate = 0.0;
};

// Procedural generator: solid ground with height variation, optional gaps and
// well-formed pipes. Styles: "pipes", "no-pipes", "gaps". Every emitted level
// satisfies build_pipe_constraint.
Dataset synth_dataset(int n, int height, int width, const std::string& style,
                      std::uint64_t seed);

// Overwrites round(rate*n) levels (deterministic count) with a pipe-breaking
// mutation; every mutated level violates the pipe constraint.
Dataset corrupt_dataset(const Dataset& data, double rate, std::uint64_t seed);

// level file format: "H W" header then H rows; datasets concatenated with one
// blank line between levels
void save_level(const GridLevel& level, std::ostream& out);
GridLevel load_level(std::istream& in);
void save_dataset(const Dataset& data, std::ostream& out);
Dataset load_dataset(std::istream& in);

struct PhiConfig {
  std::vector<int> hidden{128};
  int epochs = 30;
  int batch = 32;
  double lr = 1e-3;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 1;
};

struct PhiResult {
  Mlp net;                    // H*W*6 -> H*W sigmoid reachability probabilities
  double heldout_accuracy = 0.0;
  double majority_rate = 0.0; // most frequent label's share, the trivial baseline
};

// Trains the reachability embedding against oracle labels (one mask per
// level). Throws std::invalid_argument if the labels are degenerate (a single
// class overall).
PhiResult train_phi(const Dataset& data, const std::vector<ReachResult>& labels,
                    const PhiConfig& cfg);

// "some right-most tile is reachable": a disjunction over the H per-row
// reachability variables r0..r{H-1}. The compiled circuit is a chain of H
// nodes.
Formula build_reachability_constraint(int height);

// circuit-variable <- phi-output-column map for the reachability constraint:
// entry j is the circuit variable fed by phi output j, or -1
std::vector<int> reachability_theta_map(int height, int width);

struct Metrics {
  double validity = 0.0;
  double novelty = 0.0;
  double uniqueness = 0.0;
  double diversity = 0.0;         // mean pairwise L1 / encoding length
  double pipe_tiles = 0.0;        // mean pipe tiles per sample
  bool novelty_defined = false;   // false when there were no valid samples
};

Metrics compute_metrics(const std::vector<GridLevel>& samples, const Dataset& data,
                        const Circuit& constraint);

std::string metrics_csv_header();
std::string metrics_csv_row(const Metrics& m);

}  // namespace semgen
