#pragma once

// Procedural maze benchmark: quadrant-textured mazes carved by randomized
// DFS, an agent with 20-degree headings and forward motion on the cell
// grid, a column-raycast egocentric renderer, a furthest-unvisited-point
// traversal policy, and the TECOD1 on-disk trajectory format.
//
// Everything here is a pure function of seeds: regenerating a dataset with
// the same config is byte-identical, independent of thread count.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "teco/rng.hpp"

namespace teco::maze {

struct MazeSpec {
  int size = 7;
  std::vector<uint8_t> walls;  // size*size, 1 = wall, row-major [y*size+x]
  std::array<uint8_t, 4> wall_texture{};   // per quadrant: NW, NE, SW, SE
  std::array<uint8_t, 4> floor_texture{};
  uint64_t seed = 0;

  bool in_bounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < size && y < size;
  }
  bool is_wall(int x, int y) const {
    return !in_bounds(x, y) || walls[static_cast<size_t>(y * size + x)] != 0;
  }
  int quadrant(int x, int y) const {
    const int half = size / 2;
    return (y >= half ? 2 : 0) + (x >= half ? 1 : 0);
  }
  std::vector<std::pair<int, int>> floor_cells() const;
};

// Randomized depth-first carving on the odd-cell lattice; all floor cells
// mutually reachable, outer boundary fully walled. size must be odd >= 3.
MazeSpec generate_maze(uint64_t seed, int size = 7);

inline constexpr int kHeadingStep = 20;
inline constexpr int kTextureCount = 8;

enum Action : uint8_t {
  kReset = 0,
  kTurnLeft = 1,
  kTurnRight = 2,
  kForward = 3,
};
inline constexpr int kActionCount = 4;

struct AgentState {
  int x = 1;
  int y = 1;
  int heading = 0;  // degrees, multiple of 20

  bool operator==(const AgentState&) const = default;
};

// Cardinal direction nearest the heading: 0=+x, 1=+y, 2=-x, 3=-y.
int heading_cardinal(int heading);

// Deterministic spawn: first floor cell in row-major order, heading 0.
AgentState initial_state(const MazeSpec& maze);

// Forward into a wall is a no-op; turns are +-20 degrees; reset is a no-op
// marker used as the first action of every trajectory.
AgentState apply_action(const MazeSpec& maze, AgentState s, uint8_t action);

// Replay a stored action list from the deterministic spawn.
std::vector<AgentState> replay_states(const MazeSpec& maze,
                                      const std::vector<uint8_t>& actions);

// Column-per-ray 2.5D raycast at a square resolution (>= 16). Pure function
// of (maze, state, resolution).
void render_egocentric(const MazeSpec& maze, const AgentState& state,
                       int resolution, uint8_t* rgb_out);
std::vector<uint8_t> render_frame(const MazeSpec& maze,
                                  const AgentState& state, int resolution);

struct PlanResult {
  std::vector<uint8_t> actions;     // [T], actions[0] == kReset
  std::vector<AgentState> states;   // [T], states[0] == spawn
};

// Repeatedly navigates to the furthest unvisited floor cell (BFS metric)
// by shortest path; each emitted step is replaced by a uniformly random
// action with probability `noise`.
PlanResult plan_trajectory(const MazeSpec& maze, int64_t t, double noise,
                           Rng& rng);

struct TrajectoryRecord {
  int64_t t = 0;
  int64_t h = 0;
  int64_t w = 0;
  std::vector<uint8_t> frames;       // t*h*w*3
  std::vector<uint8_t> actions;      // t
  std::vector<uint8_t> action_mask;  // t, 1 = action hidden from the model
  uint64_t maze_seed = 0;
  std::vector<AgentState> states;    // t; not serialized, replayable
};

// Number of (position, heading) pairs seen at least twice.
int64_t count_revisits(const std::vector<AgentState>& states);

// TECOD1 little-endian container:
//   "TECOD1" | u32 T | u32 H | u32 W | T*H*W*3 rgb | T actions | T mask | u64 maze seed
void write_trajectory(const std::string& path, const TrajectoryRecord& rec);
TrajectoryRecord read_trajectory(const std::string& path);

struct DatasetConfig {
  int64_t count = 512;
  int64_t frames = 40;
  int resolution = 32;
  int maze_size = 7;
  double traversal_noise = 0.1;
  double action_mask_probability = 0.25;
  int mask_span_min = 4;
  int mask_span_max = 8;
  double eval_fraction = 0.125;
  int min_revisits = 0;  // regenerate a trajectory until it revisits
  uint64_t seed = 0;
};

// One trajectory with all randomness derived from (cfg.seed, index).
TrajectoryRecord make_trajectory(const DatasetConfig& cfg, int64_t index);

struct DatasetManifest {
  DatasetConfig config;
  std::vector<std::string> train_files;  // relative to the manifest dir
  std::vector<std::string> eval_files;
  std::vector<uint64_t> file_hashes;     // FNV-1a over each file, train then eval
};

// Writes one TECOD1 file per trajectory plus manifest.json; files are
// staged and atomically renamed. Trajectory generation fans out across the
// thread pool with per-index seeds.
DatasetManifest build_dataset(const DatasetConfig& cfg,
                              const std::string& out_dir);

DatasetManifest read_manifest(const std::string& dir);
void write_manifest(const std::string& dir, const DatasetManifest& manifest);

// Re-hashes every file against the manifest; returns a human-readable
// error list (empty when consistent).
std::vector<std::string> verify_dataset(const std::string& dir);

uint64_t fnv1a_file(const std::string& path);

}  // namespace teco::maze
