#include "teco/mazeworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include <json.hpp>

#include "teco/parallel.hpp"
#include "teco/tensor.hpp"

namespace teco::maze {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::pair<int, int>> MazeSpec::floor_cells() const {
  std::vector<std::pair<int, int>> cells;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!is_wall(x, y)) cells.emplace_back(x, y);
    }
  }
  return cells;
}

MazeSpec generate_maze(uint64_t seed, int size) {
  if (size < 3 || size % 2 == 0) {
    nn::fail("generate_maze: size must be odd and >= 3");
  }
  MazeSpec maze;
  maze.size = size;
  maze.seed = seed;
  maze.walls.assign(static_cast<size_t>(size * size), 1);
  Rng rng(seed, /*stream=*/0xD1CE);

  auto carve = [&](int x, int y) {
    maze.walls[static_cast<size_t>(y * size + x)] = 0;
  };

  // Randomized DFS over rooms at odd coordinates.
  std::vector<std::pair<int, int>> stack = {{1, 1}};
  std::set<std::pair<int, int>> seen = {{1, 1}};
  carve(1, 1);
  const int dirs[4][2] = {{2, 0}, {0, 2}, {-2, 0}, {0, -2}};
  while (!stack.empty()) {
    auto [x, y] = stack.back();
    int order[4] = {0, 1, 2, 3};
    for (int i = 3; i > 0; --i) {
      const int j = static_cast<int>(rng.next_below(static_cast<uint64_t>(i + 1)));
      std::swap(order[i], order[j]);
    }
    bool advanced = false;
    for (int i = 0; i < 4 && !advanced; ++i) {
      const int nx = x + dirs[order[i]][0];
      const int ny = y + dirs[order[i]][1];
      if (nx < 1 || ny < 1 || nx >= size - 1 || ny >= size - 1) continue;
      if (seen.count({nx, ny})) continue;
      carve((x + nx) / 2, (y + ny) / 2);
      carve(nx, ny);
      seen.insert({nx, ny});
      stack.emplace_back(nx, ny);
      advanced = true;
    }
    if (!advanced) stack.pop_back();
  }

  for (int q = 0; q < 4; ++q) {
    maze.wall_texture[static_cast<size_t>(q)] =
        static_cast<uint8_t>(rng.next_below(kTextureCount));
    maze.floor_texture[static_cast<size_t>(q)] =
        static_cast<uint8_t>(rng.next_below(kTextureCount));
  }
  return maze;
}

int heading_cardinal(int heading) {
  const int h = ((heading % 360) + 360) % 360;
  return static_cast<int>(std::lround(h / 90.0)) % 4;
}

AgentState initial_state(const MazeSpec& maze) {
  for (int y = 0; y < maze.size; ++y) {
    for (int x = 0; x < maze.size; ++x) {
      if (!maze.is_wall(x, y)) return AgentState{x, y, 0};
    }
  }
  nn::fail("initial_state: maze has no floor cells");
}

namespace {
const int kCardinalDx[4] = {1, 0, -1, 0};
const int kCardinalDy[4] = {0, 1, 0, -1};
}  // namespace

AgentState apply_action(const MazeSpec& maze, AgentState s, uint8_t action) {
  switch (action) {
    case kReset:
      return s;
    case kTurnLeft:
      s.heading = (s.heading + kHeadingStep) % 360;
      return s;
    case kTurnRight:
      s.heading = (s.heading - kHeadingStep + 360) % 360;
      return s;
    case kForward: {
      const int d = heading_cardinal(s.heading);
      const int nx = s.x + kCardinalDx[d];
      const int ny = s.y + kCardinalDy[d];
      if (!maze.is_wall(nx, ny)) {
        s.x = nx;
        s.y = ny;
      }
      return s;
    }
    default:
      nn::fail("apply_action: unknown action id " + std::to_string(action));
  }
}

std::vector<AgentState> replay_states(const MazeSpec& maze,
                                      const std::vector<uint8_t>& actions) {
  std::vector<AgentState> states;
  states.reserve(actions.size());
  AgentState s = initial_state(maze);
  for (size_t i = 0; i < actions.size(); ++i) {
    s = apply_action(maze, s, actions[i]);
    states.push_back(s);
  }
  return states;
}

// ---------------------------------------------------------------------------
// Renderer

namespace {

struct Color {
  uint8_t r, g, b;
};

const Color kPalette[kTextureCount] = {
    {200, 64, 64},  {64, 184, 64},  {72, 96, 220},  {212, 192, 64},
    {192, 72, 204}, {64, 192, 192}, {228, 140, 48}, {152, 152, 164},
};

Color scale_color(Color c, double f) {
  auto s = [&](uint8_t v) {
    return static_cast<uint8_t>(std::clamp(v * f, 0.0, 255.0));
  };
  return {s(c.r), s(c.g), s(c.b)};
}

// Wall texel: base palette color, pattern family by id, darker variant on
// pattern cells.
Color wall_texel(int texture_id, double u, double v) {
  const Color base = kPalette[texture_id % kTextureCount];
  bool dark;
  switch (texture_id % 3) {
    case 0:
      dark = ((static_cast<int>(u * 4) + static_cast<int>(v * 4)) & 1) != 0;
      break;
    case 1:
      dark = (static_cast<int>(v * 6) & 1) != 0;
      break;
    default:
      dark = (static_cast<int>(u * 6) & 1) != 0;
      break;
  }
  return dark ? scale_color(base, 0.55) : base;
}

const Color kCeiling = {38, 38, 48};

}  // namespace

void render_egocentric(const MazeSpec& maze, const AgentState& state,
                       int resolution, uint8_t* rgb) {
  if (resolution < 16) {
    nn::fail("render_egocentric: resolution must be >= 16");
  }
  const int res = resolution;
  const double fov_half_tan = std::tan(33.0 * std::numbers::pi / 180.0);
  const double theta = state.heading * std::numbers::pi / 180.0;
  const double dirx = std::cos(theta);
  const double diry = std::sin(theta);
  // screen-right vector (heading rotated -90 degrees)
  const double rightx = diry;
  const double righty = -dirx;
  const double posx = state.x + 0.5;
  const double posy = state.y + 0.5;

  auto put = [&](int x, int y, Color c) {
    uint8_t* p = rgb + (static_cast<int64_t>(y) * res + x) * 3;
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  };

  for (int col = 0; col < res; ++col) {
    const double cam = 2.0 * col / (res - 1.0) - 1.0;
    const double rayx = dirx + rightx * cam * fov_half_tan;
    const double rayy = diry + righty * cam * fov_half_tan;

    int mapx = state.x;
    int mapy = state.y;
    const double ddx = rayx == 0.0 ? 1e30 : std::abs(1.0 / rayx);
    const double ddy = rayy == 0.0 ? 1e30 : std::abs(1.0 / rayy);
    const int stepx = rayx < 0 ? -1 : 1;
    const int stepy = rayy < 0 ? -1 : 1;
    double sidex = (rayx < 0 ? (posx - mapx) : (mapx + 1.0 - posx)) * ddx;
    double sidey = (rayy < 0 ? (posy - mapy) : (mapy + 1.0 - posy)) * ddy;
    int side = 0;
    for (int it = 0; it < 4 * maze.size; ++it) {
      if (sidex < sidey) {
        sidex += ddx;
        mapx += stepx;
        side = 0;
      } else {
        sidey += ddy;
        mapy += stepy;
        side = 1;
      }
      if (maze.is_wall(mapx, mapy)) break;
    }
    const double dist =
        side == 0 ? sidex - ddx : sidey - ddy;  // perpendicular distance
    const double safe_dist = std::max(dist, 1e-6);
    double wall_u = side == 0 ? posy + safe_dist * rayy : posx + safe_dist * rayx;
    wall_u -= std::floor(wall_u);

    const int line = static_cast<int>(res / safe_dist);
    const int top = std::max(res / 2 - line / 2, 0);
    const int bottom = std::min(res / 2 + line / 2, res - 1);
    const int tex =
        maze.wall_texture[static_cast<size_t>(maze.quadrant(
            std::clamp(mapx, 0, maze.size - 1),
            std::clamp(mapy, 0, maze.size - 1)))];

    for (int y = 0; y < top; ++y) put(col, y, kCeiling);
    for (int y = top; y <= bottom; ++y) {
      const double v =
          line > 0 ? (y - (res / 2.0 - line / 2.0)) / line : 0.5;
      Color c = wall_texel(tex, wall_u, std::clamp(v, 0.0, 0.999));
      if (side == 0) c = scale_color(c, 0.75);
      put(col, y, c);
    }
    // perspective floor cast under the wall slice
    for (int y = bottom + 1; y < res; ++y) {
      const double p = y - res / 2.0 + 0.5;
      const double row_dist = (0.5 * res) / p;
      const double fx = posx + row_dist * rayx;
      const double fy = posy + row_dist * rayy;
      const int cx = std::clamp(static_cast<int>(std::floor(fx)), 0,
                                maze.size - 1);
      const int cy = std::clamp(static_cast<int>(std::floor(fy)), 0,
                                maze.size - 1);
      const Color base =
          kPalette[maze.floor_texture[static_cast<size_t>(
              maze.quadrant(cx, cy))] % kTextureCount];
      const bool dark = ((cx + cy) & 1) != 0;
      put(col, y, scale_color(base, dark ? 0.45 : 0.7));
    }
  }
}

std::vector<uint8_t> render_frame(const MazeSpec& maze,
                                  const AgentState& state, int resolution) {
  std::vector<uint8_t> out(
      static_cast<size_t>(resolution) * resolution * 3);
  render_egocentric(maze, state, resolution, out.data());
  return out;
}

// ---------------------------------------------------------------------------
// Traversal policy

namespace {

std::vector<int> bfs_distances(const MazeSpec& maze, int sx, int sy) {
  const int n = maze.size;
  std::vector<int> dist(static_cast<size_t>(n * n), -1);
  std::deque<std::pair<int, int>> queue = {{sx, sy}};
  dist[static_cast<size_t>(sy * n + sx)] = 0;
  while (!queue.empty()) {
    auto [x, y] = queue.front();
    queue.pop_front();
    for (int d = 0; d < 4; ++d) {
      const int nx = x + kCardinalDx[d];
      const int ny = y + kCardinalDy[d];
      if (maze.is_wall(nx, ny)) continue;
      if (dist[static_cast<size_t>(ny * n + nx)] >= 0) continue;
      dist[static_cast<size_t>(ny * n + nx)] =
          dist[static_cast<size_t>(y * n + x)] + 1;
      queue.emplace_back(nx, ny);
    }
  }
  return dist;
}

// First cell on a shortest path from (sx,sy) to (gx,gy); BFS from the goal
// so the next step is the neighbour that decreases distance (fixed E,N,W,S
// order on ties).
std::pair<int, int> next_step(const MazeSpec& maze, int sx, int sy, int gx,
                              int gy) {
  const auto dist = bfs_distances(maze, gx, gy);
  const int n = maze.size;
  const int here = dist[static_cast<size_t>(sy * n + sx)];
  if (here <= 0) return {sx, sy};
  for (int d = 0; d < 4; ++d) {
    const int nx = sx + kCardinalDx[d];
    const int ny = sy + kCardinalDy[d];
    if (maze.is_wall(nx, ny)) continue;
    if (dist[static_cast<size_t>(ny * n + nx)] == here - 1) return {nx, ny};
  }
  return {sx, sy};
}

}  // namespace

PlanResult plan_trajectory(const MazeSpec& maze, int64_t t, double noise,
                           Rng& rng) {
  if (t < 1) nn::fail("plan_trajectory: T must be >= 1");
  PlanResult out;
  AgentState state = initial_state(maze);
  out.actions.push_back(kReset);
  out.states.push_back(state);
  std::set<std::pair<int, int>> visited = {{state.x, state.y}};
  std::pair<int, int> goal = {state.x, state.y};

  auto pick_goal = [&](int cx, int cy) {
    const auto dist = bfs_distances(maze, cx, cy);
    const int n = maze.size;
    int best = -1;
    std::pair<int, int> chosen = {cx, cy};
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (maze.is_wall(x, y) || visited.count({x, y})) continue;
        const int dv = dist[static_cast<size_t>(y * n + x)];
        if (dv > best) {
          best = dv;
          chosen = {x, y};
        }
      }
    }
    if (best < 0) {
      // everything visited: start a fresh sweep
      visited.clear();
      visited.insert({cx, cy});
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          if (maze.is_wall(x, y) || (x == cx && y == cy)) continue;
          const int dv = dist[static_cast<size_t>(y * n + x)];
          if (dv > best) {
            best = dv;
            chosen = {x, y};
          }
        }
      }
    }
    return chosen;
  };

  for (int64_t step = 1; step < t; ++step) {
    const std::pair<int, int> cur = {state.x, state.y};
    if (goal == cur) goal = pick_goal(state.x, state.y);

    uint8_t planned = kForward;
    if (goal != cur) {
      const auto [nx, ny] = next_step(maze, state.x, state.y, goal.first,
                                      goal.second);
      int target_dir = 0;
      for (int d = 0; d < 4; ++d) {
        if (nx - state.x == kCardinalDx[d] && ny - state.y == kCardinalDy[d]) {
          target_dir = d;
        }
      }
      if (heading_cardinal(state.heading) == target_dir) {
        planned = kForward;
      } else {
        const int target_deg = target_dir * 90;
        const int delta = ((target_deg - state.heading) % 360 + 540) % 360 - 180;
        planned = delta >= 0 ? kTurnLeft : kTurnRight;
      }
    }
    uint8_t action = planned;
    if (rng.next_double() < noise) {
      action = static_cast<uint8_t>(1 + rng.next_below(3));
    }
    state = apply_action(maze, state, action);
    out.actions.push_back(action);
    out.states.push_back(state);
    visited.insert({state.x, state.y});
  }
  return out;
}

int64_t count_revisits(const std::vector<AgentState>& states) {
  std::map<std::tuple<int, int, int>, int> counts;
  for (const auto& s : states) ++counts[{s.x, s.y, s.heading}];
  int64_t revisited = 0;
  for (const auto& [key, c] : counts) {
    if (c >= 2) ++revisited;
  }
  return revisited;
}

// ---------------------------------------------------------------------------
// TECOD1 container

namespace {

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

uint32_t get_u32(const char* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(p[i])) << (8 * i);
  return v;
}

uint64_t get_u64(const char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(p[i])) << (8 * i);
  return v;
}

void atomic_write(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) nn::fail("cannot write " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) nn::fail("short write to " + tmp);
  }
  fs::rename(tmp, path);
}

}  // namespace

void write_trajectory(const std::string& path, const TrajectoryRecord& rec) {
  if (rec.frames.size() != static_cast<size_t>(rec.t * rec.h * rec.w * 3) ||
      rec.actions.size() != static_cast<size_t>(rec.t) ||
      rec.action_mask.size() != static_cast<size_t>(rec.t)) {
    nn::fail("write_trajectory: inconsistent record sizes");
  }
  std::string buf;
  buf.reserve(14 + rec.frames.size() + 2 * rec.actions.size() + 8);
  buf.append("TECOD1");
  put_u32(buf, static_cast<uint32_t>(rec.t));
  put_u32(buf, static_cast<uint32_t>(rec.h));
  put_u32(buf, static_cast<uint32_t>(rec.w));
  buf.append(reinterpret_cast<const char*>(rec.frames.data()),
             rec.frames.size());
  buf.append(reinterpret_cast<const char*>(rec.actions.data()),
             rec.actions.size());
  buf.append(reinterpret_cast<const char*>(rec.action_mask.data()),
             rec.action_mask.size());
  put_u64(buf, rec.maze_seed);
  atomic_write(path, buf);
}

TrajectoryRecord read_trajectory(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) nn::fail("cannot open trajectory file " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 26 || buf.compare(0, 6, "TECOD1") != 0) {
    nn::fail(path + " is not a TECOD1 trajectory file");
  }
  TrajectoryRecord rec;
  rec.t = get_u32(buf.data() + 6);
  rec.h = get_u32(buf.data() + 10);
  rec.w = get_u32(buf.data() + 14);
  const size_t frame_bytes = static_cast<size_t>(rec.t * rec.h * rec.w * 3);
  const size_t expect = 18 + frame_bytes + 2 * static_cast<size_t>(rec.t) + 8;
  if (buf.size() != expect) {
    nn::fail(path + ": truncated or oversized TECOD1 payload (" +
             std::to_string(buf.size()) + " bytes, expected " +
             std::to_string(expect) + ")");
  }
  const char* p = buf.data() + 18;
  rec.frames.assign(p, p + frame_bytes);
  p += frame_bytes;
  rec.actions.assign(p, p + rec.t);
  p += rec.t;
  rec.action_mask.assign(p, p + rec.t);
  p += rec.t;
  rec.maze_seed = get_u64(p);
  return rec;
}

// ---------------------------------------------------------------------------
// Dataset builder

TrajectoryRecord make_trajectory(const DatasetConfig& cfg, int64_t index) {
  const Rng root(cfg.seed, /*stream=*/0xDA7A);
  for (int attempt = 0; attempt < 256; ++attempt) {
    Rng base = root.split(static_cast<uint64_t>(index))
                   .split(static_cast<uint64_t>(attempt));
    const uint64_t maze_seed = base.next_u64();
    MazeSpec maze = generate_maze(maze_seed, cfg.maze_size);
    Rng plan_rng = base.split(1);
    PlanResult plan = plan_trajectory(maze, cfg.frames, cfg.traversal_noise,
                                      plan_rng);
    if (count_revisits(plan.states) < cfg.min_revisits) continue;

    TrajectoryRecord rec;
    rec.t = cfg.frames;
    rec.h = cfg.resolution;
    rec.w = cfg.resolution;
    rec.maze_seed = maze_seed;
    rec.actions = plan.actions;
    rec.states = plan.states;
    rec.frames.resize(static_cast<size_t>(rec.t) * rec.h * rec.w * 3);
    for (int64_t t = 0; t < rec.t; ++t) {
      render_egocentric(maze, plan.states[static_cast<size_t>(t)],
                        cfg.resolution,
                        rec.frames.data() + t * rec.h * rec.w * 3);
    }
    // contiguous masked spans
    rec.action_mask.assign(static_cast<size_t>(rec.t), 0);
    Rng mask_rng = base.split(2);
    int64_t t = 0;
    while (t < rec.t) {
      const int64_t span =
          cfg.mask_span_min +
          static_cast<int64_t>(mask_rng.next_below(static_cast<uint64_t>(
              cfg.mask_span_max - cfg.mask_span_min + 1)));
      const bool masked = mask_rng.next_double() < cfg.action_mask_probability;
      for (int64_t i = t; i < std::min(t + span, rec.t); ++i) {
        rec.action_mask[static_cast<size_t>(i)] = masked ? 1 : 0;
      }
      t += span;
    }
    return rec;
  }
  nn::fail("make_trajectory: could not satisfy min_revisits=" +
           std::to_string(cfg.min_revisits) + " for index " +
           std::to_string(index));
}

namespace {

std::string traj_name(int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traj_%05lld.tecod1",
                static_cast<long long>(index));
  return buf;
}

json config_to_json(const DatasetConfig& c) {
  return json{{"count", c.count},
              {"frames", c.frames},
              {"resolution", c.resolution},
              {"maze_size", c.maze_size},
              {"traversal_noise", c.traversal_noise},
              {"action_mask_probability", c.action_mask_probability},
              {"mask_span_min", c.mask_span_min},
              {"mask_span_max", c.mask_span_max},
              {"eval_fraction", c.eval_fraction},
              {"min_revisits", c.min_revisits},
              {"seed", c.seed}};
}

DatasetConfig config_from_json(const json& j) {
  DatasetConfig c;
  c.count = j.at("count").get<int64_t>();
  c.frames = j.at("frames").get<int64_t>();
  c.resolution = j.at("resolution").get<int>();
  c.maze_size = j.at("maze_size").get<int>();
  c.traversal_noise = j.at("traversal_noise").get<double>();
  c.action_mask_probability = j.at("action_mask_probability").get<double>();
  c.mask_span_min = j.at("mask_span_min").get<int>();
  c.mask_span_max = j.at("mask_span_max").get<int>();
  c.eval_fraction = j.at("eval_fraction").get<double>();
  c.min_revisits = j.at("min_revisits").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

}  // namespace

uint64_t fnv1a_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) nn::fail("fnv1a_file: cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (f) {
    f.read(buf, sizeof(buf));
    const std::streamsize got = f.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<uint8_t>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

DatasetManifest build_dataset(const DatasetConfig& cfg,
                              const std::string& out_dir) {
  if (cfg.count < 1) nn::fail("build_dataset: count must be >= 1");
  fs::create_directories(out_dir);
  if (!fs::is_directory(out_dir)) {
    nn::fail("build_dataset: cannot create output directory " + out_dir);
  }
  std::vector<uint64_t> hashes(static_cast<size_t>(cfg.count), 0);
  parallel_for(cfg.count, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      TrajectoryRecord rec = make_trajectory(cfg, i);
      const std::string path = out_dir + "/" + traj_name(i);
      write_trajectory(path, rec);
      hashes[static_cast<size_t>(i)] = fnv1a_file(path);
    }
  });

  DatasetManifest manifest;
  manifest.config = cfg;
  manifest.file_hashes = hashes;
  const int64_t eval_count = static_cast<int64_t>(
      std::llround(cfg.eval_fraction * static_cast<double>(cfg.count)));
  const int64_t train_count = cfg.count - eval_count;
  for (int64_t i = 0; i < cfg.count; ++i) {
    if (i < train_count) {
      manifest.train_files.push_back(traj_name(i));
    } else {
      manifest.eval_files.push_back(traj_name(i));
    }
  }
  write_manifest(out_dir, manifest);
  return manifest;
}

void write_manifest(const std::string& dir, const DatasetManifest& manifest) {
  json j;
  j["format"] = "TECOD1";
  j["config"] = config_to_json(manifest.config);
  j["train"] = manifest.train_files;
  j["eval"] = manifest.eval_files;
  std::vector<std::string> hex;
  hex.reserve(manifest.file_hashes.size());
  for (uint64_t h : manifest.file_hashes) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    hex.emplace_back(buf);
  }
  j["file_hashes"] = hex;
  atomic_write(dir + "/manifest.json", j.dump(2) + "\n");
}

DatasetManifest read_manifest(const std::string& dir) {
  std::ifstream f(dir + "/manifest.json");
  if (!f) nn::fail("read_manifest: no manifest.json under " + dir);
  json j = json::parse(f);
  DatasetManifest m;
  m.config = config_from_json(j.at("config"));
  m.train_files = j.at("train").get<std::vector<std::string>>();
  m.eval_files = j.at("eval").get<std::vector<std::string>>();
  for (const auto& s : j.at("file_hashes").get<std::vector<std::string>>()) {
    m.file_hashes.push_back(std::stoull(s, nullptr, 16));
  }
  return m;
}

std::vector<std::string> verify_dataset(const std::string& dir) {
  std::vector<std::string> errors;
  DatasetManifest m;
  try {
    m = read_manifest(dir);
  } catch (const std::exception& e) {
    return {e.what()};
  }
  std::vector<std::string> all = m.train_files;
  all.insert(all.end(), m.eval_files.begin(), m.eval_files.end());
  if (all.size() != m.file_hashes.size()) {
    errors.push_back("manifest lists " + std::to_string(all.size()) +
                     " files but " + std::to_string(m.file_hashes.size()) +
                     " hashes");
    return errors;
  }
  if (static_cast<int64_t>(all.size()) != m.config.count) {
    errors.push_back("manifest count " + std::to_string(all.size()) +
                     " does not match config count " +
                     std::to_string(m.config.count));
  }
  for (size_t i = 0; i < all.size(); ++i) {
    const std::string path = dir + "/" + all[i];
    try {
      const uint64_t h = fnv1a_file(path);
      if (h != m.file_hashes[i]) {
        errors.push_back(all[i] + ": content hash mismatch");
        continue;
      }
      TrajectoryRecord rec = read_trajectory(path);
      if (rec.t != m.config.frames || rec.h != m.config.resolution ||
          rec.w != m.config.resolution) {
        errors.push_back(all[i] + ": dimensions disagree with config");
      }
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  }
  return errors;
}

}  // namespace teco::maze
