#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cevo/actions.hpp"
#include "cevo/errors.hpp"
#include "cevo/frame.hpp"

namespace cevo {

/// Health-gathering room. Distances are in grid cells, angles in degrees.
struct WorldConfig {
  int room_width = 10;  // interior cells; a wall ring surrounds them
  int room_height = 10;
  int frame_height = 120;
  int frame_width = 160;
  double fov_degrees = 90.0;

  double start_health = 100.0;
  double acid_damage = 4.0;
  int acid_interval = 8;
  double health_pack_heal = 25.0;
  double mine_damage = 25.0;
  bool deadly_mines = false;
  int max_frames = 2000;
  int health_packs = 8;  // kept constant: a collected item respawns elsewhere
  int mines = 2;

  double turn_degrees = 6.0;
  double move_speed = 0.08;
  double pickup_radius = 0.3;
  double agent_radius = 0.2;

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError("environment: " + what);
    };
    need(room_width >= 1 && room_height >= 1, "room must have at least one cell");
    need(frame_height >= 2 && frame_width >= 2, "frame must be at least 2x2");
    need(fov_degrees > 0 && fov_degrees < 180, "fov_degrees must lie in (0, 180)");
    need(start_health > 0 && start_health <= 100, "start_health must lie in (0, 100]");
    need(acid_damage > 0 && acid_interval >= 1, "acid_damage and acid_interval must be positive");
    need(health_pack_heal > 0 && mine_damage > 0, "heal and damage values must be positive");
    need(max_frames >= 1, "max_frames must be positive");
    need(health_packs >= 0 && mines >= 0, "item counts cannot be negative");
    need(turn_degrees >= 0 && move_speed >= 0, "movement rates cannot be negative");
    need(pickup_radius > 0 && agent_radius > 0 && agent_radius < 0.5, "radii must be positive, agent_radius < 0.5");
    const long cells = long(room_width) * room_height;
    if (cells < 1 + health_packs + mines)
      throw ConfigError("environment: room of " + std::to_string(cells) + " cells cannot hold the agent, " +
                        std::to_string(health_packs) + " health packs and " + std::to_string(mines) + " mines");
  }

  friend bool operator==(const WorldConfig&, const WorldConfig&) = default;
};

enum class ItemKind : std::uint32_t { health_pack = 0, mine = 1 };

struct Item {
  ItemKind kind = ItemKind::health_pack;
  double x = 0, y = 0;
  friend bool operator==(const Item&, const Item&) = default;
};

enum class Termination : std::uint32_t { running = 0, died = 1, timeout = 2 };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::died: return "died";
    case Termination::timeout: return "timeout";
    default: return "running";
  }
}

struct EnvState {
  double x = 0, y = 0;
  double angle = 0;  // radians, 0 along +x
  double health = 0;
  std::vector<Item> items;
  int frame = 0;
  Termination termination = Termination::running;
  std::mt19937_64 rng;

  bool done() const { return termination != Termination::running; }
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct StepOutcome {
  Frame frame;
  double health = 0;  // normalised to [0, 1]
  bool done = false;
  int score = 0;
};

class Environment {
 public:
  explicit Environment(WorldConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const WorldConfig& config() const { return cfg_; }
  const EnvState& state() const { return s_; }
  /// For hand-placed test scenes.
  EnvState& mutable_state() { return s_; }

  double normalized_health() const { return std::clamp(s_.health / 100.0, 0.0, 1.0); }
  int score() const { return s_.frame; }
  bool done() const { return s_.done(); }

  bool is_wall(long cx, long cy) const {
    return cx <= 0 || cy <= 0 || cx > cfg_.room_width || cy > cfg_.room_height;
  }
  bool is_wall_at(double x, double y) const {
    return is_wall(static_cast<long>(std::floor(x)), static_cast<long>(std::floor(y)));
  }

  Frame reset(std::uint64_t seed) {
    s_ = EnvState{};
    s_.rng.seed(seed);
    s_.health = cfg_.start_health;
    // agent and items start in distinct cells
    std::vector<std::pair<int, int>> cells;
    for (int cy = 1; cy <= cfg_.room_height; ++cy)
      for (int cx = 1; cx <= cfg_.room_width; ++cx) cells.emplace_back(cx, cy);
    for (std::size_t i = 0; i < static_cast<std::size_t>(1 + cfg_.health_packs + cfg_.mines); ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, cells.size() - 1);
      std::swap(cells[i], cells[pick(s_.rng)]);
    }
    std::uniform_real_distribution<double> jitter(0.3, 0.7), turn(0.0, 2.0 * std::numbers::pi);
    s_.x = cells[0].first + jitter(s_.rng);
    s_.y = cells[0].second + jitter(s_.rng);
    s_.angle = turn(s_.rng);
    for (int i = 0; i < cfg_.health_packs + cfg_.mines; ++i) {
      const auto [cx, cy] = cells[static_cast<std::size_t>(1 + i)];
      const double ix = cx + jitter(s_.rng), iy = cy + jitter(s_.rng);
      s_.items.push_back({i < cfg_.health_packs ? ItemKind::health_pack : ItemKind::mine, ix, iy});
    }
    return render();
  }

  /// One frame of simulation without rendering.
  void advance(const ActionSet& a) {
    if (s_.done()) throw StateError("environment: step called after the episode ended");
    const double turn = cfg_.turn_degrees * std::numbers::pi / 180.0;
    if (a.turn_left) s_.angle -= turn;
    if (a.turn_right) s_.angle += turn;
    s_.angle = std::remainder(s_.angle, 2.0 * std::numbers::pi);
    if (a.move_forward) move(std::cos(s_.angle) * cfg_.move_speed, std::sin(s_.angle) * cfg_.move_speed);

    for (auto& it : s_.items) {
      if (std::hypot(it.x - s_.x, it.y - s_.y) > cfg_.pickup_radius) continue;
      if (it.kind == ItemKind::health_pack)
        s_.health = std::min(100.0, s_.health + cfg_.health_pack_heal);
      else
        s_.health = cfg_.deadly_mines ? 0.0 : std::max(0.0, s_.health - cfg_.mine_damage);
      respawn(it);
    }

    ++s_.frame;
    if (s_.frame % cfg_.acid_interval == 0) s_.health = std::max(0.0, s_.health - cfg_.acid_damage);
    if (s_.health <= 0.0)
      s_.termination = Termination::died;
    else if (s_.frame >= cfg_.max_frames)
      s_.termination = Termination::timeout;
  }

  StepOutcome step(const ActionSet& a) {
    advance(a);
    return {render(), normalized_health(), s_.done(), s_.frame};
  }

  Frame render() const {
    const int H = cfg_.frame_height, W = cfg_.frame_width;
    Frame f(static_cast<std::size_t>(H), static_cast<std::size_t>(W));
    const double dx = std::cos(s_.angle), dy = std::sin(s_.angle);
    const double half = std::tan(cfg_.fov_degrees * std::numbers::pi / 360.0);
    const double px = -dy * half, py = dx * half;  // camera plane, to the right of the heading
    const double scale = W / 2.0 / half;  // pixels per world unit at depth 1 (square pixels)
    const double horizon = H / 2.0;
    std::vector<double> zbuf(static_cast<std::size_t>(W));

    // floor and ceiling: rows share one depth, so do them row by row
    for (int y = 0; y < H; ++y) {
      const double off = y + 0.5 - horizon;
      if (std::abs(off) < 1e-9) continue;
      const double depth = 0.5 * scale / std::abs(off);
      const bool floor = off > 0;
      const double shade = distance_shade(depth);
      for (int x = 0; x < W; ++x) {
        const double cam = 2.0 * (x + 0.5) / W - 1.0;
        const double wx = s_.x + depth * (dx + px * cam), wy = s_.y + depth * (dy + py * cam);
        const double fx = wx - std::floor(wx), fy = wy - std::floor(wy);
        const bool seam = fx < 0.04 || fy < 0.04;
        std::array<double, 3> c;
        if (floor) {
          // acid: green with faint tile seams and a slow ripple
          const double ripple = 0.04 * std::sin(6.0 * wx + 4.0 * wy);
          c = seam ? std::array<double, 3>{0.16, 0.30, 0.10}
                   : std::array<double, 3>{0.24 + ripple, 0.48 + ripple, 0.14};
        } else {
          c = seam ? std::array<double, 3>{0.30, 0.30, 0.32} : std::array<double, 3>{0.42, 0.42, 0.45};
        }
        put(f, y, x, c, shade);
      }
    }

    // walls by DDA, one ray per column
    for (int x = 0; x < W; ++x) {
      const double cam = 2.0 * (x + 0.5) / W - 1.0;
      const double rx = dx + px * cam, ry = dy + py * cam;
      long mx = static_cast<long>(std::floor(s_.x)), my = static_cast<long>(std::floor(s_.y));
      const double ddx = rx == 0 ? 1e30 : std::abs(1.0 / rx), ddy = ry == 0 ? 1e30 : std::abs(1.0 / ry);
      const long stx = rx < 0 ? -1 : 1, sty = ry < 0 ? -1 : 1;
      double sx = rx < 0 ? (s_.x - mx) * ddx : (mx + 1.0 - s_.x) * ddx;
      double sy = ry < 0 ? (s_.y - my) * ddy : (my + 1.0 - s_.y) * ddy;
      int side = 0;
      for (int guard = 0; guard < 4 * (cfg_.room_width + cfg_.room_height + 4); ++guard) {
        if (sx < sy) {
          sx += ddx;
          mx += stx;
          side = 0;
        } else {
          sy += ddy;
          my += sty;
          side = 1;
        }
        if (is_wall(mx, my)) break;
      }
      const double dist = std::max(1e-6, side == 0 ? sx - ddx : sy - ddy);
      zbuf[static_cast<std::size_t>(x)] = dist;
      double u = side == 0 ? s_.y + dist * ry : s_.x + dist * rx;
      u -= std::floor(u);
      const double top = horizon - 0.5 * scale / dist, bottom = horizon + 0.5 * scale / dist;
      const int y0 = std::max(0, static_cast<int>(std::ceil(top - 0.5))),
                y1 = std::min(H - 1, static_cast<int>(std::ceil(bottom - 0.5)) - 1);
      const double shade = distance_shade(dist) * (side == 1 ? 0.8 : 1.0);
      for (int y = y0; y <= y1; ++y) {
        const double v = (y + 0.5 - top) / (bottom - top);
        put(f, y, x, brick(u, v), shade);
      }
    }

    // billboards, far to near, clipped against the wall depth per column
    std::vector<std::pair<double, const Item*>> order;
    for (const auto& it : s_.items) {
      const double rx = it.x - s_.x, ry = it.y - s_.y;
      order.emplace_back(rx * dx + ry * dy, &it);
    }
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [depth, it] : order) {
      if (depth < 0.05) continue;
      const double rx = it->x - s_.x, ry = it->y - s_.y;
      const double lateral = (rx * px + ry * py) / (half * half);  // camera-plane coordinate in [-1, 1] on screen
      const double cx = W / 2.0 * (1.0 + lateral / depth);
      const bool pack = it->kind == ItemKind::health_pack;
      const double ww = pack ? 0.36 : 0.28, hh = pack ? 0.26 : 0.42;
      const double left = cx - 0.5 * ww * scale / depth, right = cx + 0.5 * ww * scale / depth;
      const double bottom = horizon + 0.5 * scale / depth, top = horizon + (0.5 - hh) * scale / depth;
      const int x0 = std::max(0, static_cast<int>(std::ceil(left - 0.5))),
                x1 = std::min(W - 1, static_cast<int>(std::ceil(right - 0.5)) - 1);
      const int y0 = std::max(0, static_cast<int>(std::ceil(top - 0.5))),
                y1 = std::min(H - 1, static_cast<int>(std::ceil(bottom - 0.5)) - 1);
      const double shade = distance_shade(depth);
      for (int x = x0; x <= x1; ++x) {
        if (depth >= zbuf[static_cast<std::size_t>(x)]) continue;
        const double u = (x + 0.5 - left) / (right - left);
        for (int y = y0; y <= y1; ++y) {
          const double v = (y + 0.5 - top) / (bottom - top);
          std::array<double, 3> c;
          if (pack ? health_pack_texel(u, v, c) : mine_texel(u, v, c)) put(f, y, x, c, shade);
        }
      }
    }
    return f;
  }

 private:
  static double distance_shade(double d) { return 1.0 / (1.0 + 0.12 * d); }

  static void put(Frame& f, int y, int x, const std::array<double, 3>& c, double shade) {
    for (std::size_t k = 0; k < 3; ++k)
      f.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), k) =
          static_cast<float>(std::clamp(c[k] * shade, 0.0, 1.0));
  }

  static std::array<double, 3> brick(double u, double v) {
    const double rows = 4.0, cols = 2.0;
    const double r = v * rows;
    const double shift = (static_cast<long>(std::floor(r)) % 2) ? 0.5 : 0.0;
    const double cpos = u * cols + shift;
    const bool mortar = r - std::floor(r) < 0.1 || cpos - std::floor(cpos) < 0.05;
    if (mortar) return {0.38, 0.36, 0.33};
    return {0.62, 0.46, 0.34};
  }

  // white crate with a green cross; transparent margin around it
  static bool health_pack_texel(double u, double v, std::array<double, 3>& c) {
    if (u < 0.04 || u > 0.96 || v < 0.08) return false;
    const bool cross = (std::abs(u - 0.5) < 0.11 && v > 0.22 && v < 0.9) || (std::abs(v - 0.56) < 0.12 && u > 0.2 && u < 0.8);
    c = cross ? std::array<double, 3>{0.10, 0.78, 0.22} : std::array<double, 3>{0.94, 0.94, 0.92};
    return true;
  }

  // red jar: rounded body, narrow neck, dark lid
  static bool mine_texel(double u, double v, std::array<double, 3>& c) {
    const double du = std::abs(u - 0.5);
    if (v < 0.12) {
      if (du > 0.22) return false;
      c = {0.30, 0.05, 0.04};
      return true;
    }
    if (v < 0.25) {
      if (du > 0.3) return false;
      c = {0.65, 0.08, 0.06};
      return true;
    }
    const double t = (v - 0.62) / 0.38;
    if (du > 0.5 * std::sqrt(std::max(0.0, 1.0 - 0.55 * t * t))) return false;
    const double light = 0.85 - 0.6 * du;
    c = {0.95 * light, 0.12 * light, 0.08 * light};
    return true;
  }

  // axis-separated so the agent slides along walls
  void move(double mx, double my) {
    const double r = cfg_.agent_radius;
    const double nx = s_.x + mx;
    if (!is_wall_at(nx + (mx > 0 ? r : -r), s_.y)) s_.x = nx;
    const double ny = s_.y + my;
    if (!is_wall_at(s_.x, ny + (my > 0 ? r : -r))) s_.y = ny;
  }

  // random interior spot away from the agent
  void respawn(Item& it) {
    std::uniform_int_distribution<int> cxd(1, cfg_.room_width), cyd(1, cfg_.room_height);
    std::uniform_real_distribution<double> jitter(0.3, 0.7);
    for (int attempt = 0; attempt < 64; ++attempt) {
      it.x = cxd(s_.rng) + jitter(s_.rng);
      it.y = cyd(s_.rng) + jitter(s_.rng);
      if (std::hypot(it.x - s_.x, it.y - s_.y) > 1.0) return;
    }
  }

  WorldConfig cfg_;
  EnvState s_;
};

/// What the policy returns: the command plus an optional hash of the
/// encoding it acted on, recorded in the episode trace.
struct Decision {
  ActionCommand command;
  std::uint64_t encoding_hash = 0;

  Decision() = default;
  Decision(ActionCommand c, std::uint64_t hash = 0) : command(c), encoding_hash(hash) {}
};

using Policy = std::function<Decision(const Frame&, double health)>;

struct DecisionRecord {
  int frame_index = 0;
  std::uint64_t encoding_hash = 0;
  ActionCommand command;
  double health = 0;  // normalised, as shown to the policy
  int score = 0;      // frames survived so far
  friend bool operator==(const DecisionRecord&, const DecisionRecord&) = default;
};

struct EpisodeResult {
  int score = 0;
  Termination termination = Termination::running;
  std::vector<DecisionRecord> decisions;
  std::vector<Frame> frames;  // the frames shown to the policy, when requested
  friend bool operator==(const EpisodeResult&, const EpisodeResult&) = default;
};

struct EpisodeOptions {
  bool keep_frames = false;
};

/// Queries the policy every 5 frames and plays its window.
inline EpisodeResult run_episode(const WorldConfig& cfg, std::uint64_t seed, const Policy& policy,
                                 const EpisodeOptions& opt = {}) {
  Environment env(cfg);
  Frame frame = env.reset(seed);
  EpisodeResult out;
  while (!env.done()) {
    const double health = env.normalized_health();
    Decision d;
    try {
      d = policy(frame, health);
    } catch (const std::exception& e) {
      throw EpisodeError("policy failed in episode with seed " + std::to_string(seed) + " at frame " +
                         std::to_string(env.score()) + ": " + e.what());
    }
    out.decisions.push_back({env.score(), d.encoding_hash, d.command, health, env.score()});
    if (opt.keep_frames) out.frames.push_back(std::move(frame));
    for (const auto& a : act_window(d.command)) {
      env.advance(a);
      if (env.done()) break;
    }
    if (!env.done()) frame = env.render();
  }
  out.score = env.score();
  out.termination = env.state().termination;
  return out;
}

inline nlohmann::json to_json(const DecisionRecord& r) {
  const auto& a = r.command.actions;
  return {{"frame", r.frame_index},
          {"encoding_hash", r.encoding_hash},
          {"actions", {a.turn_left, a.turn_right, a.move_forward}},
          {"repeat", r.command.repeat},
          {"health", r.health},
          {"score", r.score}};
}

/// One JSON object per decision, newline separated.
inline void write_trace(std::ostream& os, const EpisodeResult& r) {
  for (const auto& d : r.decisions) os << to_json(d).dump() << '\n';
}

/// FNV-1a over the raw bytes of an encoding, for trace records.
inline std::uint64_t hash_values(const std::vector<double>& v) {
  std::uint64_t h = 1469598103934665603ull;
  for (double d : v) {
    unsigned char b[sizeof(double)];
    std::memcpy(b, &d, sizeof d);
    for (unsigned char c : b) h = (h ^ c) * 1099511628211ull;
  }
  return h;
}

}  // namespace cevo
