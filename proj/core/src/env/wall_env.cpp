// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/env/wall_env.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spimag/errors.hpp"

namespace spimag::env {

namespace {

constexpr int kSupersample = 4;

int side_of(double x, double wall_x) {
  if (x < wall_x) return -1;
  if (x > wall_x) return 1;
  return 0;
}

bool in_gap(const Wall& w, double y) { return y > w.gap_lo && y < w.gap_hi; }

}  // namespace

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

void EnvConfig::validate() const {
  if (patch == 0 || grid == 0 || grid % patch != 0) {
    throw ConfigError("frame side " + std::to_string(grid) + " is not divisible by patch size " +
                      std::to_string(patch));
  }
  if (token_dim == 0) throw ConfigError("token_dim must be positive");
  if (!(wall.gap_lo < wall.gap_hi)) throw ConfigError("door gap must satisfy gap_lo < gap_hi");
  if (wall.x <= 0.0 || wall.x >= 1.0) throw ConfigError("wall x must lie strictly inside (0, 1)");
  if (agent_radius <= 0.0 || action_max <= 0.0 || success_radius <= 0.0) {
    throw ConfigError("agent_radius, action_max and success_radius must be positive");
  }
  if (goal_min_distance < 0.0 || goal_max_distance < goal_min_distance) {
    throw ConfigError("goal distance range is empty");
  }
}

EnvState make_state(const EnvConfig& cfg, Vec2 agent) { return EnvState{agent, cfg.wall}; }

Vec2 clip_action(const EnvConfig& cfg, Vec2 a) {
  return {std::clamp(a.x, -cfg.action_max, cfg.action_max), std::clamp(a.y, -cfg.action_max, cfg.action_max)};
}

EnvState step(const EnvConfig& cfg, const EnvState& s, Vec2 action) {
  const Vec2 a = clip_action(cfg, action);
  const Vec2 p = s.agent;
  const Vec2 t{std::clamp(p.x + a.x, 0.0, 1.0), std::clamp(p.y + a.y, 0.0, 1.0)};
  const Wall& w = s.wall;
  const int s0 = side_of(p.x, w.x);
  const int s1 = side_of(t.x, w.x);

  EnvState out = s;
  if (s0 == s1 && s0 != 0) {
    out.agent = t;
  } else if (s0 == 0 && s1 == 0) {
    // Sliding along the wall line is only possible inside the door.
    out.agent = {w.x, in_gap(w, t.y) ? t.y : std::clamp(t.y, w.gap_lo + cfg.contact_eps, w.gap_hi - cfg.contact_eps)};
  } else if (s0 == 0) {
    out.agent = t;  // leaving the doorway
  } else {
    const double frac = (w.x - p.x) / (t.x - p.x);
    const double yc = p.y + frac * (t.y - p.y);
    if (in_gap(w, yc)) {
      out.agent = t;
    } else {
      out.agent = {w.x + s0 * cfg.contact_eps, yc};
    }
  }
  return out;
}

std::size_t wall_column(const EnvConfig& cfg) {
  const auto c = static_cast<std::size_t>(std::floor(cfg.wall.x * static_cast<double>(cfg.grid)));
  return std::min(c, cfg.grid - 1);
}

Frame render(const EnvConfig& cfg, const EnvState& s) {
  const std::size_t g = cfg.grid;
  const double gd = static_cast<double>(g);
  Frame f{g, std::vector<double>(g * g, 0.0)};
  const std::size_t wc = wall_column(cfg);
  for (std::size_t r = 0; r < g; ++r) {
    const double yc = (static_cast<double>(r) + 0.5) / gd;
    if (!in_gap(s.wall, yc)) f.pixels[r * g + wc] = 1.0;
  }

  const double rad = cfg.agent_radius;
  const auto lo = [&](double v) {
    return static_cast<std::size_t>(std::clamp(std::floor((v - rad) * gd), 0.0, gd - 1.0));
  };
  const auto hi = [&](double v) {
    return static_cast<std::size_t>(std::clamp(std::floor((v + rad) * gd), 0.0, gd - 1.0));
  };
  const double r2 = rad * rad;
  for (std::size_t r = lo(s.agent.y); r <= hi(s.agent.y); ++r) {
    for (std::size_t c = lo(s.agent.x); c <= hi(s.agent.x); ++c) {
      int inside = 0;
      for (int i = 0; i < kSupersample; ++i) {
        const double py = (static_cast<double>(r) + (i + 0.5) / kSupersample) / gd - s.agent.y;
        for (int j = 0; j < kSupersample; ++j) {
          const double px = (static_cast<double>(c) + (j + 0.5) / kSupersample) / gd - s.agent.x;
          if (px * px + py * py <= r2) ++inside;
        }
      }
      const double cover = static_cast<double>(inside) / (kSupersample * kSupersample);
      double& pix = f.pixels[r * g + c];
      pix = std::max(pix, cover);
    }
  }
  return f;
}

bool is_success(const EnvConfig& cfg, const EnvState& s, Vec2 goal) {
  return distance(s.agent, goal) <= cfg.success_radius;
}

std::pair<EnvState, EnvState> sample_task(const EnvConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    const Vec2 start{u(rng), u(rng)};
    const Vec2 goal{u(rng), u(rng)};
    const double d = distance(start, goal);
    if (d < cfg.goal_min_distance || d > cfg.goal_max_distance) continue;
    if (start.x == cfg.wall.x || goal.x == cfg.wall.x) continue;
    return {make_state(cfg, start), make_state(cfg, goal)};
  }
}

}  // namespace spimag::env
