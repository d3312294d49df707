#pragma once

#include <array>
#include <string>

namespace cevo {

/// Buttons held during one frame. Index order matches the controller's
/// outputs: 0 turn left, 1 turn right, 2 move forward.
struct ActionSet {
  bool turn_left = false;
  bool turn_right = false;
  bool move_forward = false;

  bool empty() const { return !turn_left && !turn_right && !move_forward; }
  bool operator[](int i) const { return i == 0 ? turn_left : i == 1 ? turn_right : move_forward; }

  std::string to_string() const {
    std::string s = "{";
    for (int i = 0; i < 3; ++i)
      if ((*this)[i]) s += (s.size() > 1 ? "," : "") + std::to_string(i);
    return s + "}";
  }

  friend bool operator==(const ActionSet&, const ActionSet&) = default;
};

/// One decision: which buttons, and for how many of the next 5 frames.
struct ActionCommand {
  ActionSet actions;
  int repeat = 0;

  friend bool operator==(const ActionCommand&, const ActionCommand&) = default;
};

inline constexpr int kDecisionInterval = 5;

/// Frames 0..repeat-1 carry the command's buttons, the rest are idle.
inline std::array<ActionSet, kDecisionInterval> act_window(const ActionCommand& cmd) {
  std::array<ActionSet, kDecisionInterval> out{};
  for (int f = 0; f < kDecisionInterval; ++f)
    if (f < cmd.repeat) out[static_cast<std::size_t>(f)] = cmd.actions;
  return out;
}

}  // namespace cevo
