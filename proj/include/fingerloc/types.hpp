#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fingerloc {

/// Malformed or inconsistent input data (files, rows, manifests).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Planar position in centimetres.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double planar_distance(Point2 a, Point2 b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// The four indoor environment classes, ordered from most to least cluttered.
enum class Environment { Lab = 0, NarrowCorridor = 1, Lobby = 2, SportsHall = 3 };

inline constexpr std::array<Environment, 4> kAllEnvironments{
    Environment::Lab, Environment::NarrowCorridor, Environment::Lobby,
    Environment::SportsHall};

std::string_view to_string(Environment env);
std::optional<Environment> parse_environment(std::string_view text);

/// Like parse_environment but throws DataError on unknown labels.
Environment environment_from_string(std::string_view text);

} // namespace fingerloc
