#include "fingerloc/types.hpp"

#include <algorithm>
#include <cctype>
#include <string>

namespace fingerloc {

std::string_view to_string(Environment env) {
  switch (env) {
  case Environment::Lab: return "Lab";
  case Environment::NarrowCorridor: return "NarrowCorridor";
  case Environment::Lobby: return "Lobby";
  case Environment::SportsHall: return "SportsHall";
  }
  return "?";
}

std::optional<Environment> parse_environment(std::string_view text) {
  std::string key;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c)) && c != '_' && c != '-')
      key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "lab" || key == "laboratory") return Environment::Lab;
  if (key == "narrowcorridor" || key == "corridor") return Environment::NarrowCorridor;
  if (key == "lobby" || key == "mainlobby") return Environment::Lobby;
  if (key == "sportshall" || key == "hall") return Environment::SportsHall;
  return std::nullopt;
}

Environment environment_from_string(std::string_view text) {
  auto env = parse_environment(text);
  if (!env) throw DataError("unknown environment label '" + std::string(text) + "'");
  return *env;
}

} // namespace fingerloc
