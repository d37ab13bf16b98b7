#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace panda {

/// The eight personality traits: the Big Five followed by the Dark Triad.
enum class TraitId : std::uint8_t { Ope, Con, Ext, Agr, Neu, Psy, Mac, Nar };

inline constexpr std::array<TraitId, 8> kAllTraits = {
    TraitId::Ope, TraitId::Con, TraitId::Ext, TraitId::Agr,
    TraitId::Neu, TraitId::Psy, TraitId::Mac, TraitId::Nar};

std::string_view to_string(TraitId trait);
std::optional<TraitId> parse_trait(std::string_view text);

/// Like parse_trait but throws std::invalid_argument on unknown names.
TraitId trait_from_string(std::string_view text);

inline std::size_t trait_index(TraitId t) { return static_cast<std::size_t>(t); }

/// Three-way classifier judgement: -1 low, 0 neutral, +1 high.
class Valence {
 public:
  constexpr Valence() = default;
  constexpr explicit Valence(int v) : value_(check(v)) {}

  static constexpr Valence low() { return Valence(-1); }
  static constexpr Valence neutral() { return Valence(0); }
  static constexpr Valence high() { return Valence(1); }

  constexpr int value() const { return value_; }
  friend constexpr bool operator==(Valence, Valence) = default;

 private:
  static constexpr int check(int v) {
    if (v < -1 || v > 1) throw std::invalid_argument("valence must be -1, 0 or +1");
    return v;
  }
  int value_ = 0;
};

}  // namespace panda
