#include "panda/trait.hpp"

#include <algorithm>
#include <cctype>

namespace panda {

namespace {
constexpr std::array<std::string_view, 8> kNames = {"Ope", "Con", "Ext", "Agr",
                                                    "Neu", "Psy", "Mac", "Nar"};
}

std::string_view to_string(TraitId trait) { return kNames[trait_index(trait)]; }

std::optional<TraitId> parse_trait(std::string_view text) {
  // Accept "Ope", "ope", "Ope." and similar spellings.
  if (!text.empty() && text.back() == '.') text.remove_suffix(1);
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    const auto& name = kNames[i];
    if (name.size() == text.size() &&
        std::equal(name.begin(), name.end(), text.begin(), [](char a, char b) {
          return std::tolower(static_cast<unsigned char>(a)) ==
                 std::tolower(static_cast<unsigned char>(b));
        })) {
      return kAllTraits[i];
    }
  }
  return std::nullopt;
}

TraitId trait_from_string(std::string_view text) {
  if (auto t = parse_trait(text)) return *t;
  throw std::invalid_argument("unknown trait '" + std::string(text) + "'");
}

}  // namespace panda
