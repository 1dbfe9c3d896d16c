#include "radsearch/records.hpp"

#include <cctype>

#include "radsearch/errors.hpp"

namespace radsearch {

namespace {

constexpr std::array<std::string_view, 6> kRegionNames = {
    "upper molar right", "upper molar left", "lower molar left",
    "lower molar right", "lower anterior",   "upper anterior",
};
constexpr std::array<std::string_view, 6> kRegionDisplay = {
    "Upper Molar Right", "Upper Molar Left", "Lower Molar Left",
    "Lower Molar Right", "Lower Anterior",   "Upper Anterior",
};
constexpr std::array<std::string_view, 5> kEthnicityNames = {"White", "Black", "Hispanic", "Asian", "Other"};

}  // namespace

std::string_view region_name(Region r) { return kRegionNames[static_cast<std::size_t>(r)]; }
std::string_view region_display(Region r) { return kRegionDisplay[static_cast<std::size_t>(r)]; }

std::optional<Region> region_from_name(std::string_view name) {
  const std::string lower = to_lower(name);
  for (Region r : kAllRegions)
    if (region_name(r) == lower) return r;
  return std::nullopt;
}

Jaw region_jaw(Region r) {
  switch (r) {
    case Region::kUpperMolarRight:
    case Region::kUpperMolarLeft:
    case Region::kUpperAnterior:
      return Jaw::kUpper;
    default:
      return Jaw::kLower;
  }
}

std::string_view jaw_term(Jaw j) { return j == Jaw::kUpper ? "maxilla" : "mandible"; }

std::string_view gender_name(Gender g) { return g == Gender::kMale ? "male" : "female"; }

std::optional<Gender> gender_from_name(std::string_view name) {
  const std::string lower = to_lower(name);
  if (lower == "male") return Gender::kMale;
  if (lower == "female") return Gender::kFemale;
  return std::nullopt;
}

std::string_view ethnicity_name(Ethnicity e) { return kEthnicityNames[static_cast<std::size_t>(e)]; }

std::optional<Ethnicity> ethnicity_from_name(std::string_view name) {
  const std::string lower = to_lower(name);
  for (Ethnicity e : kAllEthnicities)
    if (to_lower(ethnicity_name(e)) == lower) return e;
  return std::nullopt;
}

std::string_view stage_word(int stage) {
  switch (stage) {
    case 1:
      return "One";
    case 2:
      return "Two";
    case 3:
      return "Three";
    default:
      throw RangeError("periodontal stage " + std::to_string(stage) + " outside 1..3");
  }
}

std::string title_case(std::string_view s) {
  std::string out(s);
  bool start = true;
  for (char& c : out) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      if (start) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      start = false;
    } else {
      start = true;
    }
  }
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace radsearch
