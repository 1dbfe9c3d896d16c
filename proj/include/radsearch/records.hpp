#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace radsearch {

enum class Gender { kMale, kFemale };
enum class Ethnicity { kWhite, kBlack, kHispanic, kAsian, kOther };

// Radiograph positions, in the order clinicians annotate them.
enum class Region {
  kUpperMolarRight,
  kUpperMolarLeft,
  kLowerMolarLeft,
  kLowerMolarRight,
  kLowerAnterior,
  kUpperAnterior,
};

enum class Jaw { kUpper, kLower };

inline constexpr std::array<Region, 6> kAllRegions = {
    Region::kUpperMolarRight, Region::kUpperMolarLeft, Region::kLowerMolarLeft,
    Region::kLowerMolarRight, Region::kLowerAnterior,  Region::kUpperAnterior,
};
inline constexpr std::array<Gender, 2> kAllGenders = {Gender::kMale, Gender::kFemale};
inline constexpr std::array<Ethnicity, 5> kAllEthnicities = {
    Ethnicity::kWhite, Ethnicity::kBlack, Ethnicity::kHispanic, Ethnicity::kAsian, Ethnicity::kOther,
};

struct PatientRecord {
  std::uint64_t patient_id = 0;
  int age = 18;
  Gender gender = Gender::kMale;
  Ethnicity ethnicity = Ethnicity::kWhite;
  double rbl_percent = 0.0;
  int stage = 1;
  Region region = Region::kUpperMolarRight;

  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

// Lowercase canonical names ("upper molar right") and title-case display
// names ("Upper Molar Right").
std::string_view region_name(Region r);
std::string_view region_display(Region r);
std::optional<Region> region_from_name(std::string_view name);
Jaw region_jaw(Region r);
// "maxilla" / "mandible"
std::string_view jaw_term(Jaw j);

std::string_view gender_name(Gender g);  // "male" / "female"
std::optional<Gender> gender_from_name(std::string_view name);
std::string_view ethnicity_name(Ethnicity e);  // "White", ...
std::optional<Ethnicity> ethnicity_from_name(std::string_view name);

// "One" / "Two" / "Three"
std::string_view stage_word(int stage);

std::string title_case(std::string_view s);
std::string to_lower(std::string_view s);

}  // namespace radsearch
