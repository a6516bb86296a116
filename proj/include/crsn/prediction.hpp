#ifndef CRSN_PREDICTION_HPP
#define CRSN_PREDICTION_HPP

#include <array>
#include <cstddef>

namespace crsn {

inline constexpr std::size_t kPollutantCount = 8;

// Fixed pollutant order used for every array, CSV column and report:
// ammonium, nitrate, phosphate, COD, TSS, tetracycline, ibuprofen,
// micro-plastics.
inline constexpr std::array<const char*, kPollutantCount> kPollutantNames = {
    "nh4", "no3", "po4", "cod", "tss", "tet", "ibu", "mp"};

// Model output: per-pollutant removal fractions in [0,1], energy use
// (kWh/m^3), net CO2 release (g/m^3), and the energy share simplex.
struct Prediction {
    std::array<double, kPollutantCount> removals{};
    double ec = 0.0;
    double ce = 0.0;
    std::array<double, kPollutantCount> shares{};
};

struct PredictionGrad {
    std::array<double, kPollutantCount> removals{};
    double ec = 0.0;
    double ce = 0.0;
    std::array<double, kPollutantCount> shares{};
};

} // namespace crsn

#endif
