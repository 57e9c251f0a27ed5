#pragma once

// Reference values frozen from scipy 1.x (scipy.stats.f.sf, scipy.special.betainc,
// scipy.stats.chi2.ppf).

namespace oracle {

struct FTail {
    double f, df1, df2, p;
};

inline constexpr FTail kFTails[] = {
    {1.0, 10, 10, 0.5000000000000001},   {2.5, 3, 12, 0.10915471239500632},  {0.3, 1, 40, 0.5869260145869308},
    {7.2, 2, 30, 0.002793021437415095},  {4.0, 1, 1, 0.29516723530086664},   {1.7, 6, 111, 0.127557205906083},
    {12.0, 4, 8, 0.0018444695662521565}, {0.05, 5, 5, 0.9974477392801275},
};

struct BetaValue {
    double x, a, b, value;
};

inline constexpr BetaValue kBetaValues[] = {
    {0.4, 2.5, 3.5, 0.4869041915261176},
    {0.9, 0.5, 0.5, 0.7951672353008665},
    {0.3, 10, 20, 0.3640040810719437},
};

// Upper 1% point of chi-square with 19 degrees of freedom (20-value alphabet).
inline constexpr double kChi2Crit19 = 36.19086912927004;

}  // namespace oracle
