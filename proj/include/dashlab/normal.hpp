#pragma once

namespace dashlab {

// Standard normal helpers on top of std::erfc; the upper tail is
// erfc(z / sqrt 2) / 2.
double normalCdf(double z);
double normalSurvival(double z);
double normalPdf(double z);

}  // namespace dashlab
