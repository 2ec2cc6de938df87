#pragma once

// Portable elementary functions.
//
// libm implementations of exp/log/tanh differ in the last ulp between
// platforms, which breaks byte-identical reproduction of trajectory files.
// These routines use only IEEE-754 arithmetic, sqrt and scalbn (all
// correctly rounded), so results are bit-identical on every binary64
// platform. Accuracy is ~1 ulp, far below the tolerances used anywhere in
// this project.

namespace ag {

double pexp(double x);
double plog(double x);
double pexpm1(double x);
double ptanh(double x);

}  // namespace ag
