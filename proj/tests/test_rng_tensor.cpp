#include <doctest.h>

#include "chronotoken/rng.hpp"
#include "chronotoken/tensor.hpp"

using namespace chronotoken;

TEST_CASE("rng determinism and basic moments") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng r(7);
  double sum = 0.0, sumsq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double z = r.normal();
    sum += z;
    sumsq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sumsq / n - 1.0) < 0.05);

  double esum = 0.0;
  for (int i = 0; i < n; ++i) esum += r.exponential(3.0);
  CHECK(std::abs(esum / n - 3.0) < 0.1);

  for (int i = 0; i < 1000; ++i) CHECK(std::abs(r.trunc_normal(0.02)) <= 0.04);
}

TEST_CASE("stream mixing separates indices") {
  CHECK(Rng::mix(1, 2, 3) != Rng::mix(1, 2, 4));
  CHECK(Rng::mix(1, 2, 3) != Rng::mix(1, 3, 3));
  CHECK(Rng::mix(1, 2, 3) != Rng::mix(2, 2, 3));
}

TEST_CASE("matmul value against hand computation") {
  Mat<double> a(2, 3);
  Mat<double> b(3, 2);
  int c = 0;
  for (auto& v : a.a) v = ++c;
  for (auto& v : b.a) v = ++c;
  // a = [1 2 3; 4 5 6], b = [7 8; 9 10; 11 12]
  Mat<double> ab = matmul_value(a, b);
  CHECK(ab.at(0, 0) == 58.0);
  CHECK(ab.at(0, 1) == 64.0);
  CHECK(ab.at(1, 0) == 139.0);
  CHECK(ab.at(1, 1) == 154.0);

  Mat<double> at = matmul_value(a, a, false, true);  // a a^T
  CHECK(at.at(0, 0) == 14.0);
  CHECK(at.at(0, 1) == 32.0);
  Mat<double> ta = matmul_value(a, a, true, false);  // a^T a
  CHECK(ta.at(0, 0) == 17.0);
  CHECK(ta.at(2, 2) == 45.0);
}
