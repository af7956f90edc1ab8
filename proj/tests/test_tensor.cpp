#include <catch_amalgamated.hpp>

#include <sstream>

#include "helpers.hpp"
#include "sitvos/autodiff.hpp"
#include "sitvos/tensor.hpp"

using namespace sitvos;

TEST_CASE("tensor shape and data invariants", "[tensor]") {
  TensorF t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  CHECK_THROWS_AS(TensorF({2, 0, 4}), DimensionError);
  CHECK_THROWS_AS(t.reshaped({5, 5}), DimensionError);
  CHECK(t.reshaped({6, 4}).extent(0) == 6);
}

TEST_CASE("matmul examples", "[tensor]") {
  Tape<double> tape;
  SECTION("identity") {
    TensorD eye({2, 2});
    eye(0, 0) = eye(1, 1) = 1;
    Rng rng(3);
    TensorD b = ref::random_tensor<double>({2, 5}, rng);
    auto out = matmul(tape.constant(eye), tape.constant(b));
    CHECK(ref::max_abs_diff(out.value(), b) == 0.0);
  }
  SECTION("zeros") {
    Rng rng(4);
    TensorD a = ref::random_tensor<double>({3, 2}, rng);
    auto out = matmul(tape.constant(a), tape.constant(TensorD({2, 4})));
    for (std::size_t i = 0; i < out.value().size(); ++i) CHECK(out.value()[i] == 0.0);
  }
  SECTION("hand expansion") {
    TensorD a({2, 2}, {1, 2, 3, 4});
    TensorD b({2, 2}, {5, 6, 7, 8});
    auto out = matmul(tape.constant(a), tape.constant(b));
    CHECK(out.value()(0, 0) == 19);
    CHECK(out.value()(0, 1) == 22);
    CHECK(out.value()(1, 0) == 43);
    CHECK(out.value()(1, 1) == 50);
    CHECK(ref::max_abs_diff(out.value(), ref::matmul(a, b)) == 0.0);
  }
  SECTION("shape mismatch reports both shapes") {
    TensorD a({2, 3});
    TensorD b({2, 3});
    CHECK_THROWS_WITH(matmul(tape.constant(a), tape.constant(b)),
                      Catch::Matchers::ContainsSubstring("[2x3]") &&
                          Catch::Matchers::ContainsSubstring("[2x3]"));
  }
}

TEST_CASE("matmul associativity property", "[tensor]") {
  SECTION("double 1e-10") {
    Rng rng(11);
    for (int it = 0; it < 20; ++it) {
      TensorD a = ref::random_tensor<double>({3, 4}, rng);
      TensorD b = ref::random_tensor<double>({4, 2}, rng);
      TensorD c = ref::random_tensor<double>({2, 5}, rng);
      Tape<double> tape;
      auto l = matmul(matmul(tape.constant(a), tape.constant(b)), tape.constant(c));
      auto r = matmul(tape.constant(a), matmul(tape.constant(b), tape.constant(c)));
      CHECK(ref::max_abs_diff(l.value(), r.value()) < 1e-10);
    }
  }
  SECTION("float 1e-4") {
    Rng rng(12);
    for (int it = 0; it < 20; ++it) {
      TensorF a = ref::random_tensor<float>({3, 4}, rng);
      TensorF b = ref::random_tensor<float>({4, 2}, rng);
      TensorF c = ref::random_tensor<float>({2, 5}, rng);
      Tape<float> tape;
      auto l = matmul(matmul(tape.constant(a), tape.constant(b)), tape.constant(c));
      auto r = matmul(tape.constant(a), matmul(tape.constant(b), tape.constant(c)));
      CHECK(ref::max_abs_diff(l.value(), r.value()) < 1e-4f);
    }
  }
}

TEST_CASE("softmax_rows examples and row-sum property", "[tensor]") {
  Tape<double> tape;
  SECTION("equal values give uniform row") {
    auto out = softmax_rows(tape.constant(TensorD::full({1, 4}, 3.25)));
    for (std::size_t j = 0; j < 4; ++j) CHECK(out.value()(0, j) == Catch::Approx(0.25));
  }
  SECTION("saturation") {
    auto out = softmax_rows(tape.constant(TensorD({1, 2}, {0.0, 1000.0})));
    CHECK(out.value()(0, 0) < 1e-300);
    CHECK(out.value()(0, 1) == Catch::Approx(1.0));
  }
  SECTION("direct evaluation") {
    auto out = softmax_rows(tape.constant(TensorD({1, 3}, {1, 2, 3})));
    CHECK(out.value()(0, 0) == Catch::Approx(0.09003057).margin(1e-7));
    CHECK(out.value()(0, 1) == Catch::Approx(0.24472847).margin(1e-7));
    CHECK(out.value()(0, 2) == Catch::Approx(0.66524096).margin(1e-7));
  }
  SECTION("rows sum to 1 for random inputs") {
    Rng rng(21);
    for (int it = 0; it < 50; ++it) {
      TensorD x = ref::random_tensor<double>({4, 6}, rng, -50.0, 50.0);
      auto out = softmax_rows(tape.constant(x));
      for (std::size_t i = 0; i < 4; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 6; ++j) {
          s += out.value()(i, j);
          CHECK(out.value()(i, j) >= 0.0);
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("layer_norm examples and moment property", "[tensor]") {
  Tape<double> tape;
  auto ones = tape.constant(TensorD::ones({4}));
  auto zeros = tape.constant(TensorD::zeros({4}));
  SECTION("constant row collapses to zero") {
    auto out = layer_norm(tape.constant(TensorD::full({1, 4}, 7.0)), ones, zeros, 1e-5);
    for (std::size_t j = 0; j < 4; ++j) CHECK(out.value()(0, j) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("normalized row passes through scaled") {
    // zero mean, unit (population) variance row
    TensorD x({1, 4}, {-1.0, 1.0, -1.0, 1.0});
    auto g = tape.constant(TensorD::full({4}, 2.0));
    auto b = tape.constant(TensorD::full({4}, 0.5));
    auto out = layer_norm(tape.constant(x), g, b, 1e-9);
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(out.value()(0, j) == Catch::Approx(2.0 * x(0, j) + 0.5).margin(1e-6));
  }
  SECTION("direct evaluation") {
    auto out = layer_norm(tape.constant(TensorD({1, 4}, {1, 2, 3, 4})), ones, zeros, 1e-5);
    CHECK(out.value()(0, 0) == Catch::Approx(-1.3416).margin(1e-3));
    CHECK(out.value()(0, 1) == Catch::Approx(-0.4472).margin(1e-3));
    CHECK(out.value()(0, 2) == Catch::Approx(0.4472).margin(1e-3));
    CHECK(out.value()(0, 3) == Catch::Approx(1.3416).margin(1e-3));
    TensorD expect =
        ref::layer_norm(TensorD({1, 4}, {1, 2, 3, 4}), TensorD::ones({4}), TensorD::zeros({4}), 1e-5);
    CHECK(ref::max_abs_diff(out.value(), expect) < 1e-12);
  }
  SECTION("output rows have near-zero mean and near-unit variance") {
    Rng rng(31);
    for (int it = 0; it < 20; ++it) {
      TensorD x = ref::random_tensor<double>({3, 8}, rng, -5.0, 5.0);
      auto out = layer_norm(tape.constant(x), tape.constant(TensorD::ones({8})),
                            tape.constant(TensorD::zeros({8})), 1e-5);
      for (std::size_t i = 0; i < 3; ++i) {
        double mean = 0, var = 0;
        for (std::size_t j = 0; j < 8; ++j) mean += out.value()(i, j);
        mean /= 8;
        for (std::size_t j = 0; j < 8; ++j)
          var += (out.value()(i, j) - mean) * (out.value()(i, j) - mean);
        var /= 8;
        CHECK(std::abs(mean) <= 1e-5);
        CHECK(std::abs(var - 1.0) <= 1e-3);
      }
    }
  }
}

TEST_CASE("conv2d examples", "[tensor]") {
  Tape<double> tape;
  SECTION("1x1 unit kernel is identity") {
    Rng rng(41);
    TensorD x = ref::random_tensor<double>({1, 5, 5}, rng);
    TensorD k({1, 1, 1, 1}, {1.0});
    auto out = conv2d(tape.constant(x), tape.constant(k), 1, 0);
    CHECK(ref::max_abs_diff(out.value(), x) == 0.0);
  }
  SECTION("3x3 delta kernel with padding is identity") {
    Rng rng(42);
    TensorD x = ref::random_tensor<double>({2, 6, 7}, rng);
    TensorD k({2, 2, 3, 3});
    k(0, 0, 1, 1) = 1.0;
    k(1, 1, 1, 1) = 1.0;
    auto out = conv2d(tape.constant(x), tape.constant(k), 1, 1);
    CHECK(ref::max_abs_diff(out.value(), x) == 0.0);
  }
  SECTION("all-ones 4x4 with all-ones 3x3 gives 2x2 of 9") {
    auto out = conv2d(tape.constant(TensorD::ones({1, 4, 4})), tape.constant(TensorD::ones({1, 1, 3, 3})),
                      1, 0);
    REQUIRE(out.value().shape() == Shape{1, 2, 2});
    for (std::size_t i = 0; i < 4; ++i) CHECK(out.value()[i] == 9.0);
  }
  SECTION("random agreement with triple-loop oracle") {
    Rng rng(43);
    for (int it = 0; it < 10; ++it) {
      TensorD x = ref::random_tensor<double>({3, 8, 6}, rng);
      TensorD k = ref::random_tensor<double>({4, 3, 3, 3}, rng);
      auto out = conv2d(tape.constant(x), tape.constant(k), 1, 1);
      CHECK(ref::max_abs_diff(out.value(), ref::conv2d(x, k, 1, 1)) < 1e-12);
    }
  }
  SECTION("stride that does not tile exactly floors the output extent") {
    Rng rng(44);
    TensorD x = ref::random_tensor<double>({1, 6, 6}, rng);
    TensorD k = ref::random_tensor<double>({1, 1, 3, 3}, rng);
    auto out = conv2d(tape.constant(x), tape.constant(k), 2, 0);
    REQUIRE(out.value().shape() == Shape{1, 2, 2});
    CHECK(ref::max_abs_diff(out.value(), ref::conv2d(x, k, 2, 0)) < 1e-12);
  }
  SECTION("stride-2 halving of an even input with padding 1") {
    Rng rng(45);
    TensorD x = ref::random_tensor<double>({1, 8, 8}, rng);
    TensorD k = ref::random_tensor<double>({1, 1, 3, 3}, rng);
    auto out = conv2d(tape.constant(x), tape.constant(k), 2, 1);
    REQUIRE(out.value().shape() == Shape{1, 4, 4});
    CHECK(ref::max_abs_diff(out.value(), ref::conv2d(x, k, 2, 1)) < 1e-12);
  }
  SECTION("kernel larger than the padded input is a dimension error") {
    CHECK_THROWS_AS(conv2d(tape.constant(TensorD::ones({1, 2, 2})),
                           tape.constant(TensorD::ones({1, 1, 5, 5})), 1, 0),
                    DimensionError);
  }
  SECTION("even kernel extent is rejected") {
    CHECK_THROWS_AS(conv2d(tape.constant(TensorD::ones({1, 4, 4})),
                           tape.constant(TensorD::ones({1, 1, 2, 2})), 1, 0),
                    ContractError);
  }
}

TEST_CASE("bilinear_resize examples", "[tensor]") {
  Tape<double> tape;
  SECTION("same size is identity") {
    Rng rng(51);
    TensorD x = ref::random_tensor<double>({2, 4, 5}, rng);
    auto out = bilinear_resize(tape.constant(x), 4, 5);
    CHECK(ref::max_abs_diff(out.value(), x) < 1e-12);
  }
  SECTION("constant input stays constant") {
    auto out = bilinear_resize(tape.constant(TensorD::full({1, 3, 3}, 2.5)), 7, 5);
    for (std::size_t i = 0; i < out.value().size(); ++i) CHECK(out.value()[i] == Catch::Approx(2.5));
  }
  SECTION("2x2 to 4x4 matches the sampling formula") {
    TensorD x({1, 2, 2}, {0, 1, 2, 3});
    auto out = bilinear_resize(tape.constant(x), 4, 4);
    CHECK(ref::max_abs_diff(out.value(), ref::bilinear_resize(x, 4, 4)) < 1e-12);
  }
}

TEST_CASE("pointwise examples", "[tensor]") {
  Tape<double> tape;
  Rng rng(61);
  SECTION("mul by ones is identity") {
    TensorD x = ref::random_tensor<double>({3, 3}, rng);
    auto out = mul(tape.constant(x), tape.constant(TensorD::ones({3, 3})));
    CHECK(ref::max_abs_diff(out.value(), x) == 0.0);
  }
  SECTION("relu clamps") {
    auto out = relu(tape.constant(TensorD({2}, {-1.0, 2.0})));
    CHECK(out.value()[0] == 0.0);
    CHECK(out.value()[1] == 2.0);
  }
  SECTION("add elementwise") {
    auto out = add(tape.constant(TensorD({2}, {1, 2})), tape.constant(TensorD({2}, {3, 4})));
    CHECK(out.value()[0] == 4.0);
    CHECK(out.value()[1] == 6.0);
  }
  SECTION("shape mismatch") {
    CHECK_THROWS_AS(add(tape.constant(TensorD({2})), tape.constant(TensorD({3}))), DimensionError);
  }
}

TEST_CASE("tensor container round trip and format errors", "[tensor]") {
  Rng rng(71);
  TensorF t = ref::random_tensor<float>({2, 3, 4}, rng);
  std::stringstream ss;
  write_tensor(ss, t);
  TensorF back = read_tensor<float>(ss);
  REQUIRE(back.shape() == t.shape());
  CHECK(ref::max_abs_diff(back, t) == 0.0f);

  std::stringstream bad("XXXXgarbage");
  CHECK_THROWS_AS(read_tensor<float>(bad), FormatError);

  std::stringstream wrong;
  write_tensor(wrong, t);
  CHECK_THROWS_AS(read_tensor<double>(wrong), FormatError);
}
