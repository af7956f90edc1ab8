#include <catch_amalgamated.hpp>

#include "helpers.hpp"
#include "sitvos/backbone.hpp"

using namespace sitvos;

namespace {

BackboneConfig small_config() {
  BackboneConfig cfg;
  cfg.stage_channels = {4, 6, 8};
  cfg.projection_channels = 5;
  cfg.mask_encoder_channels = {2, 3, 4};
  return cfg;
}

}  // namespace

TEST_CASE("extract shape contract and determinism", "[backbone]") {
  BackboneConfig cfg;  // defaults: [16,32,64], C=32
  Rng rng(0);
  auto params = BackboneParams<float>::init(cfg, rng, "bb");
  Rng frng(5);
  TensorF frame = ref::random_tensor<float>({3, 64, 64}, frng, 0.0, 1.0);

  Tape<float> tape;
  auto feats = extract(tape, tape.constant(frame), params);
  CHECK(feats.f4.shape() == Shape{16, 16, 16});
  CHECK(feats.f8.shape() == Shape{32, 8, 8});
  CHECK(feats.f16.shape() == Shape{64, 4, 4});
  CHECK(feats.embedding.shape() == Shape{16, 32});

  Tape<float> tape2;
  auto feats2 = extract(tape2, tape2.constant(frame), params);
  CHECK(ref::max_abs_diff(feats.embedding.value(), feats2.embedding.value()) == 0.0f);

  CHECK_THROWS_AS(extract(tape, tape.constant(TensorF::ones({3, 60, 64})), params), DimensionError);
}

TEST_CASE("extract increments the invocation counter", "[backbone]") {
  auto cfg = small_config();
  Rng rng(1);
  auto params = BackboneParams<float>::init(cfg, rng, "bb");
  const auto before = backbone_invocations().load();
  Tape<float> tape;
  extract(tape, tape.constant(TensorF::ones({3, 32, 32})), params);
  extract(tape, tape.constant(TensorF::ones({3, 32, 32})), params);
  CHECK(backbone_invocations().load() == before + 2);
}

TEST_CASE("weight sharing: mutating a weight changes the single path", "[backbone]") {
  auto cfg = small_config();
  Rng rng(2);
  auto params = BackboneParams<float>::init(cfg, rng, "bb");
  Rng frng(3);
  TensorF frame = ref::random_tensor<float>({3, 32, 32}, frng, 0.0, 1.0);

  auto run = [&]() {
    Tape<float> tape;
    return extract(tape, tape.constant(frame), params).embedding.value();
  };
  TensorF memory_role = run();
  TensorF query_role = run();
  CHECK(ref::max_abs_diff(memory_role, query_role) == 0.0f);

  // Large enough that the affected channel escapes the stem relu's dead zone.
  params.trunk.stem.kernel.value[0] += 5.0f;
  TensorF memory_role2 = run();
  TensorF query_role2 = run();
  CHECK(ref::max_abs_diff(memory_role2, query_role2) == 0.0f);
  CHECK(ref::max_abs_diff(memory_role, memory_role2) > 0.0f);
}

TEST_CASE("project examples", "[backbone]") {
  Rng rng(10);
  SECTION("identity 1x1 kernel flattens unchanged") {
    ConvLayer<double> proj;
    proj.kernel = Parameter<double>("k", TensorD::zeros({3, 3, 1, 1}));
    proj.bias = Parameter<double>("b", TensorD::zeros({3}));
    for (std::size_t i = 0; i < 3; ++i) proj.kernel.value(i, i, 0, 0) = 1.0;
    TensorD f16 = ref::random_tensor<double>({3, 2, 2}, rng);
    Tape<double> tape;
    auto out = project(tape, tape.constant(f16), proj);
    REQUIRE(out.shape() == Shape{4, 3});
    for (std::size_t p = 0; p < 4; ++p)
      for (std::size_t c = 0; c < 3; ++c) CHECK(out.value()(p, c) == f16[c * 4 + p]);
  }
  SECTION("zero kernel gives zero embedding") {
    ConvLayer<double> proj;
    proj.kernel = Parameter<double>("k", TensorD::zeros({2, 3, 1, 1}));
    proj.bias = Parameter<double>("b", TensorD::zeros({2}));
    Tape<double> tape;
    auto out = project(tape, tape.constant(TensorD::ones({3, 2, 2})), proj);
    for (std::size_t i = 0; i < out.value().size(); ++i) CHECK(out.value()[i] == 0.0);
  }
  SECTION("random kernel equals conv-then-reshape oracle") {
    ConvLayer<double> proj;
    proj.kernel = Parameter<double>("k", ref::random_tensor<double>({4, 2, 1, 1}, rng));
    proj.bias = Parameter<double>("b", ref::random_tensor<double>({4}, rng));
    TensorD f16 = ref::random_tensor<double>({2, 2, 2}, rng);
    Tape<double> tape;
    auto out = project(tape, tape.constant(f16), proj);
    TensorD conv = ref::conv2d(f16, proj.kernel.value, 1, 0);
    for (std::size_t p = 0; p < 4; ++p)
      for (std::size_t c = 0; c < 4; ++c)
        CHECK(out.value()(p, c) == Catch::Approx(conv[c * 4 + p] + proj.bias.value[c]).margin(1e-12));
  }
}

TEST_CASE("encode_mask examples", "[backbone]") {
  auto cfg = small_config();
  Rng rng(20);
  auto params = MaskEncoderParams<float>::init(cfg, rng, "me");
  SECTION("all-zero mask yields the contracted shape") {
    Tape<float> tape;
    auto out = encode_mask(tape, tape.constant(TensorF::zeros({1, 32, 32})), params);
    CHECK(out.shape() == Shape{4, 5});
  }
  SECTION("identical masks give identical embeddings") {
    Rng mrng(21);
    TensorF mask({1, 32, 32});
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mrng.uniform() > 0.5 ? 1.0f : 0.0f;
    Tape<float> tape;
    auto a = encode_mask(tape, tape.constant(mask), params);
    auto b = encode_mask(tape, tape.constant(mask), params);
    CHECK(ref::max_abs_diff(a.value(), b.value()) == 0.0f);
  }
  SECTION("out-of-range mask values are rejected") {
    TensorF mask = TensorF::full({1, 32, 32}, 1.5f);
    Tape<float> tape;
    CHECK_THROWS_AS(encode_mask(tape, tape.constant(mask), params), ContractError);
  }
  SECTION("matches a layer-by-layer oracle") {
    auto dcfg = small_config();
    Rng drng(22);
    auto dparams = MaskEncoderParams<double>::init(dcfg, drng, "me");
    Rng mrng(23);
    TensorD mask = ref::random_tensor<double>({1, 32, 32}, mrng, 0.0, 1.0);
    Tape<double> tape;
    auto out = encode_mask(tape, tape.constant(mask), dparams);

    auto conv = [](const TensorD& x, const ConvLayer<double>& l, std::size_t stride,
                   std::size_t pad) {
      TensorD y = ref::conv2d(x, l.kernel.value, stride, pad);
      const std::size_t hw = y.extent(1) * y.extent(2);
      for (std::size_t c = 0; c < y.extent(0); ++c)
        for (std::size_t i = 0; i < hw; ++i) y[c * hw + i] += l.bias.value[c];
      return y;
    };
    auto rl = [](TensorD x) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::max(x[i], 0.0);
      return x;
    };
    TensorD h = rl(conv(mask, dparams.trunk.stem, 2, 1));
    h = rl(conv(rl(conv(h, dparams.trunk.s1.down, 2, 1)), dparams.trunk.s1.same, 1, 1));
    h = rl(conv(rl(conv(h, dparams.trunk.s2.down, 2, 1)), dparams.trunk.s2.same, 1, 1));
    h = rl(conv(rl(conv(h, dparams.trunk.s3.down, 2, 1)), dparams.trunk.s3.same, 1, 1));
    TensorD proj = conv(h, dparams.projection, 1, 0);
    const std::size_t hw = proj.extent(1) * proj.extent(2);
    REQUIRE(out.shape() == Shape{hw, proj.extent(0)});
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t c = 0; c < proj.extent(0); ++c)
        CHECK(out.value()(p, c) == Catch::Approx(proj[c * hw + p]).margin(1e-10));
  }
}

TEST_CASE("assemble_memory examples", "[backbone]") {
  const std::size_t hw = 4, c = 3;
  auto make_features = [&](float v) {
    auto f = std::make_shared<FrameFeatures<float>>();
    f->embedding = TensorF::full({hw, c}, v);
    return f;
  };
  MemoryBank<float> bank;
  bank.append(0, make_features(1.0f), TensorF::full({hw, c}, 10.0f));
  bank.append(3, make_features(2.0f), TensorF::full({hw, c}, 20.0f));
  bank.append(5, make_features(3.0f), TensorF::full({hw, c}, 30.0f));

  SECTION("single frame is verbatim") {
    auto [m_ori, m_e] = assemble_memory(bank, {3});
    REQUIRE(m_ori.shape() == Shape{hw, c});
    for (std::size_t i = 0; i < m_ori.size(); ++i) {
      CHECK(m_ori[i] == 2.0f);
      CHECK(m_e[i] == 20.0f);
    }
  }
  SECTION("selection order does not matter") {
    auto a = assemble_memory(bank, {0, 5, 3});
    auto b = assemble_memory(bank, {5, 3, 0});
    CHECK(ref::max_abs_diff(a.first, b.first) == 0.0f);
    CHECK(ref::max_abs_diff(a.second, b.second) == 0.0f);
  }
  SECTION("two constant frames concatenate in ascending order") {
    auto [m_ori, m_e] = assemble_memory(bank, {0, 3});
    REQUIRE(m_ori.shape() == Shape{2 * hw, c});
    for (std::size_t i = 0; i < hw * c; ++i) {
      CHECK(m_ori[i] == 1.0f);
      CHECK(m_ori[hw * c + i] == 2.0f);
    }
  }
  SECTION("growing the selection keeps the leading rows") {
    auto one = assemble_memory(bank, {0});
    auto two = assemble_memory(bank, {0, 5});
    for (std::size_t i = 0; i < hw * c; ++i) CHECK(two.first[i] == one.first[i]);
  }
  SECTION("missing index is a lookup error") {
    CHECK_THROWS_AS(assemble_memory(bank, {0, 7}), LookupError);
  }
  SECTION("non-increasing append is rejected") {
    CHECK_THROWS_AS(bank.append(4, make_features(9.0f), TensorF::zeros({hw, c})), ContractError);
  }
}
