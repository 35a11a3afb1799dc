#include <gtest/gtest.h>

#include <random>

#include "risce/diagnostics.hpp"
#include "risce/models.hpp"
#include "risce/pilot_protocol.hpp"
#include "test_util.hpp"

using namespace risce;
using nn::Tensor4;

namespace {

Tensor4<float> random_input(nn::Shape4 s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return risce::detail::random_tensor<float>(s, rng);
}

template <class T>
void zero_all(nn::ParamStore<T>& store) {
  for (auto& p : store) std::fill(p.value.begin(), p.value.end(), T(0));
}

nn::ConvParams<float> conv_of(const nn::ParamStore<float>& store, std::size_t idx) {
  nn::ConvParams<float> p;
  const auto& w = store[idx];
  p.shape = {w.shape[0], w.shape[1], w.shape[2], w.shape[3]};
  p.weight = w.value;
  p.bias = store[idx + 1].value;
  return p;
}

/// Dense block evaluated from the primitive ops, layer by layer.
Tensor4<float> dense_block_oracle(const nn::ParamStore<float>& store, const DenseBlock<float>& db,
                                  const Tensor4<float>& x, bool dense) {
  std::vector<Tensor4<float>> feats{x};
  Tensor4<float> last;
  for (std::size_t k = 0; k < 5; ++k) {
    Tensor4<float> in;
    if (dense) {
      std::vector<const Tensor4<float>*> parts;
      for (const auto& f : feats) parts.push_back(&f);
      in = nn::concat_channels<float>(std::span<const Tensor4<float>* const>(parts));
    } else {
      in = feats.back();
    }
    auto y = nn::conv2d_forward(in, conv_of(store, db.conv_indices()[k]));
    if (k < 4)
      feats.push_back(nn::lrelu(y, 0.2f));
    else
      last = std::move(y);
  }
  return nn::scaled_residual_add(last, x, 0.2f);
}

ModelConfig small_model(std::size_t k, std::size_t c = 4) {
  ModelConfig m;
  m.antennas = 3;
  m.elements = 8;
  m.group_size = k;
  m.ienet = {c, 1, 0.2, 0.2, true};
  m.cenet = {c, 2, 0.2, 0.2, true};
  return m;
}

}  // namespace

TEST(Preprocess, SplitsRealAndImaginary) {
  ComplexMatrix m(1, 1, {cplx(1, 2)});
  const auto t = preprocess<float>(m);
  EXPECT_EQ(t.shape(), (nn::Shape4{1, 2, 1, 1}));
  EXPECT_EQ(t(0, 0, 0, 0), 1.0f);
  EXPECT_EQ(t(0, 1, 0, 0), 2.0f);
}

TEST(Preprocess, RealMatrixHasZeroImaginaryChannel) {
  ComplexMatrix m(2, 3, {1, -2, 3, 4, 5, -6});
  const auto t = preprocess<double>(m);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(t.plane(0, 1)[i], 0.0);
}

TEST(Preprocess, RoundTripIsExact) {
  std::mt19937_64 rng(1);
  const auto m = test::random_matrix(4, 5, rng);
  EXPECT_EQ(postprocess(preprocess<double>(m)), m);
  const auto back = postprocess(preprocess<float>(m));
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(back.data()[i].real(), static_cast<double>(static_cast<float>(m.data()[i].real())));
  }
  EXPECT_THROW(postprocess(Tensor4<float>({1, 3, 2, 2})), InvalidArgument);
}

TEST(ExpandPartial, UnitGroupIsIdentity) {
  std::mt19937_64 rng(2);
  const auto m = test::random_matrix(3, 4, rng);
  EXPECT_EQ(expand_partial(m, 1), m);
}

TEST(ExpandPartial, RepeatsColumns) {
  ComplexMatrix m(1, 2, {cplx(1, 1), cplx(2, -1)});
  const auto e = expand_partial(m, 2);
  EXPECT_EQ(e, ComplexMatrix(1, 4, {cplx(1, 1), cplx(1, 1), cplx(2, -1), cplx(2, -1)}));
}

TEST(ExpandPartial, LeadersExpandToReplicatedChannel) {
  std::mt19937_64 rng(3);
  const auto a = test::random_matrix(4, 12, rng);
  for (std::size_t k : {1u, 2u, 3u, 4u}) {
    const auto g = grouped_channels(a, k);
    EXPECT_EQ(expand_partial(g.leaders, k), g.replicated);
  }
}

TEST(DenseBlock, ChannelTraceMatchesDenseConcatenation) {
  nn::ParamStore<float> store;
  DenseBlock<float> db(store, "db", NetConfig{32, 1, 0.2, 0.2, true}, 1);
  const std::array<std::size_t, 5> want{32, 64, 96, 128, 160};
  EXPECT_EQ(db.in_channels(), want);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(store[db.conv_indices()[k]].shape,
              (std::vector<std::size_t>{32, want[k], 3, 3}));
  }
  nn::ParamStore<float> plain_store;
  DenseBlock<float> plain(plain_store, "db", NetConfig{32, 1, 0.2, 0.2, false}, 1);
  for (auto c : plain.in_channels()) EXPECT_EQ(c, 32u);
}

TEST(DenseBlock, ZeroWeightsGiveIdentity) {
  nn::ParamStore<float> store;
  DenseBlock<float> db(store, "db", NetConfig{4, 1, 0.2, 0.2, true}, 1);
  zero_all(store);
  const auto x = random_input({2, 4, 3, 5}, 4);
  EXPECT_EQ(db.forward(store, x, nullptr), x);
}

TEST(DenseBlock, ZeroBetaGivesIdentity) {
  nn::ParamStore<float> store;
  DenseBlock<float> db(store, "db", NetConfig{4, 1, 0.0, 0.2, true}, 1);
  const auto x = random_input({2, 4, 3, 5}, 5);
  EXPECT_EQ(db.forward(store, x, nullptr), x);
}

TEST(DenseBlock, MatchesPrimitiveComposition) {
  for (bool dense : {true, false}) {
    nn::ParamStore<float> store;
    DenseBlock<float> db(store, "db", NetConfig{3, 1, 0.2, 0.2, dense}, 7);
    for (auto& p : store)
      if (p.shape.size() == 1)
        for (std::size_t i = 0; i < p.size(); ++i) p.value[i] = 0.01f * static_cast<float>(i + 1);
    const auto x = random_input({2, 3, 4, 5}, 8);
    const auto got = db.forward(store, x, nullptr);
    const auto want = dense_block_oracle(store, db, x, dense);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-5);
  }
}

TEST(DenseBlock, LastConvInitialisedTenTimesSmaller) {
  // variance ratio of conv_d5 to a plain He init of the same shape
  nn::ParamStore<double> store;
  DenseBlock<double> db(store, "db", NetConfig{32, 1, 0.2, 0.2, true}, 3);
  const auto& w5 = store[db.conv_indices()[4]].value;
  double var = 0.0;
  for (double w : w5) var += w * w;
  var /= static_cast<double>(w5.size());
  const double he = 2.0 / (160.0 * 9.0);
  EXPECT_NEAR(var, he / 10.0, 0.05 * he / 10.0);
}

TEST(ResidualBlock, ZeroWeightsScaleByOnePlusBeta) {
  // zero-weight dense blocks pass x through, so out = x + beta * x
  nn::ParamStore<float> store;
  ResidualBlock<float> rb(store, "rb", NetConfig{4, 1, 0.2, 0.2, true}, 1);
  zero_all(store);
  const auto x = random_input({1, 4, 3, 3}, 6);
  EXPECT_EQ(rb.forward(store, x, nullptr), nn::scaled_residual_add(x, x, 0.2f));
}

TEST(ResidualBlock, ZeroBetaIsIdentity) {
  nn::ParamStore<float> store;
  ResidualBlock<float> rb(store, "rb", NetConfig{4, 1, 0.0, 0.2, true}, 1);
  const auto x = random_input({1, 4, 3, 3}, 7);
  EXPECT_EQ(rb.forward(store, x, nullptr), x);
}

TEST(ResidualBlock, MatchesThreeDenseBlocksPlusScaledAdd) {
  nn::ParamStore<float> store;
  ResidualBlock<float> rb(store, "rb", NetConfig{3, 1, 0.2, 0.2, true}, 9);
  const auto x = random_input({1, 3, 4, 4}, 10);
  Tensor4<float> h = x;
  for (std::size_t i = 0; i < 3; ++i) h = dense_block_oracle(store, rb.block(i), h, true);
  const auto want = nn::scaled_residual_add(h, x, 0.2f);
  const auto got = rb.forward(store, x, nullptr);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-5);
}

TEST(IENet, ZeroFinalConvGivesZeroOutput) {
  nn::ParamStore<float> store;
  IENet<float> net(store, NetConfig{4, 2, 0.2, 0.2, true}, 1);
  for (auto& p : store)
    if (p.name.rfind("ienet.conv_i1", 0) != 0) std::fill(p.value.begin(), p.value.end(), 0.0f);
  const auto y = net.forward(store, random_input({2, 2, 3, 4}, 11), nullptr);
  for (float v : y.storage()) EXPECT_EQ(v, 0.0f);
}

TEST(IENet, FixedSeedIsBitIdentical) {
  const auto x = random_input({1, 2, 3, 4}, 12);
  nn::ParamStore<float> s1, s2;
  IENet<float> a(s1, NetConfig{4, 1, 0.2, 0.2, true}, 5);
  IENet<float> b(s2, NetConfig{4, 1, 0.2, 0.2, true}, 5);
  EXPECT_EQ(a.forward(s1, x, nullptr), b.forward(s2, x, nullptr));
}

TEST(IENet, OutputShapeAtFullSize) {
  nn::ParamStore<float> store;
  IENet<float> net(store, NetConfig{32, 2, 0.2, 0.2, true}, 1);
  const auto y = net.forward(store, Tensor4<float>({1, 2, 16, 32}), nullptr);
  EXPECT_EQ(y.shape(), (nn::Shape4{1, 2, 16, 32}));
}

TEST(IENet, ComposesAsConvTrunkShortcut) {
  // I3(I2(RB(I1 x)) + I1 x) from the primitive ops
  nn::ParamStore<float> store;
  IENet<float> net(store, NetConfig{3, 1, 0.2, 0.2, true}, 13);
  const auto x = random_input({1, 2, 3, 4}, 14);
  const auto i1 = nn::conv2d_forward(x, conv_of(store, store.find("ienet.conv_i1.weight")));
  Tensor4<float> h = i1;
  for (std::size_t i = 0; i < 3; ++i) h = dense_block_oracle(store, net.block(0).block(i), h, true);
  h = nn::scaled_residual_add(h, i1, 0.2f);
  auto s = nn::conv2d_forward(h, conv_of(store, store.find("ienet.conv_i2.weight")));
  nn::add_inplace(s, i1);
  const auto want = nn::conv2d_forward(s, conv_of(store, store.find("ienet.conv_i3.weight")));
  const auto got = net.forward(store, x, nullptr);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-5);
}

TEST(CENet, ZeroTrunkGivesLsExpansion) {
  for (std::size_t k : {1u, 2u, 4u}) {
    nn::ParamStore<float> store;
    CENet<float> net(store, NetConfig{4, 2, 0.2, 0.2, true}, k, 1);
    zero_all(store);
    const auto x = random_input({2, 2, 3, 8 / k}, 15);
    EXPECT_EQ(net.forward(store, x, nullptr), nn::expand_width(x, k));
  }
}

TEST(CENet, OutputShapeAtFullSize) {
  nn::ParamStore<float> store;
  CENet<float> net(store, NetConfig{32, 4, 0.2, 0.2, true}, 2, 1);
  const auto y = net.forward(store, Tensor4<float>({1, 2, 16, 32}), nullptr);
  EXPECT_EQ(y.shape(), (nn::Shape4{1, 2, 16, 64}));
}

TEST(CENet, TrunkEqualsOutputMinusExpansion) {
  nn::ParamStore<float> store;
  CENet<float> net(store, NetConfig{3, 1, 0.2, 0.2, true}, 2, 16);
  const auto x = random_input({1, 2, 3, 4}, 17);
  typename CENet<float>::Cache cache;
  const auto y = net.forward(store, x, &cache);
  const auto trunk =
      nn::conv2d_forward(cache.trunk, conv_of(store, store.find("cenet.conv_c2.weight")));
  const auto e = nn::expand_width(x, 2);
  for (std::size_t i = 0; i < y.size(); ++i)
    EXPECT_NEAR(y.data()[i] - e.data()[i], trunk.data()[i], 1e-6);
}

TEST(ParameterCount, ClosedFormAtFullSize) {
  // dense block: sum_k (32 * 32k * 9 + 32) for k = 1..5
  const NetConfig c{32, 1, 0.2, 0.2, true};
  const std::size_t db = 9 * 32 * 32 * (1 + 2 + 3 + 4 + 5) + 5 * 32;
  EXPECT_EQ(DenseBlock<float>::parameter_count(c), db);
  EXPECT_EQ(ResidualBlock<float>::parameter_count(c), 3 * db);
  const std::size_t conv5 = 32 * 2 * 25 + 32, conv33 = 32 * 32 * 9 + 32, out = 2 * 32 * 9 + 2;
  NetConfig ie = c, ce = c;
  ie.residual_blocks = 2;
  ce.residual_blocks = 4;
  EXPECT_EQ(IENet<float>::parameter_count(ie), conv5 + 2 * 3 * db + conv33 + out);
  EXPECT_EQ(CENet<float>::parameter_count(ce), conv5 + 4 * 3 * db + out);
  const ModelConfig m;
  EXPECT_EQ(JointModel<float>::parameter_count(m),
            IENet<float>::parameter_count(ie) + CENet<float>::parameter_count(ce));
  JointModel<float> model(m, 1);
  std::size_t total = 0;
  for (const auto& p : model.params()) total += p.size();
  EXPECT_EQ(total, JointModel<float>::parameter_count(m));
  NetConfig plain = c;
  plain.dense = false;
  EXPECT_EQ(DenseBlock<float>::parameter_count(plain), 5 * (32 * 32 * 9 + 32));
}

TEST(JointModel, ShapesAndDeterminism) {
  const auto cfg = small_model(2);
  JointModel<float> a(cfg, 3), b(cfg, 3);
  const auto x = random_input({2, 2, 3, 4}, 18);
  const auto oa = a.forward(x), ob = b.forward(x);
  EXPECT_EQ(oa.partial.shape(), (nn::Shape4{2, 2, 3, 4}));
  EXPECT_EQ(oa.full.shape(), (nn::Shape4{2, 2, 3, 8}));
  EXPECT_EQ(oa.full, ob.full);
  EXPECT_EQ(oa.partial, ob.partial);
  EXPECT_THROW(a.forward(random_input({1, 2, 3, 8}, 1)), InvalidArgument);
}

TEST(JointModel, CenetOnlyPassesLsEstimateThrough) {
  auto cfg = small_model(2);
  cfg.use_ienet = false;
  JointModel<float> model(cfg, 4);
  model.zero_range(model.cenet().param_range());
  const auto x = random_input({1, 2, 3, 4}, 19);
  const auto o = model.forward(x);
  EXPECT_EQ(o.partial, x);
  EXPECT_EQ(o.full, nn::expand_width(x, 2));
}

TEST(JointModel, ComplexConveniencesAgreeWithTensorPath) {
  const auto cfg = small_model(2);
  JointModel<double> model(cfg, 5);
  std::mt19937_64 rng(20);
  const auto a0 = test::random_matrix(3, 4, rng);
  const auto [partial, full] = joint_forward(model, a0);
  EXPECT_EQ(partial, ienet_forward(model, a0));
  EXPECT_EQ(full, cenet_forward(model, partial));
  EXPECT_EQ(full.cols(), 8u);
}

TEST(JointModel, LossOnFullChannelAloneReachesIenetParameters) {
  // rho = 0: only L_C is active, yet the IENet weights still receive gradient
  const auto cfg = small_model(2, 3);
  JointModel<double> model(cfg, 6);
  std::mt19937_64 rng(21);
  const auto x = risce::detail::random_tensor<double>({1, 2, 3, 4}, rng);
  const auto label = risce::detail::random_tensor<double>({1, 2, 3, 8}, rng);
  typename JointModel<double>::Cache cache;
  const auto o = model.forward(x, &cache);
  Tensor4<double> g_full;
  mse_loss(label, o.full, &g_full);
  model.params().zero_grads();
  model.backward(cache, Tensor4<double>(o.partial.shape()), g_full);
  auto& p = model.params()[model.params().find("ienet.conv_i1.weight")];
  double norm = 0.0;
  for (double g : p.grad) norm += g * g;
  EXPECT_GT(norm, 0.0);
  // finite-difference probe on one weight
  const auto loss = [&] { return mse_loss(label, model.forward(x).full); };
  const auto r = nn::check_gradient<double>(std::span<double>(p.value).subspan(0, 8),
                                            std::span<const double>(p.grad).subspan(0, 8), loss,
                                            1e-6);
  EXPECT_LT(r.max_norm_error(), 1e-6);
}

TEST(JointModel, LoadRejectsMismatchedLayout) {
  // conv shapes do not depend on K, so a K=4 store loads into a K=2 model
  JointModel<float> a(small_model(2), 1), b(small_model(4), 2);
  EXPECT_NO_THROW(a.load(b.params()));
  auto cfg = small_model(2);
  cfg.cenet.residual_blocks = 1;
  JointModel<float> c(cfg, 1);
  EXPECT_THROW(a.load(c.params()), FormatError);
}

TEST(JointModel, ConfigValidation) {
  auto cfg = small_model(3);
  EXPECT_THROW(JointModel<float>(cfg, 1), InvalidArgument);
  cfg = small_model(2);
  cfg.cenet.slope = 1.0;
  EXPECT_THROW(JointModel<float>(cfg, 1), InvalidArgument);
}
