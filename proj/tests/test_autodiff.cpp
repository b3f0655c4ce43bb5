#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dasr/core/rng.hpp"
#include "dasr/tensor/tape.hpp"
#include "support/gradcheck.hpp"

using namespace dasr;
using dasr::testing::GradCheckReport;
using dasr::testing::gradcheck;
using dasr::testing::random_tensor;

namespace {

// Reduces an arbitrary-shaped output to a scalar through a fixed random
// functional so that gradients are not trivially uniform.
double probe_reduce(Tape& t, Tape::Id out, const Tensor& probe) {
  const Tape::Id s = t.sum(t.mul(out, t.constant(probe)));
  return t.val(s)[0];
}

Tape::Id probe_reduce_node(Tape& t, Tape::Id out, const Tensor& probe) {
  return t.sum(t.mul(out, t.constant(probe)));
}

}  // namespace

TEST(Backward, SumGradIsOnes) {
  Tape t;
  Rng rng(1);
  const Tape::Id x = t.leaf(random_tensor({3, 4}, rng), true);
  t.backward(t.sum(x));
  const Tensor g = t.grad(x);
  for (int64_t i = 0; i < g.numel(); ++i) EXPECT_DOUBLE_EQ(g[i], 1.0);
}

TEST(Backward, DotGradIsTwoX) {
  Tape t;
  Rng rng(2);
  const Tensor xv = random_tensor({1, 6}, rng);
  const Tape::Id x = t.leaf(xv, true);
  t.backward(t.sum(t.mul(x, x)));
  const Tensor g = t.grad(x);
  for (int64_t i = 0; i < g.numel(); ++i) EXPECT_NEAR(g[i], 2.0 * xv[i], 1e-12);
}

TEST(Backward, UnreachableParameterGetsZeros) {
  Tape t;
  Rng rng(3);
  const Tape::Id x = t.leaf(random_tensor({2, 2}, rng), true);
  const Tape::Id unused = t.leaf(random_tensor({5}, rng), true);
  t.backward(t.sum(x));
  const Tensor g = t.grad(unused);
  for (int64_t i = 0; i < g.numel(); ++i) EXPECT_EQ(g[i], 0.0);
}

namespace {

struct OpCase {
  const char* name;
  std::vector<Tensor> inputs;
  Tensor probe;
  std::function<Tape::Id(Tape&, std::vector<Tape::Id>)> build;
};

GradCheckReport run_case(const OpCase& c, Rng& rng, int points = 10) {
  auto value = [&](const std::vector<Tensor>& ins) {
    Tape t;
    std::vector<Tape::Id> ids;
    for (const Tensor& in : ins) ids.push_back(t.leaf(in, false));
    return probe_reduce(t, c.build(t, ids), c.probe);
  };
  auto grads = [&](const std::vector<Tensor>& ins) {
    Tape t;
    std::vector<Tape::Id> ids;
    for (const Tensor& in : ins) ids.push_back(t.leaf(in, true));
    t.backward(probe_reduce_node(t, c.build(t, ids), c.probe));
    std::vector<Tensor> out;
    for (Tape::Id id : ids) out.push_back(t.grad(id));
    return out;
  };
  return gradcheck(value, grads, c.inputs, rng, points);
}

}  // namespace

TEST(GradCheck, Conv2d) {
  Rng rng(10);
  OpCase c{"conv2d",
           {random_tensor({2, 3, 6, 5}, rng), random_tensor({4, 3, 3, 3}, rng),
            random_tensor({4}, rng)},
           random_tensor({2, 4, 6, 5}, rng),
           [](Tape& t, std::vector<Tape::Id> ids) {
             return t.conv2d(ids[0], ids[1], ids[2], 1);
           }};
  const GradCheckReport r = run_case(c, rng);
  EXPECT_TRUE(r.ok()) << "max rel err " << r.max_rel_err;
}

TEST(GradCheck, Conv2dStride2Reflect) {
  Rng rng(11);
  OpCase c{"conv2d_s2",
           {random_tensor({1, 2, 8, 8}, rng), random_tensor({3, 2, 3, 3}, rng),
            random_tensor({3}, rng)},
           random_tensor({1, 3, 4, 4}, rng),
           [](Tape& t, std::vector<Tape::Id> ids) {
             return t.conv2d(ids[0], ids[1], ids[2], 2, Padding::Reflect);
           }};
  const GradCheckReport r = run_case(c, rng);
  EXPECT_TRUE(r.ok()) << "max rel err " << r.max_rel_err;
}

TEST(GradCheck, DepthwiseConv2d) {
  Rng rng(12);
  OpCase c{"depthwise",
           {random_tensor({2, 3, 5, 5}, rng), random_tensor({3, 1, 3, 3}, rng)},
           random_tensor({2, 3, 5, 5}, rng),
           [](Tape& t, std::vector<Tape::Id> ids) { return t.depthwise_conv2d(ids[0], ids[1]); }};
  const GradCheckReport r = run_case(c, rng);
  EXPECT_TRUE(r.ok()) << "max rel err " << r.max_rel_err;
}

TEST(GradCheck, Dense) {
  Rng rng(13);
  OpCase c{"dense",
           {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng), random_tensor({4}, rng)},
           random_tensor({3, 4}, rng),
           [](Tape& t, std::vector<Tape::Id> ids) { return t.dense(ids[0], ids[1], ids[2]); }};
  const GradCheckReport r = run_case(c, rng);
  EXPECT_TRUE(r.ok()) << "max rel err " << r.max_rel_err;
}

TEST(GradCheck, Activations) {
  Rng rng(14);
  {
    OpCase c{"leaky_relu",
             {random_tensor({2, 7}, rng)},
             random_tensor({2, 7}, rng),
             [](Tape& t, std::vector<Tape::Id> ids) { return t.leaky_relu(ids[0], 0.1); }};
    const GradCheckReport r = run_case(c, rng);
    EXPECT_TRUE(r.ok()) << "max rel err " << r.max_rel_err;
  }
  {
    OpCase c{"sigmoid",
             {random_tensor({2, 7}, rng)},
             random_tensor({2, 7}, rng),
             [](Tape& t, std::vector<Tape::Id> ids) { return t.sigmoid(ids[0]); }};
    const GradCheckReport r = run_case(c, rng);
    EXPECT_TRUE(r.ok()) << "max rel err " << r.max_rel_err;
  }
}

TEST(GradCheck, PoolShuffleNormalize) {
  Rng rng(15);
  {
    OpCase c{"gap",
             {random_tensor({2, 3, 4, 4}, rng)},
             random_tensor({2, 3}, rng),
             [](Tape& t, std::vector<Tape::Id> ids) { return t.global_avg_pool(ids[0]); }};
    EXPECT_TRUE(run_case(c, rng).ok());
  }
  {
    OpCase c{"pixel_shuffle",
             {random_tensor({1, 8, 3, 3}, rng)},
             random_tensor({1, 2, 6, 6}, rng),
             [](Tape& t, std::vector<Tape::Id> ids) { return t.pixel_shuffle(ids[0], 2); }};
    EXPECT_TRUE(run_case(c, rng).ok());
  }
  {
    OpCase c{"l2_normalize",
             {random_tensor({3, 6}, rng)},
             random_tensor({3, 6}, rng),
             [](Tape& t, std::vector<Tape::Id> ids) { return t.l2_normalize(ids[0]); }};
    const GradCheckReport r = run_case(c, rng);
    EXPECT_TRUE(r.ok()) << "max rel err " << r.max_rel_err;
  }
}

TEST(GradCheck, LinearAlgebraAndGlue) {
  Rng rng(16);
  {
    OpCase c{"matmul",
             {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng)},
             random_tensor({3, 5}, rng),
             [](Tape& t, std::vector<Tape::Id> ids) { return t.matmul(ids[0], ids[1]); }};
    EXPECT_TRUE(run_case(c, rng).ok());
  }
  {
    OpCase c{"rowwise_dot",
             {random_tensor({4, 6}, rng), random_tensor({4, 6}, rng)},
             random_tensor({4, 1}, rng),
             [](Tape& t, std::vector<Tape::Id> ids) { return t.rowwise_dot(ids[0], ids[1]); }};
    EXPECT_TRUE(run_case(c, rng).ok());
  }
  {
    OpCase c{"concat_cols",
             {random_tensor({3, 2}, rng), random_tensor({3, 5}, rng)},
             random_tensor({3, 7}, rng),
             [](Tape& t, std::vector<Tape::Id> ids) { return t.concat_cols(ids[0], ids[1]); }};
    EXPECT_TRUE(run_case(c, rng).ok());
  }
  {
    OpCase c{"concat_channels",
             {random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 3, 3, 3}, rng)},
             random_tensor({2, 5, 3, 3}, rng),
             [](Tape& t, std::vector<Tape::Id> ids) { return t.concat_channels(ids[0], ids[1]); }};
    EXPECT_TRUE(run_case(c, rng).ok());
  }
  {
    OpCase c{"channel_scale",
             {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 3}, rng)},
             random_tensor({2, 3, 4, 4}, rng),
             [](Tape& t, std::vector<Tape::Id> ids) { return t.channel_scale(ids[0], ids[1]); }};
    EXPECT_TRUE(run_case(c, rng).ok());
  }
  {
    OpCase c{"broadcast_tile",
             {random_tensor({1, 3}, rng)},
             random_tensor({2, 3, 2, 2}, rng),
             [](Tape& t, std::vector<Tape::Id> ids) {
               return t.broadcast_spatial(t.tile_rows(ids[0], 2), 2, 2);
             }};
    EXPECT_TRUE(run_case(c, rng).ok());
  }
}

TEST(GradCheck, Losses) {
  Rng rng(17);
  {
    // mean_abs away from ties.
    auto value = [](const std::vector<Tensor>& ins) {
      Tape t;
      return t.val(t.mean_abs(t.leaf(ins[0]), t.leaf(ins[1])))[0];
    };
    auto grads = [](const std::vector<Tensor>& ins) {
      Tape t;
      const Tape::Id a = t.leaf(ins[0], true);
      const Tape::Id b = t.leaf(ins[1], true);
      t.backward(t.mean_abs(a, b));
      return std::vector<Tensor>{t.grad(a), t.grad(b)};
    };
    const GradCheckReport r = gradcheck(
        value, grads, {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 3, 4, 4}, rng)}, rng);
    EXPECT_TRUE(r.ok()) << "max rel err " << r.max_rel_err;
  }
  {
    auto value = [](const std::vector<Tensor>& ins) {
      Tape t;
      return t.val(t.softmax_cross_entropy(t.leaf(ins[0]), {1, 0, 3}))[0];
    };
    auto grads = [](const std::vector<Tensor>& ins) {
      Tape t;
      const Tape::Id x = t.leaf(ins[0], true);
      t.backward(t.softmax_cross_entropy(x, {1, 0, 3}));
      return std::vector<Tensor>{t.grad(x)};
    };
    const GradCheckReport r = gradcheck(value, grads, {random_tensor({3, 5}, rng)}, rng);
    EXPECT_TRUE(r.ok()) << "max rel err " << r.max_rel_err;
  }
}

TEST(GradCheck, CompositeConvNet) {
  Rng rng(18);
  // conv -> lrelu -> strided conv -> gap -> dense -> cross entropy
  std::vector<Tensor> inputs = {
      random_tensor({2, 2, 8, 8}, rng),  random_tensor({3, 2, 3, 3}, rng),
      random_tensor({3}, rng),           random_tensor({4, 3, 3, 3}, rng),
      random_tensor({4}, rng),           random_tensor({5, 4}, rng),
      random_tensor({5}, rng)};
  auto forward = [](Tape& t, std::vector<Tape::Id> ids) {
    Tape::Id h = t.conv2d(ids[0], ids[1], ids[2], 1);
    h = t.leaky_relu(h, 0.1);
    h = t.conv2d(h, ids[3], ids[4], 2, Padding::Reflect);
    h = t.global_avg_pool(h);
    h = t.dense(h, ids[5], ids[6]);
    return t.softmax_cross_entropy(h, {2, 0});
  };
  auto value = [&](const std::vector<Tensor>& ins) {
    Tape t;
    std::vector<Tape::Id> ids;
    for (const Tensor& in : ins) ids.push_back(t.leaf(in, false));
    return t.val(forward(t, ids))[0];
  };
  auto grads = [&](const std::vector<Tensor>& ins) {
    Tape t;
    std::vector<Tape::Id> ids;
    for (const Tensor& in : ins) ids.push_back(t.leaf(in, true));
    t.backward(forward(t, ids));
    std::vector<Tensor> out;
    for (Tape::Id id : ids) out.push_back(t.grad(id));
    return out;
  };
  const GradCheckReport r = gradcheck(value, grads, inputs, rng, 6);
  EXPECT_TRUE(r.ok()) << "max rel err " << r.max_rel_err << " max abs err " << r.max_abs_err;
}

TEST(Backward, FrozenLeavesReceiveNoGradient) {
  Tape t;
  Rng rng(19);
  const Tape::Id x = t.leaf(random_tensor({2, 4}, rng), true);
  const Tape::Id frozen = t.leaf(random_tensor({2, 4}, rng), false);
  t.backward(t.sum(t.mul(x, frozen)));
  const Tensor gf = t.grad(frozen);
  for (int64_t i = 0; i < gf.numel(); ++i) EXPECT_EQ(gf[i], 0.0);
  const Tensor gx = t.grad(x);
  for (int64_t i = 0; i < gx.numel(); ++i) EXPECT_EQ(gx[i], t.val(frozen)[i]);
}
