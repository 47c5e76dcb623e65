#include <gtest/gtest.h>

#include "tfegnn/autodiff/ops.hpp"

using namespace tfegnn::ad;

TEST(Tensor, ShapeAndData) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.at(1, 2), 1.5);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_EQ(Tensor::scalar(4.0).item(), 4.0);
  EXPECT_EQ(shape_str({2, 3}), "[2,3]");
}

TEST(Tensor, ShapeErrorNamesOpAndShapes) {
  try {
    throw ShapeError("matmul", {2, 3}, {4, 5});
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4,5]"), std::string::npos);
  }
}

TEST(ParameterStore, UniqueNamesAndLookup) {
  ParameterStore s;
  auto& w = s.add("layer.weight", Tensor({2}, 1.0));
  s.add_buffer("layer.running", Tensor({2}, 0.0));
  EXPECT_THROW(s.add("layer.weight", Tensor({1})), std::invalid_argument);
  EXPECT_EQ(&s.get("layer.weight"), &w);
  EXPECT_THROW(s.get("nope"), std::out_of_range);
  EXPECT_EQ(s.trainable().size(), 1u);
  EXPECT_EQ(w.grad.shape(), w.value.shape());
  auto c = s.clone();
  c.get("layer.weight").value[0] = 9;
  EXPECT_EQ(w.value[0], 1.0);
}

TEST(Backward, QuadraticGradient) {
  ParameterStore s;
  auto& w = s.add("w", Tensor({1, 2}, std::vector<double>{1, 2}));
  Tape tape;
  Var x = tape.param(w);
  tape.backward(sum(mul(x, x)));
  EXPECT_EQ(w.grad.values()[0], 2.0);
  EXPECT_EQ(w.grad.values()[1], 4.0);
}

TEST(Backward, AccumulatesUntilZeroGrad) {
  ParameterStore s;
  auto& w = s.add("w", Tensor({1, 2}, std::vector<double>{1, 2}));
  for (int k = 0; k < 2; ++k) {
    Tape tape;
    Var x = tape.param(w);
    tape.backward(sum(mul(x, x)));
  }
  EXPECT_EQ(w.grad[1], 8.0);
  s.zero_grad();
  EXPECT_EQ(w.grad[1], 0.0);
}

TEST(Backward, ConstantLossLeavesZeroGrads) {
  ParameterStore s;
  auto& w = s.add("w", Tensor({3}, 2.0));
  Tape tape;
  (void)tape.param(w);
  Var c = tape.constant(Tensor::scalar(5.0));
  tape.backward(c);
  for (double g : w.grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, UnreachedParameterStaysZero) {
  ParameterStore s;
  auto& a = s.add("a", Tensor({1, 2}, 1.0));
  auto& b = s.add("b", Tensor({1, 2}, 1.0));
  Tape tape;
  Var va = tape.param(a);
  (void)tape.param(b);
  tape.backward(sum(va));
  EXPECT_EQ(a.grad[0], 1.0);
  EXPECT_EQ(b.grad[0], 0.0);
}

TEST(Backward, RejectsNonScalarAndForeignTape) {
  ParameterStore s;
  auto& w = s.add("w", Tensor({1, 2}, 1.0));
  Tape t1, t2;
  Var x = t1.param(w);
  EXPECT_THROW(t1.backward(x), ShapeError);
  Var y = sum(t2.param(w));
  EXPECT_THROW(t1.backward(y), std::invalid_argument);
}

TEST(Backward, BuffersNeverReceiveGradients) {
  ParameterStore s;
  auto& buf = s.add_buffer("buf", Tensor({1, 2}, 1.0));
  Tape tape;
  Var x = tape.param(buf);
  EXPECT_FALSE(tape.requires_grad(x.id()));
  tape.backward(sum(mul(x, x)));
  EXPECT_EQ(buf.grad[0], 0.0);
}

TEST(Tape, DeferredEffectsRunOnCommit) {
  Tape tape;
  int hits = 0;
  tape.defer([&] { ++hits; });
  tape.defer([&] { hits *= 10; });
  EXPECT_EQ(hits, 0);
  auto effects = tape.take_deferred();
  EXPECT_EQ(effects.size(), 2u);
  tape.commit();
  EXPECT_EQ(hits, 0);
  for (auto& f : effects) f();
  EXPECT_EQ(hits, 10);
}
