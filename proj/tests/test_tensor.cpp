#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "ltm/gradcheck.hpp"
#include "ltm/optim.hpp"
#include "ltm/tensor.hpp"
#include "op_suite.hpp"

using namespace ltm;
using ad::Shape;
using FTape = ad::Tape<float>;
using DTape = ad::Tape<double>;

TEST(Forward, MatmulIdentity) {
    FTape tape;
    const float eye[] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    const float x[] = {2.5f, -1.0f, 0.25f};
    auto I = tape.input({3, 3}, eye);
    auto v = tape.input({3, 1}, x);
    auto y = tape.matmul(I, v);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(y.value()[i], x[i]);
}

TEST(Forward, SoftmaxUniform) {
    FTape tape;
    const float x[] = {0, 0, 0};
    auto s = tape.softmax_cols(tape.input({1, 3}, x));
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(s.value()[i], 1.0f / 3.0f, 1e-6f);
}

TEST(Forward, SoftplusAtZero) {
    FTape tape;
    const float x[] = {0};
    auto y = tape.softplus(tape.input({1, 1}, x));
    EXPECT_NEAR(y.value()[0], 0.69314718f, 1e-6f);  // ln(1 + e^0)
}

TEST(Forward, PureFunctionBitwise) {
    auto run = [](std::vector<float>& out) {
        FTape tape;
        CounterRng rng(11);
        std::vector<float> a(64 * 32), b(32 * 16);
        for (auto& v : a) v = rng.next_gaussian();
        for (auto& v : b) v = rng.next_gaussian();
        auto x = tape.input({64, 32}, a.data());
        auto w = tape.input({32, 16}, b.data());
        auto y = tape.softmax_cols(tape.matmul(tape.relu(x), w));
        out.assign(y.value().begin(), y.value().end());
    };
    std::vector<float> r1, r2;
    run(r1);
    run(r2);
    ASSERT_EQ(r1.size(), r2.size());
    for (size_t i = 0; i < r1.size(); ++i) EXPECT_EQ(r1[i], r2[i]);
}

TEST(Forward, ShapeMismatchDiagnostic) {
    FTape tape;
    const float z[6] = {};
    auto a = tape.input({2, 3}, z);
    auto b = tape.input({2, 3}, z);
    try {
        tape.matmul(a, b);
        FAIL() << "expected shape error";
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("matmul"), std::string::npos);
        EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    }
    EXPECT_THROW(tape.add(a, tape.input({3, 2}, z)), std::runtime_error);
}

TEST(Backward, SumOfSquares) {
    DTape tape;
    const double x[] = {1, 2};
    auto v = tape.param({1, 2}, x);
    auto y = tape.sum_all(tape.mul(v, v));
    tape.backward(y);
    EXPECT_DOUBLE_EQ(v.grad()[0], 2.0);
    EXPECT_DOUBLE_EQ(v.grad()[1], 4.0);
}

TEST(Backward, SoftmaxPickIndexZero) {
    // Hand-derived 2-way softmax Jacobian at [0,0]: s = [1/2, 1/2],
    // d s0/dx = [s0(1-s0), -s0*s1] = [1/4, -1/4].
    DTape tape;
    const double x[] = {0, 0};
    auto v = tape.param({1, 2}, x);
    auto s = tape.softmax_cols(v);
    auto p = tape.slice_cols(s, 0, 1);
    tape.backward(p);
    EXPECT_NEAR(v.grad()[0], 0.25, 1e-12);
    EXPECT_NEAR(v.grad()[1], -0.25, 1e-12);
}

TEST(Backward, MaxRoutesToLowestArgmaxOnTies) {
    DTape tape;
    const double x[] = {3, 3, 1, 7, 2, 7};  // two groups of 3, each with a tie
    auto v = tape.param({6, 1}, x);
    auto m = tape.group_max_rows(v, 3);
    tape.backward(tape.sum_all(m));
    const double expect[] = {1, 0, 0, 1, 0, 0};
    for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(v.grad()[i], expect[i]);
}

TEST(Backward, FanOutAccumulates) {
    DTape tape;
    const double x[] = {2};
    auto v = tape.param({1, 1}, x);
    auto y = tape.add(tape.mul(v, v), v);  // x^2 + x -> dy/dx = 2x + 1
    tape.backward(tape.sum_all(y));
    EXPECT_DOUBLE_EQ(v.grad()[0], 5.0);
}

TEST(Backward, StateErrors) {
    DTape tape;
    EXPECT_THROW(tape.backward(ad::Var<double>{}), std::runtime_error);
    const double x[] = {1};
    auto v = tape.param({1, 1}, x);
    EXPECT_THROW((void)v.grad(), std::runtime_error);  // before backward
}

TEST(GradCheck, LinearOpIsExact) {
    auto build = [](DTape& t, const std::vector<ad::Var<double>>& x) {
        return t.sum_all(t.scale(x[0], 3.0));
    };
    std::vector<std::vector<double>> point = {{0.3, -1.2, 0.7, 2.0}};
    auto report = ad::finite_difference_check(build, {Shape{1, 4}}, point, 1e-3);
    EXPECT_LT(report.max_rel_err, 1e-10);
}

TEST(GradCheck, SoftplusAtZeroHalf) {
    auto build = [](DTape& t, const std::vector<ad::Var<double>>& x) {
        return t.sum_all(t.softplus(x[0]));
    };
    std::vector<std::vector<double>> point = {{0.0}};
    DTape tape;
    auto v = tape.param({1, 1}, point[0].data());
    tape.backward(tape.sum_all(tape.softplus(v)));
    EXPECT_DOUBLE_EQ(v.grad()[0], 0.5);  // sigma(0)
    auto report = ad::finite_difference_check(build, {Shape{1, 1}}, point, 1e-4);
    EXPECT_LT(report.max_rel_err, 1e-6);
}

TEST(GradCheck, EveryRegisteredOp) {
    for (const auto& check : ltm::testing::registered_op_checks()) {
        double worst = ltm::testing::check_op_gradients(check, 10, 0x5eed);
        EXPECT_LT(worst, 1e-4) << "op: " << check.name;
    }
}

TEST(Invariants, SoftmaxRowsSumToOne) {
    FTape tape;
    CounterRng rng(3);
    std::vector<float> x(17 * 9);
    for (auto& v : x) v = 4.0f * rng.next_float() - 2.0f;
    auto s = tape.softmax_cols(tape.input({17, 9}, x.data()));
    for (int i = 0; i < 17; ++i) {
        float sum = 0;
        for (int j = 0; j < 9; ++j) sum += s.value()[i * 9 + j];
        EXPECT_NEAR(sum, 1.0f, 1e-6f);
    }
}

TEST(Invariants, LayerNormMoments) {
    FTape tape;
    CounterRng rng(4);
    std::vector<float> x(13 * 32);
    for (auto& v : x) v = 3.0f * rng.next_gaussian() + 0.5f;
    auto y = tape.layer_norm_rows(tape.input({13, 32}, x.data()));
    for (int i = 0; i < 13; ++i) {
        float mu = 0, var = 0;
        for (int j = 0; j < 32; ++j) mu += y.value()[i * 32 + j];
        mu /= 32;
        for (int j = 0; j < 32; ++j) {
            float d = y.value()[i * 32 + j] - mu;
            var += d * d;
        }
        var /= 32;
        EXPECT_LT(std::abs(mu), 1e-5f);
        EXPECT_NEAR(var, 1.0f, 1e-4f);
    }
}

TEST(Checkpoint, BitExactRoundTrip) {
    ParamStore ps;
    CounterRng rng(9);
    std::vector<float> w(64);
    for (auto& v : w) v = rng.next_gaussian();
    ps.add("enc.blk0.attn.wq.w", {8, 8}, w);
    ps.add("dec.head.b", {1, 3}, {0.1f, -2.5f, 1e-20f});

    std::string path = ::testing::TempDir() + "roundtrip.ltec";
    ps.save(path);
    ParamStore loaded = ParamStore::load(path);
    ASSERT_EQ(loaded.count(), ps.count());
    for (size_t i = 0; i < ps.count(); ++i) {
        const Param& a = ps.at(static_cast<int>(i));
        const Param& b = loaded.at(a.name);
        EXPECT_EQ(a.shape, b.shape);
        ASSERT_EQ(a.value.size(), b.value.size());
        EXPECT_EQ(std::memcmp(a.value.data(), b.value.data(), a.value.size() * sizeof(float)), 0);
    }
    EXPECT_EQ(ps.value_hash(), loaded.value_hash());
    std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsBadMagic) {
    std::string path = ::testing::TempDir() + "bad.ltec";
    {
        std::ofstream f(path, std::ios::binary);
        f << "NOPE";
    }
    EXPECT_THROW(ParamStore::load(path), std::runtime_error);
    std::filesystem::remove(path);
}

TEST(Adam, QuadraticConverges) {
    ParamStore ps;
    ps.add("x", {1, 2}, {5.0f, -3.0f});
    Adam adam;
    for (int step = 0; step < 400; ++step) {
        const Param& p = ps.at("x");
        std::vector<std::vector<float>> grads(1);
        grads[0] = {2.0f * p.value[0], 2.0f * p.value[1]};
        adam.step(ps, grads, 0.05f);
    }
    EXPECT_NEAR(ps.at("x").value[0], 0.0f, 1e-2f);
    EXPECT_NEAR(ps.at("x").value[1], 0.0f, 1e-2f);
}

TEST(Binding, FrozenParamsGetNoGrads) {
    ParamStore ps;
    ps.add("enc.w", {1, 1}, {2.0f});
    ps.add("dec.w", {1, 1}, {3.0f});
    DTape tape;
    ParamBinding<double> bind(tape, ps,
                              [](const std::string& n) { return n.rfind("dec.", 0) == 0; });
    auto prod = tape.mul(bind["enc.w"], bind["dec.w"]);
    tape.backward(tape.sum_all(prod));
    std::vector<std::vector<float>> grads;
    bind.collect_grads(grads);
    EXPECT_TRUE(grads[ps.index("enc.w")].empty());
    ASSERT_FALSE(grads[ps.index("dec.w")].empty());
    EXPECT_FLOAT_EQ(grads[ps.index("dec.w")][0], 2.0f);
}
