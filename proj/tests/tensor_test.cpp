#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>

#include "signav/error.hpp"
#include "signav/rng.hpp"
#include "signav/tensor.hpp"

using namespace signav;
namespace fs = std::filesystem;

namespace {

Param rand_param(const std::string& name, std::vector<int> shape, uint64_t seed, double lo = -1.0,
                 double hi = 1.0) {
    Param p(name, Tensor::zeros(std::move(shape)));
    Rng rng(seed);
    for (double& v : p.value.data) v = rng.uniform(lo, hi);
    return p;
}

// Reduce an arbitrary tensor to a scalar with fixed distinct weights so that
// backward mistakes cannot cancel the way they would under a plain sum.
Var scalarize(Tape& t, Var y) {
    int n = t.val(y).numel();
    Tensor w = Tensor::zeros({n, 1});
    for (int i = 0; i < n; ++i) w.data[i] = 0.25 + std::sin(0.7 * i + 0.3);
    Var prod = t.matmul(t.reshape(y, {1, n}), t.input(std::move(w)));
    return t.reshape(prod, {1});
}

using Build = std::function<Var(Tape&, const std::vector<Var>&)>;

// Max relative error between analytic and central-difference gradients.
double run_check(std::vector<Param*> ps, const Build& build) {
    auto forward = [&](bool bw) {
        Tape t;
        std::vector<Var> vs;
        vs.reserve(ps.size());
        for (Param* p : ps) vs.push_back(t.param(*p));
        Var root = build(t, vs);
        double v = t.val(root).data[0];
        if (bw) t.backward(root);
        return v;
    };
    auto loss = [&] { return forward(false); };
    auto grads = [&] {
        for (Param* p : ps) p->zero_grad();
        forward(true);
    };
    return grad_check(loss, grads, ps);
}

constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("grad: add, scale, param leaves") {
    Param a = rand_param("a", {3, 4}, 1);
    Param b = rand_param("b", {3, 4}, 2);
    CHECK(run_check({&a, &b}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.scale(t.add(v[0], v[1]), 1.7));
          }) <= kTol);
}

TEST_CASE("grad: inputs carry no gradient") {
    Param a = rand_param("a", {2, 3}, 3);
    CHECK(run_check({&a}, [](Tape& t, const std::vector<Var>& v) {
              Tensor c = Tensor::full({2, 3}, 0.5);
              return scalarize(t, t.add(v[0], t.input(std::move(c))));
          }) <= kTol);

    // a pure-input graph never allocates gradients and backward stays legal
    Tape t;
    Var x = t.input(Tensor::full({1}, 2.0));
    Var y = t.scale(x, 3.0);
    t.backward(y);
    CHECK(t.val(y).data[0] == 6.0);
}

TEST_CASE("grad: matmul and transpose") {
    Param a = rand_param("a", {3, 4}, 4);
    Param b = rand_param("b", {4, 5}, 5);
    CHECK(run_check({&a, &b}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.matmul(v[0], v[1]));
          }) <= kTol);
    CHECK(run_check({&a}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.transpose(v[0]));
          }) <= kTol);
    CHECK(run_check({&a, &b}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.matmul(t.transpose(t.matmul(v[0], v[1])), v[0]));
          }) <= kTol);

    Tape t;
    Param bad = rand_param("bad", {2, 3}, 6);  // inner dims 3 vs 2 don't tile
    CHECK_THROWS_AS(t.matmul(t.param(bad), t.param(bad)), std::exception);
    Tape t2;
    Var ok = t2.param(bad);
    CHECK_THROWS_AS(t2.add(ok, t2.input(Tensor::zeros({3, 2}))), ValidationError);
}

TEST_CASE("grad: linear with and without bias") {
    Param x = rand_param("x", {4, 3}, 7);
    Param w = rand_param("w", {3, 5}, 8);
    Param b = rand_param("b", {5}, 9);
    CHECK(run_check({&x, &w, &b}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.linear(v[0], v[1], v[2]));
          }) <= kTol);
    CHECK(run_check({&x, &w}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.linear(v[0], v[1]));
          }) <= kTol);

    Tape t;
    Tensor shape_probe = t.val(t.linear(t.param(x), t.param(w), t.param(b)));
    CHECK(shape_probe.shape == std::vector<int>{4, 5});
}

TEST_CASE("grad: add_rowvec") {
    Param x = rand_param("x", {3, 4}, 10);
    Param b = rand_param("b", {4}, 11);
    CHECK(run_check({&x, &b}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.add_rowvec(v[0], v[1]));
          }) <= kTol);
}

TEST_CASE("grad: layer_norm") {
    Param x = rand_param("x", {3, 5}, 12, -2.0, 2.0);
    Param g = rand_param("g", {5}, 13, 0.5, 1.5);
    Param b = rand_param("b", {5}, 14);
    CHECK(run_check({&x, &g, &b}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.layer_norm(v[0], v[1], v[2]));
          }) <= kTol);

    // rows come out standardized when gamma=1, beta=0
    Tape t;
    Param ones("ones", Tensor::full({5}, 1.0));
    Param zeros("zeros", Tensor::zeros({5}));
    Tensor out = t.val(t.layer_norm(t.param(x), t.param(ones), t.param(zeros)));
    for (int r = 0; r < 3; ++r) {
        double mean = 0, var = 0;
        for (int c = 0; c < 5; ++c) mean += out.data[r * 5 + c];
        mean /= 5;
        for (int c = 0; c < 5; ++c) {
            double d = out.data[r * 5 + c] - mean;
            var += d * d;
        }
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var / 5 == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("grad: softmax") {
    Param x = rand_param("x", {3, 4}, 15, -3.0, 3.0);
    CHECK(run_check({&x}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.softmax(v[0]));
          }) <= kTol);

    // rows sum to one, and a large shift does not overflow
    Tape t;
    Param shifted("s", Tensor({1, 3}, {1000.0, 1001.0, 1002.0}));
    Tensor out = t.val(t.softmax(t.param(shifted)));
    double s = out.data[0] + out.data[1] + out.data[2];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::isfinite(out.data[2]));
}

TEST_CASE("grad: gelu") {
    Param x = rand_param("x", {2, 5}, 16, -3.0, 3.0);
    CHECK(run_check({&x}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.gelu(v[0]));
          }) <= kTol);

    // exact erf form: gelu(0) = 0, gelu(x) -> x for large x
    Tape t;
    Param probe("p", Tensor({1, 3}, {0.0, 10.0, -10.0}));
    Tensor out = t.val(t.gelu(t.param(probe)));
    CHECK(out.data[0] == 0.0);
    CHECK(out.data[1] == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(out.data[2] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("grad: conv2d 3x3 stride 2 pad 1") {
    Param x = rand_param("x", {2, 5, 6}, 17);
    Param k = rand_param("k", {3, 2, 3, 3}, 18);
    Param b = rand_param("b", {3}, 19);
    k.value.data[4] = 0.0;  // exercise the zero-weight fast path

    CHECK(run_check({&x, &k, &b}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.conv2d(v[0], v[1], v[2]));
          }) <= kTol);
    CHECK(run_check({&x, &k}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.conv2d(v[0], v[1]));
          }) <= kTol);

    Tape t;
    Tensor out = t.val(t.conv2d(t.param(x), t.param(k), t.param(b)));
    CHECK(out.shape == std::vector<int>{3, 3, 3});

    // identity kernel on a single channel reproduces the even-grid samples
    Tape t2;
    Param img("img", Tensor::zeros({1, 4, 4}));
    for (int i = 0; i < 16; ++i) img.value.data[i] = i;
    Param ident("ident", Tensor::zeros({1, 1, 3, 3}));
    ident.value.data[4] = 1.0;  // center tap
    Tensor picked = t2.val(t2.conv2d(t2.param(img), t2.param(ident)));
    CHECK(picked.shape == std::vector<int>{1, 2, 2});
    CHECK(picked.data[0] == 0.0);
    CHECK(picked.data[1] == 2.0);
    CHECK(picked.data[2] == 8.0);
    CHECK(picked.data[3] == 10.0);

    Tape t3;
    CHECK_THROWS_AS(t3.conv2d(t3.input(Tensor::zeros({2, 4, 4})),
                              t3.input(Tensor::zeros({3, 1, 3, 3}))),
                    ValidationError);
}

TEST_CASE("grad: reshape, stack_rows, concat, slices, gather, mean, pick, log, sum") {
    Param x = rand_param("x", {3, 4}, 20);
    Param y = rand_param("y", {2, 4}, 21);
    Param z = rand_param("z", {3, 2}, 22);
    Param v1 = rand_param("v1", {4}, 23);
    Param v2 = rand_param("v2", {4}, 24);

    CHECK(run_check({&x}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.reshape(v[0], {2, 6}));
          }) <= kTol);
    CHECK(run_check({&v1, &v2}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.stack_rows({v[0], v[1], v[0]}));
          }) <= kTol);
    CHECK(run_check({&x, &y}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.concat_rows({v[0], v[1]}));
          }) <= kTol);
    CHECK(run_check({&x, &z}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.concat_cols({v[0], v[1]}));
          }) <= kTol);
    CHECK(run_check({&x}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.select_row(v[0], 1));
          }) <= kTol);
    CHECK(run_check({&x}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.slice_rows(v[0], 1, 3));
          }) <= kTol);
    CHECK(run_check({&x}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.slice_cols(v[0], 1, 4));
          }) <= kTol);
    CHECK(run_check({&x}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.gather_rows(v[0], {2, 0, 2, 1}));
          }) <= kTol);
    CHECK(run_check({&x}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.mean_rows(v[0]));
          }) <= kTol);
    CHECK(run_check({&v1}, [](Tape& t, const std::vector<Var>& v) {
              return t.pick(v[0], 2);
          }) <= kTol);
    Param pos = rand_param("pos", {2, 3}, 25, 0.5, 2.0);
    CHECK(run_check({&pos}, [](Tape& t, const std::vector<Var>& v) {
              return scalarize(t, t.log_floored(v[0]));
          }) <= kTol);
    CHECK(run_check({&x}, [](Tape& t, const std::vector<Var>& v) {
              return t.sum(v[0]);
          }) <= kTol);
}

TEST_CASE("gather_rows accumulates duplicate rows") {
    Param x("x", Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
    Tape t;
    Var g = t.gather_rows(t.param(x), {2, 2});
    t.backward(t.sum(g));
    CHECK(x.grad.data == std::vector<double>{0, 0, 0, 0, 2, 2});
}

TEST_CASE("pick routes the gradient to one coordinate") {
    Param x("x", Tensor({4}, {1, 2, 3, 4}));
    Tape t;
    t.backward(t.pick(t.param(x), 2));
    CHECK(x.grad.data == std::vector<double>{0, 0, 1, 0});
    Tape t2;
    CHECK_THROWS_AS(t2.pick(t2.param(x), 4), ValidationError);
}

TEST_CASE("log_floored counts clamps and zeroes their gradient") {
    Param x("x", Tensor({3}, {1.0, 1e-15, 2.0}));
    Tape t;
    CHECK(t.floor_hits() == 0);
    Var y = t.log_floored(t.param(x));
    CHECK(t.floor_hits() == 1);
    const Tensor& v = t.val(y);
    CHECK(v.data[0] == doctest::Approx(0.0));
    CHECK(v.data[1] == doctest::Approx(std::log(1e-12)).epsilon(1e-12));
    CHECK(v.data[2] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    t.backward(t.sum(y));
    CHECK(x.grad.data[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(x.grad.data[1] == 0.0);  // clamped entry: flat
    CHECK(x.grad.data[2] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar root") {
    Param x = rand_param("x", {2, 3}, 26);
    Tape t;
    Var y = t.scale(t.param(x), 2.0);
    CHECK_THROWS_AS(t.backward(y), UsageError);
}

TEST_CASE("grad: end-to-end composite graph") {
    // a small transformer-flavored pipeline through most ops at once
    Param x = rand_param("x", {4, 6}, 27);
    Param w1 = rand_param("w1", {6, 6}, 28);
    Param b1 = rand_param("b1", {6}, 29);
    Param g = rand_param("g", {6}, 30, 0.5, 1.5);
    Param be = rand_param("be", {6}, 31);
    Param w2 = rand_param("w2", {6, 4}, 32);
    std::vector<Param*> ps{&x, &w1, &b1, &g, &be, &w2};
    CHECK(run_check(ps, [](Tape& t, const std::vector<Var>& v) {
              Var h = t.layer_norm(t.linear(v[0], v[1], v[2]), v[3], v[4]);
              Var att = t.softmax(t.matmul(h, t.transpose(h)));
              Var mix = t.gelu(t.matmul(att, h));
              Var out = t.softmax(t.linear(mix, v[5]));
              Var lp = t.log_floored(t.select_row(out, 0));
              return t.scale(t.pick(lp, 1), -1.0);
          }) <= kTol);
}

TEST_CASE("checkpoint round trip is byte-exact") {
    fs::path dir = fs::temp_directory_path() / "signav-tensor-test";
    fs::create_directories(dir);
    fs::path file = dir / "rt.ckpt";

    Param a = rand_param("enc.w", {2, 3}, 33);
    Param b = rand_param("head.b", {4}, 34);
    a.value.data[0] = 0.0;
    a.value.data[1] = -0.0;
    save_checkpoint(file.string(), {&a, &b}, 0xdeadbeefcafe1234ull, "{\"dim\":64}");

    Checkpoint ck = load_checkpoint(file.string());
    CHECK(ck.config_hash == 0xdeadbeefcafe1234ull);
    CHECK(ck.config_blob == "{\"dim\":64}");
    REQUIRE(ck.tensors.size() == 2);
    CHECK(ck.tensors[0].first == "enc.w");
    CHECK(ck.tensors[1].first == "head.b");
    CHECK(ck.tensors[0].second.shape == a.value.shape);
    for (size_t i = 0; i < a.value.data.size(); ++i) {
        uint64_t want, got;
        std::memcpy(&want, &a.value.data[i], 8);
        std::memcpy(&got, &ck.tensors[0].second.data[i], 8);
        CHECK(want == got);  // bit pattern, including -0.0
    }

    // re-saving the loaded tensors reproduces the file byte for byte
    fs::path file2 = dir / "rt2.ckpt";
    Param a2("enc.w", ck.tensors[0].second);
    Param b2("head.b", ck.tensors[1].second);
    save_checkpoint(file2.string(), {&a2, &b2}, ck.config_hash, ck.config_blob);
    std::ifstream f1(file, std::ios::binary), f2(file2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(s1.substr(0, 8) == "SNCKPT01");

    SUBCASE("bad magic rejected") {
        std::string corrupt = s1;
        corrupt[0] = 'X';
        fs::path bad = dir / "bad.ckpt";
        std::ofstream(bad, std::ios::binary) << corrupt;
        CHECK_THROWS_WITH_AS(load_checkpoint(bad.string()), doctest::Contains("magic"),
                             ValidationError);
    }
    SUBCASE("truncation rejected") {
        fs::path trunc = dir / "trunc.ckpt";
        std::ofstream(trunc, std::ios::binary) << s1.substr(0, s1.size() / 2);
        CHECK_THROWS_AS(load_checkpoint(trunc.string()), ValidationError);
    }
    SUBCASE("missing file rejected") {
        CHECK_THROWS_AS(load_checkpoint((dir / "nope.ckpt").string()), ValidationError);
    }
    fs::remove_all(dir);
}

TEST_CASE("rng: pinned sequences and bounded mappings") {
    Rng a(5), b(5);
    for (int i = 0; i < 16; ++i) CHECK(a.u64() == b.u64());

    Rng r(77);
    std::set<uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        uint64_t k = r.below(7);
        CHECK(k < 7);
        seen.insert(k);
        int m = r.range(2, 4);
        CHECK(m >= 2);
        CHECK(m <= 4);
        double x = r.uniform(-3.0, -1.0);
        CHECK(x >= -3.0);
        CHECK(x < -1.0);
    }
    CHECK(seen.size() == 7);
    CHECK_THROWS_AS(r.below(0), InternalError);

    // shuffle: deterministic permutation of the same multiset
    std::vector<int> v1{1, 2, 3, 4, 5, 6, 7, 8}, v2 = v1, sorted = v1;
    Rng s1(9), s2(9);
    s1.shuffle(v1);
    s2.shuffle(v2);
    CHECK(v1 == v2);
    std::sort(v2.begin(), v2.end());
    CHECK(v2 == sorted);
}

TEST_CASE("rng: categorical") {
    Rng r(123);
    for (int i = 0; i < 100; ++i) CHECK(r.categorical({0.0, 0.0, 5.0}) == 2);

    int ones = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i)
        if (r.categorical({1.0, 3.0}) == 1) ++ones;
    CHECK(static_cast<double>(ones) / n == doctest::Approx(0.75).epsilon(0.03));

    CHECK_THROWS_AS(r.categorical({0.0, 0.0}), InternalError);
}

TEST_CASE("init_uniform_xavier bounds and determinism") {
    Param p("p", Tensor::zeros({40}));
    init_uniform_xavier(p, 10, 20, 42);
    double bound = std::sqrt(6.0 / 30.0);
    double lo = 1e9, hi = -1e9;
    for (double v : p.value.data) {
        CHECK(v >= -bound);
        CHECK(v < bound);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo < 0.0);  // actually spreads over the range
    CHECK(hi > 0.0);

    Param q("q", Tensor::zeros({40}));
    init_uniform_xavier(q, 10, 20, 42);
    CHECK(q.value.data == p.value.data);
    init_uniform_xavier(q, 10, 20, 43);
    CHECK(q.value.data != p.value.data);

    init_ones(q);
    for (double v : q.value.data) CHECK(v == 1.0);
    init_zeros(q);
    for (double v : q.value.data) CHECK(v == 0.0);
}
