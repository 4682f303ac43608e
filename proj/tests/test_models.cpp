#include <doctest.h>

#include <cmath>
#include <random>

#include "eeb/attention.hpp"
#include "eeb/errors.hpp"
#include "eeb/model.hpp"
#include "eeb/training.hpp"
#include "fixtures.hpp"

using namespace eeb;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

}  // namespace

TEST_CASE("family names and aliases") {
  CHECK(parse_family("linreg") == ModelFamily::linreg);
  CHECK(parse_family("lin-reg") == ModelFamily::linreg);
  CHECK(parse_family("resatt") == ModelFamily::resnet_attention);
  CHECK(parse_family("trans") == ModelFamily::transformer);
  CHECK(all_families().size() == 6);
  CHECK_THROWS(parse_family("mlp"));
}

TEST_CASE("default hyperparameters") {
  const auto cnn = ModelSpec::defaults(ModelFamily::cnn);
  CHECK(cnn.window_len == 20);
  CHECK(cnn.batch_size == 8);
  CHECK(cnn.learning_rate == doctest::Approx(5e-4));
  CHECK(cnn.cnn_filters == std::vector<std::size_t>{64, 32, 16});
  const auto lstm = ModelSpec::defaults(ModelFamily::lstm);
  CHECK(lstm.window_len == 20);
  CHECK(lstm.batch_size == 32);
  CHECK(lstm.lstm_hidden1 == 128);
  CHECK(lstm.lstm_hidden2 == 64);
  const auto resnet = ModelSpec::defaults(ModelFamily::resnet);
  CHECK(resnet.window_len == 10);
  CHECK(resnet.learning_rate == doctest::Approx(1e-3));
  const auto att = ModelSpec::defaults(ModelFamily::resnet_attention);
  CHECK(att.batch_size == 8);
  const auto tr = ModelSpec::defaults(ModelFamily::transformer);
  CHECK(tr.window_len == 10);
  CHECK(tr.batch_size == 4);
  CHECK(tr.learning_rate == doctest::Approx(9e-4));
  CHECK(tr.heads == 8);
  CHECK(tr.ffn_hidden == 256);
  CHECK(tr.encoder_layers == 2);
  CHECK(tr.input_kernel == 3);
}

TEST_CASE("forward shapes") {
  SUBCASE("cnn scalar head") {
    auto m = build_model(ModelSpec::defaults(ModelFamily::cnn), 1, 20, 3);
    const auto out = m.forward(make_batch(random_values(5 * 20, 1), 5, 20, 1));
    CHECK(out.output.shape() == ag::Shape{5});
  }
  SUBCASE("transformer per-step head") {
    auto m = build_model(ModelSpec::defaults(ModelFamily::transformer), 2, 10, 3);
    const auto out = m.forward(make_batch(random_values(3 * 10 * 2, 2), 3, 10, 2));
    CHECK(out.per_step.shape() == ag::Shape{3, 10});
    CHECK(out.output.shape() == ag::Shape{3});
    for (std::size_t b = 0; b < 3; ++b) CHECK(out.output.data()[b] == out.per_step.data()[b * 10 + 9]);
  }
  SUBCASE("wrong arity") {
    auto m = build_model(ModelSpec::defaults(ModelFamily::lstm).toy(), 2, 20, 3);
    CHECK_THROWS_AS(m.forward(make_batch(random_values(20 * 3, 2), 1, 20, 3)), ContractError);
  }
}

TEST_CASE("build errors") {
  CHECK_THROWS_AS(build_model(ModelSpec::defaults(ModelFamily::cnn), 1, 4, 0), BuildError);
  auto bad = ModelSpec::defaults(ModelFamily::transformer);
  bad.d_model = 60;
  CHECK_THROWS_AS(build_model(bad, 1, 10, 0), BuildError);
  CHECK_THROWS_AS(positional_encoding(4, 3), BuildError);
}

TEST_CASE("seeded initialisation") {
  for (auto family : all_families()) {
    const auto spec = ModelSpec::defaults(family).toy();
    auto a = build_model(spec, 3, spec.window_len, 42);
    auto b = build_model(spec, 3, spec.window_len, 42);
    auto c = build_model(spec, 3, spec.window_len, 43);
    CHECK(a.checksum() == b.checksum());
    if (family != ModelFamily::linreg) CHECK(a.checksum() != c.checksum());
  }
}

TEST_CASE("evaluation mode is a pure function of each window") {
  for (auto family : all_families()) {
    CAPTURE(family_name(family));
    const auto spec = ModelSpec::defaults(family).toy();
    const std::size_t t = spec.window_len;
    auto m = build_model(spec, 2, t, 9);
    auto one = random_values(t * 2, 4);
    std::vector<double> twice(one);
    twice.insert(twice.end(), one.begin(), one.end());
    const auto out = m.forward(make_batch(twice, 2, t, 2));
    CHECK(out.output.data()[0] == out.output.data()[1]);
  }
}

TEST_CASE("bias-only linear model is constant") {
  auto m = build_model(ModelSpec::defaults(ModelFamily::linreg), 3, 1, 0);
  for (auto& v : m.parameter("linear.weight").mutable_data()) v = 0.0;
  m.parameter("linear.bias").mutable_data()[0] = 2.5;
  const auto out = m.forward(make_batch(random_values(4 * 3, 8), 4, 1, 3));
  for (double v : out.output.data()) CHECK(v == 2.5);
}

TEST_CASE("scaled dot-product attention") {
  RowMatrix eye = RowMatrix::Identity(2, 2);
  const auto r = scaled_dot_product_attention(eye, eye, eye);
  const double a = std::exp(1.0 / std::sqrt(2.0));
  const double w = a / (a + 1.0);
  CHECK(r.output(0, 0) == doctest::Approx(w).epsilon(1e-12));
  CHECK(r.output(0, 1) == doctest::Approx(1.0 - w).epsilon(1e-12));
  CHECK(r.output(1, 1) == doctest::Approx(w).epsilon(1e-12));

  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  RowMatrix q(5, 4);
  RowMatrix k(5, 4);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = normal(rng), k.data()[i] = normal(rng);
  RowMatrix v(5, 3);
  for (Eigen::Index i = 0; i < 5; ++i) v.row(i) << 1.5, -2.0, 0.25;
  const auto c = scaled_dot_product_attention(q, k, v);
  for (Eigen::Index i = 0; i < 5; ++i) {
    CHECK(c.weights.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.output(i, 0) == doctest::Approx(1.5));
    CHECK(c.output(i, 1) == doctest::Approx(-2.0));
  }
}

TEST_CASE("positional encoding closed form") {
  const auto pe = positional_encoding(10, 64);
  CHECK(pe(1, 0) == std::sin(1.0));
  CHECK(pe(0, 1) == 1.0);
  CHECK(pe(3, 5) == std::cos(3.0 / std::pow(10000.0, 4.0 / 64.0)));
}

TEST_CASE("width scaling keeps transformer heads valid") {
  const auto s = ModelSpec::defaults(ModelFamily::transformer).scaled(0.25);
  CHECK(s.d_model % s.heads == 0);
  CHECK(s.d_model % 2 == 0);
  CHECK_NOTHROW(build_model(s, 3, s.window_len, 0));
}

TEST_CASE("spec JSON round trip") {
  for (auto family : all_families()) {
    const auto s = ModelSpec::defaults(family).toy();
    CHECK(ModelSpec::from_json(s.to_json()).to_json() == s.to_json());
  }
  CHECK_THROWS_AS(ModelSpec::from_json(nlohmann::json{{"window_len", 3}}), ConfigError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  fixtures::TempDir dir("ckpt");
  for (auto family : all_families()) {
    const auto spec = ModelSpec::defaults(family).toy();
    auto m = build_model(spec, 3, spec.window_len, 5);
    m.set_output_affine(0.5, 2.0);
    const auto path = (dir.path() / (std::string(family_name(family)) + ".ckpt")).string();
    save_checkpoint(path, m);
    auto loaded = load_checkpoint(path);
    const auto x = make_batch(random_values(2 * spec.window_len * 3, 6), 2, spec.window_len, 3);
    const auto a = m.forward(x).output;
    const auto b = loaded.forward(x).output;
    CHECK(std::vector<double>(a.data().begin(), a.data().end()) ==
          std::vector<double>(b.data().begin(), b.data().end()));
    CHECK(loaded.checksum() == m.checksum());
  }
}

TEST_CASE("gradient check at toy width") {
  for (auto family : {ModelFamily::linreg, ModelFamily::cnn, ModelFamily::lstm}) {
    CAPTURE(family_name(family));
    const auto spec = ModelSpec::defaults(family).toy();
    auto m = build_model(spec, 2, spec.window_len, 1);
    const auto x = make_batch(random_values(3 * spec.window_len * 2, 3), 3, spec.window_len, 2);
    const auto y = random_values(3, 4);
    GradcheckOptions o;
    o.samples_per_tensor = 8;
    const auto r = finite_difference_gradcheck(m, x, y, o);
    CHECK(r.checked > 0);
    CHECK(r.max_relative_error < (family == ModelFamily::linreg ? 1e-8 : 1e-3));
  }
}
