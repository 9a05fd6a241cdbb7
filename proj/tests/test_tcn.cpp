#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "support.hpp"
#include "wavemat/error.hpp"
#include "wavemat/tcn.hpp"

using namespace wavemat;
using wavemat::test::finite_difference_check;
using wavemat::test::random_batch;

namespace {

TcnParams tiny_params() {
  TcnParams p;
  p.channel_sizes = {4, 4};
  p.dropout = 0.2;
  p.seed = 1;
  return p;
}

Dataset toy_dataset(std::size_t per_class) {
  std::vector<LabeledSample> samples;
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 0.05);
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const ClassId y = static_cast<ClassId>(i % 2);
    std::vector<double> w(kWaveformLength);
    for (std::size_t t = 0; t < kWaveformLength; ++t) w[t] = u(gen) + (y == 1 && t >= 30 ? 0.5 : 0.0);
    LabeledSample s;
    s.sample_id = i;
    s.waveform = Waveform(w);
    s.meta.repetition = 1 + static_cast<int>(i / 2) % 5;
    s.label = y;
    samples.push_back(std::move(s));
  }
  return Dataset(std::move(samples), wavemat::test::class_table(2), 0);
}

}  // namespace

TEST_CASE("initialisation is seeded and shaped by the channel list") {
  const TcnParams p;
  const TcnModel a = init_tcn(p, 4, 11);
  CHECK(a == init_tcn(p, 4, 11));
  CHECK_FALSE(a == init_tcn(p, 4, 12));
  CHECK(a.blocks.size() == 8);
  CHECK(a.head_weight.rows() == 4);
  CHECK(a.head_weight.cols() == 128);
  CHECK(a.head_bias.size() == 4);
  int in = 1;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    const auto& b = a.blocks[i];
    CHECK(b.conv1.in_channels == in);
    CHECK(b.conv1.out_channels == p.channel_sizes[i]);
    CHECK(b.has_residual());
    CHECK(b.downsample.has_value() == (in != p.channel_sizes[i]));
    if (b.downsample) CHECK(b.downsample->kernel_size == 1);
    in = p.channel_sizes[i];
  }
  const double bound = 1.0 / std::sqrt(32.0);
  CHECK(a.blocks[1].conv1.taps.front().cwiseAbs().maxCoeff() <= bound);
  CHECK_THROWS_AS(init_tcn(p, 1, 0), UsageError);
}

TEST_CASE("layer layout has one convolution per entry and no residual") {
  TcnParams p;
  p.layout = TcnLayout::Layers;
  const TcnModel m = init_tcn(p, 3, 1);
  CHECK(m.blocks.size() == 8);
  for (const auto& b : m.blocks) {
    CHECK_FALSE(b.has_residual());
    CHECK_FALSE(b.downsample.has_value());
  }
  CHECK(m.parameter_count() < init_tcn(TcnParams{}, 3, 1).parameter_count());
}

TEST_CASE("a zero head gives uniform probabilities and predicts class 0") {
  std::mt19937_64 gen(1);
  TcnModel m = init_tcn(TcnParams{}, 4, 2);
  m.head_weight.setZero();
  m.head_bias.setZero();
  const auto xs = random_batch(gen, 3, 256);
  const auto probs = forward(m, xs, false);
  CHECK((probs.array() - 0.25).abs().maxCoeff() < 1e-15);
  CHECK(predict_tcn_id(m, xs[0]) == 0);
  const std::vector<ClassId> ys = {0, 1, 3};
  CHECK(batch_loss(m, xs, ys, false, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("a confident correct head drives the loss to zero") {
  std::mt19937_64 gen(2);
  TcnModel m = init_tcn(tiny_params(), 3, 2);
  m.head_weight.setZero();
  m.head_bias << -40.0, 40.0, -40.0;
  const auto xs = random_batch(gen, 4, 8);
  const std::vector<ClassId> ys(4, 1);
  CHECK(batch_loss(m, xs, ys, false, 0) < 1e-30);
}

TEST_CASE("probabilities are a distribution for random weights and inputs") {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    TcnParams p = tiny_params();
    p.channel_sizes = {3, 5, 5};
    p.kernel_size = 1 + trial % 3;
    p.readout = trial % 2 ? Readout::Last : Readout::Mean;
    const TcnModel m = init_tcn(p, 2 + trial % 4, gen());
    const auto xs = random_batch(gen, 1 + gen() % 5, 16);
    const auto probs = forward(m, xs, trial % 3 == 0, gen());
    for (Eigen::Index b = 0; b < probs.cols(); ++b) {
      CHECK(std::abs(probs.col(b).sum() - 1.0) < 1e-9);
      CHECK(probs.col(b).minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("eval mode is deterministic and free of dropout") {
  std::mt19937_64 gen(4);
  TcnParams p = tiny_params();
  p.dropout = 0.5;
  const TcnModel m = init_tcn(p, 3, 9);
  const auto xs = random_batch(gen, 4, 8);
  CHECK(forward(m, xs, false, 1) == forward(m, xs, false, 2));
  CHECK(forward(m, xs, true, 1) == forward(m, xs, true, 1));
  CHECK_FALSE(forward(m, xs, true, 1) == forward(m, xs, true, 2));
  TcnModel no_drop = m;
  no_drop.params.dropout = 0.0;
  CHECK(forward(no_drop, xs, true, 1) == forward(m, xs, false, 0));
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 gen(5);
  const std::vector<ClassId> ys = {0, 1, 2, 1};
  SUBCASE("two blocks of four channels, mean readout") {
    const auto xs = random_batch(gen, 4, 8);
    const auto r = finite_difference_check(init_tcn(tiny_params(), 3, 21), xs, ys, 77);
    CHECK(r.checked == 91);
    CHECK(r.worst_relative < 1e-4);
  }
  SUBCASE("last-step readout") {
    TcnParams p = tiny_params();
    p.readout = Readout::Last;
    p.kernel_size = 2;
    const auto xs = random_batch(gen, 4, 8);
    CHECK(finite_difference_check(init_tcn(p, 3, 22), xs, ys, 78).worst_relative < 1e-4);
  }
  SUBCASE("dilated kernel of width three with a projection between blocks") {
    TcnParams p = tiny_params();
    p.kernel_size = 3;
    p.channel_sizes = {3, 5};
    const auto xs = random_batch(gen, 4, 8);
    CHECK(finite_difference_check(init_tcn(p, 3, 23), xs, ys, 79).worst_relative < 1e-4);
  }
  SUBCASE("layer layout") {
    TcnParams p = tiny_params();
    p.layout = TcnLayout::Layers;
    p.kernel_size = 2;
    const auto xs = random_batch(gen, 4, 8);
    CHECK(finite_difference_check(init_tcn(p, 3, 24), xs, ys, 80).worst_relative < 1e-4);
  }
}

TEST_CASE("one Adam step moves each weight by about the learning rate") {
  TcnParams p = tiny_params();
  TcnModel m = init_tcn(p, 3, 1);
  const TcnModel before = m;
  TcnModel g = zeros_like(m);
  for (auto t : g.tensors()) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (i % 2 ? 1.0 : -2.0) * 1e-3;
  }
  AdamState adam(m);
  adam.apply(m, g);
  CHECK(adam.step == 1);
  const auto now = m.tensors();
  const auto was = before.tensors();
  const auto gs = g.tensors();
  for (std::size_t t = 0; t < now.size(); ++t) {
    for (std::size_t i = 0; i < now[t].size(); ++i) {
      // Bias-corrected first step: m_hat = g, v_hat = g^2.
      const double expected = was[t][i] - p.learning_rate * gs[t][i] / (std::abs(gs[t][i]) + p.adam_eps);
      CHECK(now[t][i] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("training separates a toy problem and is reproducible") {
  const Dataset data = toy_dataset(12);
  TcnParams p;
  p.channel_sizes = {8, 8};
  p.iterations = 150;
  p.batch_size = 8;
  p.seed = 42;
  std::vector<double> losses;
  const TcnModel m = train_tcn(data, p, [&](int it, double loss) {
    CHECK(it == static_cast<int>(losses.size()) + 1);
    losses.push_back(loss);
  });
  CHECK(losses.size() == 150);

  std::vector<Sequence> xs;
  std::vector<ClassId> ys;
  for (const auto& s : data.samples()) {
    xs.push_back(to_sequence(s.waveform));
    ys.push_back(s.label);
  }
  CHECK(predict_tcn_batch(m, xs) == ys);
  TcnParams one = p;
  one.iterations = 1;
  CHECK(batch_loss(m, xs, ys, false, 0) < 0.75 * batch_loss(train_tcn(data, one), xs, ys, false, 0));
  CHECK(m == train_tcn(data, p));
  CHECK(m.classes == data.classes());
}

TEST_CASE("predictions do not depend on batch composition") {
  std::mt19937_64 gen(6);
  const TcnModel m = init_tcn(TcnParams{.channel_sizes = {6, 6, 12}}, 5, 3);
  const auto xs = random_batch(gen, 70, 256);
  const auto batched = predict_tcn_batch(m, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(batched[i] == predict_tcn_id(m, xs[i]));
  const auto probs = forward(m, xs, false);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Eigen::Index best = 0;
    probs.col(static_cast<Eigen::Index>(i)).maxCoeff(&best);
    CHECK(batched[i] == static_cast<ClassId>(best));
  }
}

TEST_CASE("training rejects degenerate data") {
  TcnParams p = tiny_params();
  p.iterations = 1;
  CHECK_THROWS_AS(train_tcn(Dataset({}, wavemat::test::class_table(2), 0), p), DataError);
  const Dataset toy = toy_dataset(3);
  std::vector<LabeledSample> ones;
  for (const auto& s : toy.samples()) {
    if (s.label == 1) ones.push_back(s);
  }
  CHECK_THROWS_AS(train_tcn(Dataset(ones, wavemat::test::class_table(2), 0), p), DataError);
  TcnParams bad = p;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = p;
  bad.channel_sizes.clear();
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("checkpoints round-trip exactly") {
  TcnParams p = tiny_params();
  p.kernel_size = 2;
  p.readout = Readout::Last;
  TcnModel m = init_tcn(p, 3, 5);
  m.input_scale = 2.5;
  m.classes = {{0, "aluminum"}, {1, "wood"}, {2, "black_cloth"}};
  std::stringstream text;
  write_tcn(m, text);
  CHECK(read_tcn(text) == m);

  wavemat::test::TempDir dir("tcn");
  save_tcn(m, dir / "m.tcn");
  CHECK(load_tcn(dir / "m.tcn") == m);
  const std::string body = wavemat::test::slurp(dir / "m.tcn");
  std::stringstream cut(body.substr(0, body.size() - 20));
  CHECK_THROWS_AS(read_tcn(cut), DataError);
  std::stringstream wrong("wavemat-forest 1\n");
  CHECK_THROWS_AS(read_tcn(wrong), DataError);
}
