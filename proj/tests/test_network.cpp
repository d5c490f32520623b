#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "core/error.hpp"
#include "core/network.hpp"

using namespace esi;
using dae::DstDae;
using nn::Tensor4;

namespace {

struct TinyProblem {
  mesh::CorticalMesh m;
  forward::LeadField lead;
  synth::TemporalBasis tbf;
};

TinyProblem tiny_problem() {
  TinyProblem p;
  p.m = mesh::make_sphere_mesh(mesh::SphereBase::Tetrahedron, 1, 8.0);  // 16 elements
  p.lead = forward::synth_leadfield(p.m, mesh::fibonacci_electrodes(8, 10.0));
  p.tbf = synth::make_default_tbf(40, 1.0);
  return p;
}

template <typename T>
DstDae<T> tiny_net(const TinyProblem& p, std::uint64_t seed = 1) {
  Rng rng(seed);
  return DstDae<T>::build(8, 16, 40, 4, 4, 5, 8, p.lead, rng);
}

template <typename T>
Tensor4<T> random_tensor(int b, int h, int w, int c, Rng& rng, double scale = 1.0) {
  Tensor4<T> t(b, h, w, c);
  for (auto& v : t.v) v = T(scale * rng.normal());
  return t;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("architecture: temporal stacks and spatial decoder chain") {
  const dae::Architecture a = dae::derive_architecture(32, 512, 40, 16, 16, 5, 64);
  CHECK(a.encoder_widths == std::vector<int>{40, 20, 10, 5});
  CHECK(a.decoder_widths == std::vector<int>{5, 10, 20, 40});
  CHECK(a.spatial_heights == std::vector<int>{1, 10, 28, 64, 136, 280, 568});
  CHECK(a.crop_low + a.crop_high == 568 - 512);
  CHECK(a.crop_low == 28);
}

TEST_CASE("architecture rejects unreachable shapes") {
  try {
    dae::derive_architecture(32, 512, 41, 16, 16, 5, 64);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ArchitectureError);
  }
}

TEST_CASE("network forward produces the chained shapes") {
  const TinyProblem p = tiny_problem();
  DstDae<float> net = tiny_net<float>(p);
  CHECK(net.arch().spatial_heights == std::vector<int>{1, 10, 28});

  Rng rng(2);
  const Tensor4<float> x = random_tensor<float>(3, 8, 40, 1, rng);
  dae::Workspace<float> ws;
  net.forward(x, true, ws);
  CHECK(ws.s_re().h == 16);
  CHECK(ws.s_re().w == 40);
  CHECK(ws.s_re().c == 1);
  CHECK(ws.x_re.h == 8);
  CHECK(ws.x_re.w == 40);
}

TEST_CASE("loss values match the worked examples") {
  SUBCASE("batch of 1, all-ones 2x3 scalp residual, lambda1 = 1") {
    Tensor4<double> xg(1, 2, 3, 1), xre(1, 2, 3, 1), sg(1, 2, 2, 1), sre(1, 2, 2, 1);
    for (auto& v : xre.v) v = 1.0;
    const dae::LossValues lv = dae::data_loss(xg, xre, sg, sre, 1.0, 0.0, 0.1);
    CHECK(lv.loss_x == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(lv.total == doctest::Approx(6.0).epsilon(1e-12));
  }
  SUBCASE("delta = 0.1, all-ones 2x2 source residual, lambda2 = 1") {
    Tensor4<double> xg(1, 2, 3, 1), xre(1, 2, 3, 1), sg(1, 2, 2, 1), sre(1, 2, 2, 1);
    for (auto& v : sre.v) v = 1.0;
    const dae::LossValues lv = dae::data_loss(xg, xre, sg, sre, 0.0, 1.0, 0.1);
    CHECK(lv.loss_s == doctest::Approx(4.4).epsilon(1e-12));
    CHECK(lv.total == doctest::Approx(4.4).epsilon(1e-12));
  }
  SUBCASE("perfect reconstruction leaves only the weight decay") {
    Tensor4<double> xg(2, 2, 3, 1), sg(2, 2, 2, 1);
    const dae::LossValues lv = dae::data_loss(xg, xg, sg, sg, 10.0, 150.0, 0.1, 0.125);
    CHECK(lv.total == doctest::Approx(0.125).epsilon(1e-12));
  }
}

TEST_CASE("learning-rate schedule ramps and plateau") {
  dae::TrainConfig cfg;
  cfg.epochs = 100;
  cfg.warmup_epochs = 20;
  cfg.cooldown_epochs = 20;
  cfg.lr_max = 1e-3;
  cfg.lr_min = 1e-4;
  CHECK(dae::lr_schedule(0, cfg) == doctest::Approx(cfg.lr_min).epsilon(1e-12));
  CHECK(dae::lr_schedule(20, cfg) == doctest::Approx(cfg.lr_max).epsilon(1e-12));
  CHECK(dae::lr_schedule(50, cfg) == doctest::Approx(cfg.lr_max).epsilon(1e-12));
  CHECK(dae::lr_schedule(99, cfg) == doctest::Approx(cfg.lr_min).epsilon(1e-12));
  CHECK(dae::lr_schedule(89, cfg) == doctest::Approx(0.5 * (cfg.lr_max + cfg.lr_min)).epsilon(1e-12));
}

TEST_CASE("end-to-end gradients match finite differences on sampled parameters") {
  const TinyProblem p = tiny_problem();
  DstDae<double> net = tiny_net<double>(p, 3);
  Rng rng(4);
  const Tensor4<double> xn = random_tensor<double>(2, 8, 40, 1, rng);
  const Tensor4<double> xg = random_tensor<double>(2, 8, 40, 1, rng);
  Tensor4<double> sg = random_tensor<double>(2, 16, 40, 1, rng);
  for (auto& v : sg.v) v += 3.0;  // keep |.|_1 residuals away from the kink

  const double l1 = 10.0, l2 = 150.0, delta = 0.1;
  auto loss = [&] {
    dae::Workspace<double> ws;
    net.forward(xn, true, ws);
    return dae::data_loss(xg, ws.x_re, sg, ws.s_re(), l1, l2, delta).total;
  };

  dae::Workspace<double> ws;
  net.forward(xn, true, ws);
  Tensor4<double> d_xre, d_sre;
  dae::data_loss_grads(xg, ws.x_re, sg, ws.s_re(), l1, l2, delta, d_xre, d_sre);
  net.zero_grads();
  net.backward(ws, d_sre, d_xre);

  auto views = net.param_views();
  // Floor the relative error at 1e-6 of the largest gradient so parameters
  // whose true gradient is zero (biases ahead of BN) compare against the
  // problem scale instead of round-off noise.
  double grad_scale = 0.0;
  for (auto& view : views)
    for (double g : *view.grad) grad_scale = std::max(grad_scale, std::abs(g));
  const double floor = 1e-6 * grad_scale;

  Rng pick(5);
  int checked = 0;
  double worst = 0.0;
  while (checked < 20) {
    auto& view = views[std::size_t(pick.uniform_index(views.size()))];
    if (view.value->empty()) continue;
    const std::size_t idx = std::size_t(pick.uniform_index(view.value->size()));
    const double analytic = (*view.grad)[idx];
    const double h = 1e-5;
    const double keep = (*view.value)[idx];
    (*view.value)[idx] = keep + h;
    const double up = loss();
    (*view.value)[idx] = keep - h;
    const double down = loss();
    (*view.value)[idx] = keep;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(analytic - numeric) /
                                std::max({std::abs(analytic), std::abs(numeric), floor}));
    ++checked;
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("the fixed forward block never changes during training") {
  const TinyProblem p = tiny_problem();
  DstDae<float> net = tiny_net<float>(p, 6);
  const nn::RowMat<float> before = net.lead_matrix();

  synth::SynthesisConfig scfg;
  scfg.sample_count = 64;
  scfg.a_max_cm2 = 20.0;
  scfg.master_seed = 7;
  synth::generate_dataset(p.m, p.lead, p.tbf, scfg, "tiny_fixed.esid");
  const synth::Dataset data = synth::load_dataset("tiny_fixed.esid");
  std::remove("tiny_fixed.esid");

  dae::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.warmup_epochs = 1;
  cfg.cooldown_epochs = 1;
  cfg.batch_size = 16;
  cfg.lr_max = 1e-3;
  cfg.lr_min = 1e-4;
  dae::train(net, data, cfg);

  const nn::RowMat<float>& after = net.lead_matrix();
  REQUIRE(after.rows() == before.rows());
  for (Eigen::Index r = 0; r < before.rows(); ++r)
    for (Eigen::Index c = 0; c < before.cols(); ++c) CHECK(after(r, c) == before(r, c));
}

TEST_CASE("with lambda2 = 0 no gradient flows from the source loss path") {
  const TinyProblem p = tiny_problem();
  DstDae<float> net = tiny_net<float>(p, 8);
  Rng rng(9);
  const Tensor4<float> xn = random_tensor<float>(2, 8, 40, 1, rng);
  const Tensor4<float> xg = random_tensor<float>(2, 8, 40, 1, rng);
  const Tensor4<float> sg_a = random_tensor<float>(2, 16, 40, 1, rng);
  const Tensor4<float> sg_b = random_tensor<float>(2, 16, 40, 1, rng);

  auto grads_with_targets = [&](const Tensor4<float>& sg) {
    dae::Workspace<float> ws;
    DstDae<float> local = net;
    local.forward(xn, true, ws);
    Tensor4<float> d_xre, d_sre;
    dae::data_loss_grads(xg, ws.x_re, sg, ws.s_re(), 10.0, 0.0, 0.1, d_xre, d_sre);
    local.zero_grads();
    local.backward(ws, d_sre, d_xre);
    std::vector<float> flat;
    for (auto& view : local.param_views())
      flat.insert(flat.end(), view.grad->begin(), view.grad->end());
    return flat;
  };

  const auto ga = grads_with_targets(sg_a);
  const auto gb = grads_with_targets(sg_b);
  REQUIRE(ga.size() == gb.size());
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(ga[i] == gb[i]);
}

TEST_CASE("training: zero epochs is a no-op, descent on a tiny problem") {
  const TinyProblem p = tiny_problem();

  synth::SynthesisConfig scfg;
  scfg.sample_count = 200;
  scfg.a_max_cm2 = 20.0;
  scfg.master_seed = 11;
  synth::generate_dataset(p.m, p.lead, p.tbf, scfg, "tiny_train.esid");
  const synth::Dataset data = synth::load_dataset("tiny_train.esid");
  std::remove("tiny_train.esid");

  SUBCASE("zero epochs leaves the network unchanged") {
    DstDae<float> net = tiny_net<float>(p, 12);
    net.save("net_before.esiw");
    dae::TrainConfig cfg;
    cfg.epochs = 0;
    const dae::TrainResult result = dae::train(net, data, cfg);
    CHECK(result.history.empty());
    net.save("net_after.esiw");
    CHECK(slurp("net_before.esiw") == slurp("net_after.esiw"));
    std::remove("net_before.esiw");
    std::remove("net_after.esiw");
  }

  SUBCASE("fifty epochs reduce the training loss") {
    DstDae<float> net = tiny_net<float>(p, 13);
    dae::TrainConfig cfg;
    cfg.epochs = 50;
    cfg.warmup_epochs = 20;
    cfg.cooldown_epochs = 20;
    cfg.batch_size = 32;
    cfg.lr_max = 1e-3;
    cfg.lr_min = 1e-4;
    cfg.snr_db = 0.0;
    cfg.master_seed = 14;
    const dae::TrainResult result = dae::train(net, data, cfg);
    REQUIRE(result.history.size() == 50);
    CHECK(result.history.back().train_loss < result.history.front().train_loss);
    CHECK(result.best_epoch >= 1);
  }
}

TEST_CASE("estimate: determinism, output shape, dims error, purity") {
  const TinyProblem p = tiny_problem();
  DstDae<float> net = tiny_net<float>(p, 15);
  Rng rng(16);
  Eigen::MatrixXd x(8, 40);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 40; ++c) x(r, c) = rng.normal();

  net.save("net_purity_before.esiw");
  const Eigen::MatrixXd s1 = net.estimate(x);
  const Eigen::MatrixXd s2 = net.estimate(x);
  CHECK(s1.rows() == 16);
  CHECK(s1.cols() == 40);
  CHECK((s1 - s2).norm() == 0.0);
  net.save("net_purity_after.esiw");
  CHECK(slurp("net_purity_before.esiw") == slurp("net_purity_after.esiw"));
  std::remove("net_purity_before.esiw");
  std::remove("net_purity_after.esiw");

  try {
    net.estimate(Eigen::MatrixXd::Random(9, 40));
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeError);
    CHECK(std::string(e.what()).find("(8, 40)") != std::string::npos);
    CHECK(std::string(e.what()).find("(9, 40)") != std::string::npos);
  }
}

TEST_CASE("denoise_scalp equals the fixed block applied to the estimate") {
  const TinyProblem p = tiny_problem();
  DstDae<float> net = tiny_net<float>(p, 17);
  Rng rng(18);
  Eigen::MatrixXd x(8, 40);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 40; ++c) x(r, c) = rng.normal();
  const Eigen::MatrixXd xre = net.denoise_scalp(x);
  const Eigen::MatrixXd expected = net.lead_matrix().cast<double>() * net.estimate(x);
  CHECK((xre - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(xre.rows() == 8);
  CHECK(xre.cols() == 40);
}

TEST_CASE("checkpoint round trip is byte-identical and keeps optimizer state") {
  const TinyProblem p = tiny_problem();
  DstDae<float> net = tiny_net<float>(p, 19);

  synth::SynthesisConfig scfg;
  scfg.sample_count = 48;
  scfg.master_seed = 20;
  synth::generate_dataset(p.m, p.lead, p.tbf, scfg, "tiny_ckpt.esid");
  const synth::Dataset data = synth::load_dataset("tiny_ckpt.esid");
  std::remove("tiny_ckpt.esid");

  dae::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.warmup_epochs = 0;
  cfg.cooldown_epochs = 0;
  cfg.batch_size = 16;
  cfg.master_seed = 21;
  dae::train(net, data, cfg);
  CHECK(net.step() > 0);
  CHECK(net.epochs_done() >= 1);

  net.save("ckpt_a.esiw");
  DstDae<float> back = DstDae<float>::load("ckpt_a.esiw");
  back.save("ckpt_b.esiw");
  CHECK(slurp("ckpt_a.esiw") == slurp("ckpt_b.esiw"));
  CHECK(back.step() == net.step());
  CHECK(back.epochs_done() == net.epochs_done());
  CHECK(back.train_snr_db() == net.train_snr_db());
  std::remove("ckpt_a.esiw");
  std::remove("ckpt_b.esiw");
}
