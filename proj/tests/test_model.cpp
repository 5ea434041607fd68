#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "gdance/model.hpp"

using namespace gdance;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("gdance_model_" + name)).string();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape == b.shape);
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs((*a.data)[i] - (*b.data)[i]));
  }
  return m;
}

DecoderConfig tiny_config() {
  DecoderConfig cfg;
  cfg.d = 8;
  cfg.temporal_layers = 1;
  cfg.gcn_layers = 1;
  cfg.ssm_state_dim = 4;
  cfg.window = 2;
  cfg.T = 30;
  cfg.segment_len = 5;
  cfg.dancers = 2;
  cfg.max_dancers = 4;
  cfg.music_dim = 5;
  return cfg;
}

// The output projection ships zero-initialized (constant rest-pose output);
// tests that need input sensitivity give it small random weights.
void randomize_out(Decoder& dec, std::uint64_t seed) {
  RngStream rng(seed);
  for (double& v : *dec.params().find("out.w")->data) v = 0.05 * rng.next_gaussian();
}

// Constant-pose motion: every frame repeats one random pose per dancer.
GroupMotion static_motion(RngStream& rng, int frames, int dancers) {
  GroupMotion gm;
  gm.frames = frames;
  gm.dancers = dancers;
  gm.fps = 30.0;
  gm.values.resize(static_cast<std::size_t>(frames) * dancers * kPoseDim);
  for (int n = 0; n < dancers; ++n) {
    Pose p;
    for (double& v : p.rot6d) v = rng.next_gaussian();
    for (double& v : p.contacts) v = rng.next_uniform();
    p.root = {2.0 * n, 0.1 * n, 0.9};
    for (int l = 0; l < frames; ++l) gm.set_pose(l, n, p);
  }
  return gm;
}

}  // namespace

TEST_CASE("config validation rejects out-of-range settings") {
  DecoderConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());

  DecoderConfig bad = cfg;
  bad.d = 7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.dancers = 5;  // above max_dancers = 4
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.T = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.music_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.weights.dist = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.temporal_layers = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("parameter store registers in order and finds by name") {
  ParamStore store;
  Tensor a = store.add("a", Tensor::zeros({2, 2}, true));
  store.add("b", Tensor::zeros({3}, true));
  CHECK(store.items.size() == 2);
  CHECK(store.items[0].first == "a");

  // find() aliases the stored buffer.
  store.find("a")->ptr()[0] = 7.0;
  CHECK(a.ptr()[0] == 7.0);
  CHECK(store.find("missing") == nullptr);
  CHECK_THROWS_AS(store.add("a", Tensor::zeros({1})), ValueError);

  a.ensure_grad();
  (*a.grad)[0] = 1.0;
  store.zero_grad();
  CHECK((*a.grad)[0] == 0.0);
}

TEST_CASE("group fusion mixes dancers and keeps the frame layout") {
  RngStream rng(11);
  int L = 4, N = 3, d = 6;
  FusionParams p;
  p.dancers = N;
  p.w1 = Tensor::randn(rng, {N * d, 2 * N * d});
  p.b1 = Tensor::zeros({1, 2 * N * d});
  p.w2 = Tensor::randn(rng, {2 * N * d, N * d});
  p.b2 = Tensor::zeros({1, N * d});

  Tensor zero = Tensor::zeros({L, N, d});
  CHECK(max_abs_diff(group_fusion(zero, p), zero) == 0.0);

  Tensor x = Tensor::randn(rng, {L, N, d});
  Tensor y = group_fusion(x, p);
  CHECK(y.shape == std::vector<int>{L, N, d});

  // Swapping two dancers' inputs perturbs every dancer's output: slots are
  // identity-bearing, not permutation-equivariant.
  Tensor xs = x.detach_copy();
  for (int l = 0; l < L; ++l) {
    for (int c = 0; c < d; ++c) {
      std::swap(xs.ptr()[(static_cast<std::size_t>(l) * N + 0) * d + c],
                xs.ptr()[(static_cast<std::size_t>(l) * N + 1) * d + c]);
    }
  }
  Tensor ys = group_fusion(xs, p);
  for (int n = 0; n < N; ++n) {
    CHECK(max_abs_diff(ops::slice(y, 1, n, 1), ops::slice(ys, 1, n, 1)) > 1e-6);
  }

  Tensor wrong = Tensor::zeros({L, N + 1, d});
  CHECK_THROWS_AS(group_fusion(wrong, p), ShapeError);
}

TEST_CASE("loss terms vanish on a perfect static prediction") {
  RngStream rng(21);
  GroupMotion gm = static_motion(rng, 6, 3);
  Tensor x = to_tensor(gm);
  Skeleton skel = Skeleton::standard();
  LossBreakdown lb = compute_losses(x, x, skel, LossWeights{});
  CHECK(lb.simple.item() == 0.0);
  CHECK(lb.vel.item() == 0.0);
  CHECK(lb.fk.item() == 0.0);
  CHECK(lb.contact.item() == 0.0);  // static feet cannot slide
  CHECK(lb.dist.item() == 0.0);
  CHECK(lb.total.item() == 0.0);
}

TEST_CASE("contact loss penalizes the prediction's own foot slide") {
  // A moving motion predicted perfectly still pays for gated foot velocity.
  SynthConfig sc;
  sc.count = 1;
  sc.frames = 12;
  sc.dancers = 2;
  sc.music_dim = 4;
  auto [gm, mus] = synth_dataset(sc, 5)[0];
  Tensor x = to_tensor(gm);
  Skeleton skel = Skeleton::standard();
  LossBreakdown lb = compute_losses(x, x, skel, LossWeights{});
  CHECK(lb.simple.item() == 0.0);
  CHECK(lb.vel.item() == 0.0);
  CHECK(lb.fk.item() == 0.0);
  CHECK(lb.dist.item() == 0.0);
  CHECK(lb.contact.item() >= 0.0);
  CHECK(std::isfinite(lb.contact.item()));
}

TEST_CASE("constant channel offset keeps velocity and drift losses at zero") {
  RngStream rng(23);
  GroupMotion gm = static_motion(rng, 5, 2);
  Tensor x0 = to_tensor(gm);
  Tensor xhat = x0.detach_copy();
  const double c = 1.0 / 64.0;
  for (double& v : *xhat.data) v += c;

  Skeleton skel = Skeleton::standard();
  LossBreakdown lb = compute_losses(xhat, x0, skel, LossWeights{});
  CHECK(lb.simple.item() == doctest::Approx(c * c).epsilon(1e-12));
  CHECK(lb.vel.item() == 0.0);
  CHECK(lb.dist.item() == 0.0);  // a shared offset cancels in relative roots
  CHECK(lb.fk.item() > 0.0);
}

TEST_CASE("loss breakdown matches its closed-form weighted total") {
  LossWeights w;
  CHECK(w.simple + w.vel + w.fk + w.contact + w.dist ==
        doctest::Approx(115.188).epsilon(1e-12));

  SynthConfig sc;
  sc.count = 1;
  sc.frames = 10;
  sc.dancers = 3;
  auto [gm, mus] = synth_dataset(sc, 9)[0];
  Tensor x0 = to_tensor(gm);
  RngStream rng(31);
  Tensor xhat = x0.detach_copy();
  for (double& v : *xhat.data) v += 0.05 * rng.next_gaussian();

  Skeleton skel = Skeleton::standard();
  LossBreakdown lb = compute_losses(xhat, x0, skel, w);
  double dot = w.simple * lb.simple.item() + w.vel * lb.vel.item() + w.fk * lb.fk.item() +
               w.contact * lb.contact.item() + w.dist * lb.dist.item();
  CHECK(lb.total.item() == doctest::Approx(dot).epsilon(1e-12));
  for (double v : {lb.simple.item(), lb.vel.item(), lb.fk.item(), lb.contact.item(),
                   lb.dist.item()}) {
    CHECK(v > 0.0);
  }
}

TEST_CASE("relative-root loss measures pairwise drift") {
  RngStream rng(37);
  GroupMotion gm = static_motion(rng, 1, 2);
  Tensor x0 = to_tensor(gm);
  Tensor xhat = x0.detach_copy();
  // Move dancer 1's predicted root from x=2 to x=2.5: the relative vector is
  // off by 0.5, squared 0.25, one frame and one pair.
  xhat.ptr()[kPoseDim + kRootOffset] += 0.5;

  Skeleton skel = Skeleton::standard();
  LossBreakdown lb = compute_losses(xhat, x0, skel, LossWeights{});
  CHECK(lb.dist.item() == 0.25);

  GroupMotion solo = static_motion(rng, 1, 1);
  Tensor s = to_tensor(solo);
  CHECK(compute_losses(s, s, skel, LossWeights{}).dist.item() == 0.0);
}

TEST_CASE("decoder forward is deterministic and shape-stable") {
  DecoderConfig cfg = tiny_config();
  Decoder dec_a(cfg, 100), dec_b(cfg, 100), dec_c(cfg, 101);
  randomize_out(dec_a, 1);
  randomize_out(dec_b, 1);
  randomize_out(dec_c, 1);

  int L = 6;
  RngStream rng(41);
  GroupMotion gm = static_motion(rng, L, cfg.dancers);
  Tensor x = to_tensor(gm);
  Tensor music = Tensor::randn(rng, {L, cfg.music_dim});
  std::vector<int> t = {0, 0, 5, 5, 17, 17};
  SwapCode swap = dec_a.encode_swap({{0, 0}, {2, 0}}, {{2, 0}, {0, 0}});

  Tensor y1 = dec_a.forward(x, t, music, swap);
  Tensor y2 = dec_a.forward(x, t, music, swap);
  Tensor y3 = dec_b.forward(x, t, music, dec_b.encode_swap({{0, 0}, {2, 0}}, {{2, 0}, {0, 0}}));
  CHECK(y1.shape == std::vector<int>{L, cfg.dancers, kPoseDim});
  CHECK(max_abs_diff(y1, y2) == 0.0);
  CHECK(max_abs_diff(y1, y3) == 0.0);
  CHECK(max_abs_diff(y1, dec_c.forward(x, t, music, swap)) > 0.0);

  CHECK_THROWS_AS(dec_a.forward(Tensor::zeros({L, cfg.dancers + 1, kPoseDim}), t, music, swap),
                  ShapeError);
  CHECK_THROWS_AS(dec_a.forward(x, {1, 2, 3}, music, swap), ShapeError);
  CHECK_THROWS_AS(dec_a.forward(x, t, Tensor::zeros({L, cfg.music_dim + 1}), swap), ShapeError);
  SwapCode bad = swap;
  bad.embedding = Tensor::zeros({1, cfg.d + 2});
  CHECK_THROWS_AS(dec_a.forward(x, t, music, bad), ShapeError);
}

TEST_CASE("causal configuration ignores future frames") {
  DecoderConfig cfg = tiny_config();
  cfg.causal = true;
  cfg.window = 3;
  Decoder dec(cfg, 200);
  randomize_out(dec, 2);

  int L = 10, keep = 7;
  RngStream rng(43);
  GroupMotion gm = static_motion(rng, L, cfg.dancers);
  Tensor x = to_tensor(gm);
  Tensor music = Tensor::randn(rng, {L, cfg.music_dim});
  std::vector<int> t(L, 9);
  SwapCode swap = dec.encode_swap({{0, 0}, {1, 1}}, {{1, 0}, {0, 1}});

  Tensor xf = x.detach_copy();
  Tensor mf = music.detach_copy();
  for (int l = keep; l < L; ++l) {
    for (int n = 0; n < cfg.dancers; ++n) {
      for (int c = 0; c < kPoseDim; ++c) {
        xf.ptr()[(static_cast<std::size_t>(l) * cfg.dancers + n) * kPoseDim + c] +=
            rng.next_gaussian();
      }
    }
    for (int c = 0; c < cfg.music_dim; ++c) {
      mf.ptr()[static_cast<std::size_t>(l) * cfg.music_dim + c] += rng.next_gaussian();
    }
  }

  Tensor ya = dec.forward(x, t, music, swap);
  Tensor yb = dec.forward(xf, t, mf, swap);
  CHECK(max_abs_diff(ops::slice(ya, 0, 0, keep), ops::slice(yb, 0, 0, keep)) == 0.0);
  CHECK(max_abs_diff(ops::slice(ya, 0, keep, L - keep), ops::slice(yb, 0, keep, L - keep)) > 0.0);

  // The symmetric configuration must not have this property.
  DecoderConfig sym = tiny_config();
  Decoder dsym(sym, 200);
  randomize_out(dsym, 2);
  Tensor za = dsym.forward(x, t, music, swap);
  Tensor zb = dsym.forward(xf, t, mf, swap);
  CHECK(max_abs_diff(ops::slice(za, 0, 0, keep), ops::slice(zb, 0, 0, keep)) > 0.0);
}

TEST_CASE("gradients through the full decoder match finite differences") {
  DecoderConfig cfg = tiny_config();
  Decoder dec(cfg, 300);
  RngStream rng(47);

  // The output projection ships zero-initialized; randomize it so gradient
  // signal reaches every upstream parameter.
  Tensor* out_w = dec.params().find("out.w");
  REQUIRE(out_w != nullptr);
  for (double& v : *out_w->data) v = 0.05 * rng.next_gaussian();

  SynthConfig sc;
  sc.count = 1;
  sc.frames = 6;
  sc.dancers = cfg.dancers;
  sc.music_dim = cfg.music_dim;
  auto [gm, mus] = synth_dataset(sc, 55)[0];
  int L = gm.frames;
  Tensor x0 = to_tensor(gm);
  Tensor x_t = x0.detach_copy();
  for (double& v : *x_t.data) v += 0.1 * rng.next_gaussian();
  Tensor music = Tensor::from({L, mus.dim}, mus.features);
  std::vector<int> t = {7, 7, 7, 19, 19, 19};
  std::vector<std::array<double, 2>> sw_start = {{0, 0}, {1.5, 0}};
  std::vector<std::array<double, 2>> sw_end = {{1.5, 0}, {0, 0}};
  Skeleton skel = Skeleton::standard();

  auto loss_fn = [&]() {
    SwapCode swap = dec.encode_swap(sw_start, sw_end);
    Tensor xhat = dec.forward(x_t, t, music, swap);
    return compute_losses(xhat, x0, skel, cfg.weights).total;
  };

  dec.params().zero_grad();
  Tensor total = loss_fn();
  total.backward();

  const double h = 1e-5, tol = 1e-4;
  const std::vector<std::string> probed = {
      "in.w",  "fusion.w1", "gcn.0.w", "music.w", "time.w1", "swap.table",
      "layer.0.attn.wq", "layer.0.attn.lambda", "layer.0.cross.wk",
      "layer.0.ssm.a_log", "layer.0.ssm.b", "layer.0.ssm.delta_log",
      "layer.0.ff.w1", "layer.0.ln1.g", "out.w", "out.b"};
  NoGradGuard ng;
  for (const std::string& name : probed) {
    Tensor* p = dec.params().find(name);
    REQUIRE_MESSAGE(p != nullptr, name);
    std::vector<double> analytic(p->numel(), 0.0);
    if (p->grad) analytic = *p->grad;
    RngStream pick(std::hash<std::string>{}(name));
    int coords = std::min<std::size_t>(5, p->numel());
    for (int k = 0; k < coords; ++k) {
      std::size_t i = pick.next_u64() % p->numel();
      double orig = p->ptr()[i];
      p->ptr()[i] = orig + h;
      double fp = loss_fn().item();
      p->ptr()[i] = orig - h;
      double fm = loss_fn().item();
      p->ptr()[i] = orig;
      double numeric = (fp - fm) / (2.0 * h);
      double rel = std::abs(analytic[i] - numeric) /
                   std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      CHECK_MESSAGE(rel <= tol, name, "[", i, "] analytic=", analytic[i],
                    " numeric=", numeric);
    }
  }
}

TEST_CASE("decoder input gradients flow through the music pathway") {
  DecoderConfig cfg = tiny_config();
  Decoder dec(cfg, 310);
  RngStream rng(53);
  Tensor* out_w = dec.params().find("out.w");
  for (double& v : *out_w->data) v = 0.05 * rng.next_gaussian();

  int L = 5;
  GroupMotion gm = static_motion(rng, L, cfg.dancers);
  Tensor x = to_tensor(gm);
  Tensor x0 = x.detach_copy();
  std::vector<int> t(L, 11);
  SwapCode swap = dec.encode_swap({{0, 0}, {2, 0}}, {{0, 0}, {2, 0}});
  Skeleton skel = Skeleton::standard();

  auto rep = grad_check(
      [&](const Tensor& in) {
        Tensor xhat = dec.forward(x, t, in, swap);
        return compute_losses(xhat, x0, skel, cfg.weights).total;
      },
      Tensor::randn(rng, {L, cfg.music_dim}), 1e-4, 12, 99);
  CHECK_MESSAGE(rep.pass, rep.note, " rel=", rep.max_rel_err);
}

TEST_CASE("one optimizer step lowers the loss for some learning rate") {
  SynthConfig sc;
  sc.count = 1;
  sc.frames = 10;
  sc.dancers = 2;
  sc.music_dim = 5;
  auto [gm, mus] = synth_dataset(sc, 61)[0];
  int L = gm.frames;
  Tensor x0 = to_tensor(gm);
  Tensor music = Tensor::from({L, mus.dim}, mus.features);
  Skeleton skel = Skeleton::standard();

  bool any_down = false;
  for (double lr : {1e-3, 1e-4, 1e-5}) {
    DecoderConfig cfg = tiny_config();
    Decoder dec(cfg, 400);
    RngStream rng(67);
    Tensor noise = Tensor::randn(rng, {L, cfg.dancers * kPoseDim});
    Tensor x_t = ops::reshape(
        q_sample(ops::reshape(x0, {L, cfg.dancers * kPoseDim}), 12, noise, dec.schedule()),
        {L, cfg.dancers, kPoseDim});
    std::vector<int> t(L, 12);
    SwapCode swap = dec.encode_swap(gm);

    Tensor loss0 = compute_losses(dec.forward(x_t, t, music, swap), x0, skel, cfg.weights).total;
    double before = loss0.item();
    loss0.backward();
    Adam opt;
    opt.lr = lr;
    opt.step(dec.params());
    dec.params().zero_grad();

    NoGradGuard ng;
    double after =
        compute_losses(dec.forward(x_t, t, music, swap), x0, skel, cfg.weights).total.item();
    if (after < before) any_down = true;
  }
  CHECK(any_down);
}

TEST_CASE("training is deterministic and records the loss curve") {
  SynthConfig sc;
  sc.count = 2;
  sc.frames = 10;
  sc.dancers = 2;
  sc.music_dim = 5;
  auto data = synth_dataset(sc, 71);
  DecoderConfig cfg = tiny_config();
  cfg.T = 20;

  TrainConfig tc;
  tc.steps = 5;
  tc.lr = 1e-4;
  tc.seed = 9;
  std::string csv = temp_path("curve.csv");
  tc.curve_path = csv;

  Decoder d1(cfg, 500), d2(cfg, 500);
  TrainResult r1 = train_loop(d1, data, tc);
  TrainResult r2 = train_loop(d2, data, tc);
  REQUIRE(r1.curve.size() == 5);
  REQUIRE(r2.curve.size() == 5);
  for (int k = 0; k < 5; ++k) {
    CHECK(r1.curve[k].step == k + 1);
    CHECK(r1.curve[k].total == r2.curve[k].total);
    CHECK(r1.curve[k].simple == r2.curve[k].simple);
    CHECK(r1.curve[k].dist == r2.curve[k].dist);
    CHECK(std::isfinite(r1.curve[k].total));
  }

  std::ifstream in(csv);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,simple,vel,fk,contact,dist,total");
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 5);
  std::remove(csv.c_str());
}

TEST_CASE("checkpoints round-trip through float32") {
  DecoderConfig cfg = tiny_config();
  Decoder src(cfg, 600);
  randomize_out(src, 3);
  std::string path = temp_path("ckpt.bin");
  save_checkpoint(path, src.params());

  Decoder a(cfg, 601), b(cfg, 602);
  load_checkpoint(path, a.params());
  load_checkpoint(path, b.params());

  RngStream rng(73);
  GroupMotion gm = static_motion(rng, 6, cfg.dancers);
  Tensor x = to_tensor(gm);
  Tensor music = Tensor::randn(rng, {6, cfg.music_dim});
  std::vector<int> t(6, 4);
  SwapCode swap = a.encode_swap({{0, 0}, {2, 0}}, {{0, 0}, {2, 0}});

  NoGradGuard ng;
  Tensor ya = a.forward(x, t, music, swap);
  Tensor yb = b.forward(x, t, music, swap);
  Tensor ys = src.forward(x, t, music, src.encode_swap({{0, 0}, {2, 0}}, {{0, 0}, {2, 0}}));
  CHECK(max_abs_diff(ya, yb) == 0.0);       // both loads see identical f32 values
  CHECK(max_abs_diff(ya, ys) < 1e-4);       // f32 projection stays close to source
  CHECK(max_abs_diff(ya, ys) > 0.0);        // but is a genuine projection

  CHECK_THROWS_AS(load_checkpoint(temp_path("nonexistent.bin"), a.params()), IoError);

  std::string badmagic = temp_path("badmagic.bin");
  {
    std::ofstream out(badmagic, std::ios::binary);
    out << "XXXXjunk";
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(badmagic, a.params()), doctest::Contains("magic"),
                       IoError);
  std::remove(badmagic.c_str());

  // Truncation anywhere inside the payload is caught.
  std::string trunc = temp_path("trunc.bin");
  {
    std::ifstream in(path, std::ios::binary);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(trunc, std::ios::binary);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size() - 7));
  }
  CHECK_THROWS_AS(load_checkpoint(trunc, a.params()), IoError);
  std::remove(trunc.c_str());

  DecoderConfig wide = cfg;
  wide.d = 12;
  Decoder w(wide, 603);
  CHECK_THROWS_WITH_AS(load_checkpoint(path, w.params()), doctest::Contains("shape"), IoError);

  DecoderConfig deep = cfg;
  deep.temporal_layers = 2;
  Decoder dd(deep, 604);
  CHECK_THROWS_AS(load_checkpoint(path, dd.params()), IoError);  // parameter count differs
  std::remove(path.c_str());
}

TEST_CASE("training aborts with the step and component on non-finite loss") {
  SynthConfig sc;
  sc.count = 1;
  sc.frames = 10;
  sc.dancers = 2;
  sc.music_dim = 5;
  auto data = synth_dataset(sc, 81);
  DecoderConfig cfg = tiny_config();
  Decoder dec(cfg, 700);

  // A contact-channel bias of 1e200 squares to infinity in the first loss
  // term while leaving every kinematic channel valid.
  dec.params().find("out.b")->ptr()[kContactOffset] = 1e200;

  TrainConfig tc;
  tc.steps = 3;
  tc.seed = 1;
  CHECK_THROWS_WITH_AS(train_loop(dec, data, tc),
                       doctest::Contains("simple loss at step 1"), NumericError);
}

TEST_CASE("train loop validates the dataset against the model") {
  DecoderConfig cfg = tiny_config();
  Decoder dec(cfg, 800);
  TrainConfig tc;
  tc.steps = 1;
  CHECK_THROWS_AS(train_loop(dec, {}, tc), ValueError);

  SynthConfig sc;
  sc.count = 1;
  sc.frames = 10;
  sc.dancers = 3;  // model wants 2
  auto data = synth_dataset(sc, 91);
  CHECK_THROWS_AS(train_loop(dec, data, tc), ShapeError);
}

TEST_CASE("denoiser adapter round-trips flat motion rows") {
  DecoderConfig cfg = tiny_config();
  cfg.T = 6;
  Decoder dec(cfg, 900);
  RngStream rng(83);
  int L = 4;
  Tensor music = Tensor::randn(rng, {L, cfg.music_dim});
  SwapCode swap = dec.encode_swap({{0, 0}, {1, 0}}, {{1, 0}, {0, 0}});
  DenoiseFn fn = dec.denoiser(swap);

  GroupMotion gm = static_motion(rng, L, cfg.dancers);
  Tensor x3 = to_tensor(gm);
  Tensor flat = ops::reshape(x3, {L, cfg.dancers * kPoseDim});
  std::vector<int> t(L, 3);

  NoGradGuard ng;
  Tensor yflat = fn(flat, music, t);
  CHECK(yflat.shape == std::vector<int>{L, cfg.dancers * kPoseDim});
  Tensor ydir = dec.forward(x3, t, music, swap);
  CHECK(max_abs_diff(yflat, ops::reshape(ydir, {L, cfg.dancers * kPoseDim})) == 0.0);

  // The adapter drives the offline sampler end to end.
  SampleResult res = sample_offline(fn, music, cfg.dancers * kPoseDim, dec.schedule(), 17);
  CHECK(res.motion.shape == std::vector<int>{L, cfg.dancers * kPoseDim});
  CHECK(res.model_calls == cfg.T);
  for (double v : *res.motion.data) CHECK(std::isfinite(v));
}

TEST_CASE("swap codes derive from first and last frames") {
  DecoderConfig cfg = tiny_config();
  Decoder dec(cfg, 1000);
  RngStream rng(97);
  GroupMotion gm = static_motion(rng, 8, cfg.dancers);

  std::vector<std::array<double, 2>> start, end;
  for (int n = 0; n < cfg.dancers; ++n) {
    Pose p0 = gm.pose(0, n), p1 = gm.pose(7, n);
    start.push_back({p0.root[0], p0.root[1]});
    end.push_back({p1.root[0], p1.root[1]});
  }
  SwapCode from_motion = dec.encode_swap(gm);
  SwapCode from_roots = dec.encode_swap(start, end);
  CHECK(from_motion.index_sequence == from_roots.index_sequence);
  CHECK(max_abs_diff(from_motion.embedding, from_roots.embedding) == 0.0);
}
