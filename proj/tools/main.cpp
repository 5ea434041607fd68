#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gdance/bench.hpp"
#include "gdance/diffusion.hpp"
#include "gdance/error.hpp"
#include "gdance/io.hpp"
#include "gdance/metrics.hpp"
#include "gdance/model.hpp"
#include "gdance/motion.hpp"
#include "gdance/rng.hpp"
#include "gdance/tensor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gdance;

namespace {

constexpr double kTau = 6.283185307179586476925286766559;  // 2*pi

// ---------------------------------------------------------------- config ---

struct RunConfig {
  bool seed_set = false;
  std::uint64_t seed = 0;
  std::string out;       // resolved per command when empty
  std::string skeleton;  // empty selects the built-in skeleton

  DecoderConfig decoder;

  int train_steps = 300;
  double train_lr = 1e-4;
  std::string train_dataset = "gdance_out/data";
  std::string train_curve;  // empty: loss.csv next to the checkpoint

  int sample_frames = 0;  // 0: whole music track
  std::string sample_mode = "offline";
  int sample_s_window = 4;
  std::string sample_checkpoint = "gdance_out/checkpoint.gdck";
  std::string sample_music = "gdance_out/data/seq_000.gdmu";

  int stream_segment_len = 0;  // 0: decoder.segment_len
  int stream_s_window = 4;
  int stream_history = 4;
  std::string stream_checkpoint = "gdance_out/checkpoint.gdck";
  std::string stream_music = "gdance_out/data/seq_000.gdmu";
  std::string stream_latency;  // empty: latency.csv inside the output dir

  std::string eval_generated;
  std::string eval_reference;

  std::string bench_axis = "frames";
  std::vector<int> bench_sizes{120, 240, 480, 960};
  int bench_repeats = 5;
  int bench_fixed = 3;
  std::string bench_plot;

  int synth_sequences = 8;
  int synth_frames = 90;
  double synth_fps = 30.0;
};

DecoderConfig cli_decoder_defaults() {
  DecoderConfig d;
  d.d = 32;
  d.temporal_layers = 2;
  d.T = 200;
  return d;
}

void expect_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> keys) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) {
      std::string name = where.empty() ? it.key() : where + "." + it.key();
      throw ConfigError("unknown key '" + name + "'");
    }
  }
}

const json* get_obj(const json& o, const std::string& where, const char* key) {
  auto it = o.find(key);
  if (it == o.end()) return nullptr;
  if (!it->is_object()) throw ConfigError(where + "." + key + " must be an object");
  return &*it;
}

int get_int(const json& o, const std::string& where, const char* key, int dflt) {
  auto it = o.find(key);
  if (it == o.end()) return dflt;
  if (!it->is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
  return it->get<int>();
}

double get_num(const json& o, const std::string& where, const char* key, double dflt) {
  auto it = o.find(key);
  if (it == o.end()) return dflt;
  if (!it->is_number()) throw ConfigError(where + "." + key + " must be a number");
  return it->get<double>();
}

bool get_bool(const json& o, const std::string& where, const char* key, bool dflt) {
  auto it = o.find(key);
  if (it == o.end()) return dflt;
  if (!it->is_boolean()) throw ConfigError(where + "." + key + " must be a boolean");
  return it->get<bool>();
}

std::string get_str(const json& o, const std::string& where, const char* key,
                    const std::string& dflt) {
  auto it = o.find(key);
  if (it == o.end()) return dflt;
  if (!it->is_string()) throw ConfigError(where + "." + key + " must be a string");
  return it->get<std::string>();
}

RunConfig load_config(const std::string& path) {
  RunConfig rc;
  rc.decoder = cli_decoder_defaults();
  if (path.empty()) return rc;

  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + " is not valid JSON: " + e.what());
  }
  if (!root.is_object()) throw ConfigError(path + " must hold a JSON object");
  expect_keys(root, "", {"seed", "out", "skeleton", "decoder", "train", "sample", "stream",
                         "eval", "bench", "synth"});

  if (auto it = root.find("seed"); it != root.end()) {
    if (!it->is_number_integer() || (it->is_number_integer() && !it->is_number_unsigned() &&
                                     it->get<long long>() < 0)) {
      throw ConfigError("seed must be a non-negative integer");
    }
    rc.seed = it->get<std::uint64_t>();
    rc.seed_set = true;
  }
  rc.out = get_str(root, "", "out", rc.out);
  rc.skeleton = get_str(root, "", "skeleton", rc.skeleton);

  if (const json* d = get_obj(root, "", "decoder")) {
    expect_keys(*d, "decoder",
                {"d", "temporal_layers", "gcn_layers", "ssm_state_dim", "window", "causal", "T",
                 "schedule", "segment_len", "dancers", "max_dancers", "music_dim", "ff_hidden",
                 "loss_weights"});
    DecoderConfig& dc = rc.decoder;
    dc.d = get_int(*d, "decoder", "d", dc.d);
    dc.temporal_layers = get_int(*d, "decoder", "temporal_layers", dc.temporal_layers);
    dc.gcn_layers = get_int(*d, "decoder", "gcn_layers", dc.gcn_layers);
    dc.ssm_state_dim = get_int(*d, "decoder", "ssm_state_dim", dc.ssm_state_dim);
    dc.window = get_int(*d, "decoder", "window", dc.window);
    dc.causal = get_bool(*d, "decoder", "causal", dc.causal);
    dc.T = get_int(*d, "decoder", "T", dc.T);
    dc.schedule = schedule_kind_from(get_str(
        *d, "decoder", "schedule", dc.schedule == ScheduleKind::linear ? "linear" : "cosine"));
    dc.segment_len = get_int(*d, "decoder", "segment_len", dc.segment_len);
    dc.dancers = get_int(*d, "decoder", "dancers", dc.dancers);
    dc.max_dancers = get_int(*d, "decoder", "max_dancers", dc.max_dancers);
    dc.music_dim = get_int(*d, "decoder", "music_dim", dc.music_dim);
    dc.ff_hidden = get_int(*d, "decoder", "ff_hidden", dc.ff_hidden);
    if (const json* w = get_obj(*d, "decoder", "loss_weights")) {
      expect_keys(*w, "decoder.loss_weights", {"simple", "vel", "fk", "contact", "dist"});
      dc.weights.simple = get_num(*w, "decoder.loss_weights", "simple", dc.weights.simple);
      dc.weights.vel = get_num(*w, "decoder.loss_weights", "vel", dc.weights.vel);
      dc.weights.fk = get_num(*w, "decoder.loss_weights", "fk", dc.weights.fk);
      dc.weights.contact = get_num(*w, "decoder.loss_weights", "contact", dc.weights.contact);
      dc.weights.dist = get_num(*w, "decoder.loss_weights", "dist", dc.weights.dist);
    }
  }

  if (const json* t = get_obj(root, "", "train")) {
    expect_keys(*t, "train", {"steps", "lr", "dataset", "curve"});
    rc.train_steps = get_int(*t, "train", "steps", rc.train_steps);
    rc.train_lr = get_num(*t, "train", "lr", rc.train_lr);
    rc.train_dataset = get_str(*t, "train", "dataset", rc.train_dataset);
    rc.train_curve = get_str(*t, "train", "curve", rc.train_curve);
  }
  if (const json* s = get_obj(root, "", "sample")) {
    expect_keys(*s, "sample", {"frames", "mode", "s_window", "checkpoint", "music"});
    rc.sample_frames = get_int(*s, "sample", "frames", rc.sample_frames);
    rc.sample_mode = get_str(*s, "sample", "mode", rc.sample_mode);
    rc.sample_s_window = get_int(*s, "sample", "s_window", rc.sample_s_window);
    rc.sample_checkpoint = get_str(*s, "sample", "checkpoint", rc.sample_checkpoint);
    rc.sample_music = get_str(*s, "sample", "music", rc.sample_music);
  }
  if (const json* s = get_obj(root, "", "stream")) {
    expect_keys(*s, "stream", {"segment_len", "s_window", "history_segments", "checkpoint",
                               "music", "latency"});
    rc.stream_segment_len = get_int(*s, "stream", "segment_len", rc.stream_segment_len);
    rc.stream_s_window = get_int(*s, "stream", "s_window", rc.stream_s_window);
    rc.stream_history = get_int(*s, "stream", "history_segments", rc.stream_history);
    rc.stream_checkpoint = get_str(*s, "stream", "checkpoint", rc.stream_checkpoint);
    rc.stream_music = get_str(*s, "stream", "music", rc.stream_music);
    rc.stream_latency = get_str(*s, "stream", "latency", rc.stream_latency);
  }
  if (const json* e = get_obj(root, "", "eval")) {
    expect_keys(*e, "eval", {"generated", "reference"});
    rc.eval_generated = get_str(*e, "eval", "generated", rc.eval_generated);
    rc.eval_reference = get_str(*e, "eval", "reference", rc.eval_reference);
  }
  if (const json* b = get_obj(root, "", "bench")) {
    expect_keys(*b, "bench", {"axis", "sizes", "repeats", "fixed", "plot"});
    rc.bench_axis = get_str(*b, "bench", "axis", rc.bench_axis);
    if (auto it = b->find("sizes"); it != b->end()) {
      if (!it->is_array()) throw ConfigError("bench.sizes must be an array of integers");
      rc.bench_sizes.clear();
      for (const json& v : *it) {
        if (!v.is_number_integer()) throw ConfigError("bench.sizes must be an array of integers");
        rc.bench_sizes.push_back(v.get<int>());
      }
    }
    rc.bench_repeats = get_int(*b, "bench", "repeats", rc.bench_repeats);
    rc.bench_fixed = get_int(*b, "bench", "fixed", rc.bench_fixed);
    rc.bench_plot = get_str(*b, "bench", "plot", rc.bench_plot);
  }
  if (const json* s = get_obj(root, "", "synth")) {
    expect_keys(*s, "synth", {"sequences", "frames", "fps"});
    rc.synth_sequences = get_int(*s, "synth", "sequences", rc.synth_sequences);
    rc.synth_frames = get_int(*s, "synth", "frames", rc.synth_frames);
    rc.synth_fps = get_num(*s, "synth", "fps", rc.synth_fps);
  }
  return rc;
}

// --------------------------------------------------------------- helpers ---

void require_seed(const RunConfig& rc, const std::string& cmd) {
  if (!rc.seed_set) {
    throw ConfigError("seed is required for " + cmd + "; pass --seed or set \"seed\"");
  }
}

int thread_cap(bool timing_default_one) {
  const char* env = std::getenv("GDANCE_THREADS");
  if (!env) return timing_default_one ? 1 : 1;
  char* end = nullptr;
  long v = std::strtol(env, &end, 10);
  if (!end || *end != '\0' || v < 1) {
    throw ConfigError(std::string("GDANCE_THREADS must be a positive integer, got '") + env +
                      "'");
  }
  return static_cast<int>(v);
}

void ensure_parent(const std::string& path) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

Skeleton load_skeleton(const RunConfig& rc) {
  if (rc.skeleton.empty()) return Skeleton::standard();
  return read_skeleton_json(rc.skeleton);
}

std::string out_or(const RunConfig& rc, const std::string& dflt) {
  return rc.out.empty() ? dflt : rc.out;
}

Tensor music_tensor(const MusicTrack& mt, int frames) {
  Tensor m = Tensor::zeros({frames, mt.dim});
  std::copy(mt.features.begin(),
            mt.features.begin() + static_cast<std::size_t>(frames) * mt.dim, m.ptr());
  return m;
}

GroupMotion motion_from_flat(const Tensor& flat, int dancers, double fps) {
  Tensor shaped = ops::reshape(flat, {flat.size(0), dancers, kPoseDim});
  return from_tensor(shaped, fps);
}

std::vector<std::string> sorted_files(const std::string& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::pair<GroupMotion, MusicTrack>> load_dataset(const std::string& dir) {
  std::vector<std::pair<GroupMotion, MusicTrack>> data;
  for (const std::string& mpath : sorted_files(dir, ".gdm1")) {
    fs::path music = fs::path(mpath).replace_extension(".gdmu");
    if (!fs::exists(music)) throw IoError("missing music track " + music.string());
    data.emplace_back(read_motion(mpath), read_music(music.string()));
  }
  if (data.empty()) throw IoError("no .gdm1 sequences found in " + dir);
  return data;
}

// Deterministic swap condition for sampling without a ground-truth motion:
// dancers hold a line formation, so the rank order never changes.
SwapCode identity_swap(const Decoder& dec) {
  int n = dec.config().dancers;
  std::vector<std::array<double, 2>> line(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) line[i] = {1.5 * i, 0.0};
  return dec.encode_swap(line, line);
}

Decoder restore_decoder(const RunConfig& rc, const std::string& ckpt) {
  DecoderConfig dc = rc.decoder;
  dc.validate();
  Decoder dec(dc, 0);  // construction seed is irrelevant once weights load
  load_checkpoint(ckpt, dec.params());
  return dec;
}

MusicTrack load_music_checked(const std::string& path, const RunConfig& rc, int frames_flag) {
  MusicTrack mt = read_music(path);
  if (mt.dim != rc.decoder.music_dim) {
    throw ConfigError("music track " + path + " has dim " + std::to_string(mt.dim) +
                      " but decoder.music_dim is " + std::to_string(rc.decoder.music_dim));
  }
  if (frames_flag > mt.frames) {
    throw ConfigError("frames " + std::to_string(frames_flag) + " exceeds music length " +
                      std::to_string(mt.frames));
  }
  return mt;
}

// ----------------------------------------------------------------- synth ---

// Smooth circular group choreography plus a sinusoid-bank music track that
// shares the gait frequency, so motion and audio are genuinely correlated.
std::pair<GroupMotion, MusicTrack> synth_pair(RngStream rng, int frames, int dancers,
                                              int music_dim, double fps) {
  GroupMotion gm = GroupMotion::blank(frames, dancers, fps);
  double beat = (1.2 + 0.6 * rng.next_uniform()) * kTau / fps;  // radians per frame
  for (int n = 0; n < dancers; ++n) {
    double a0 = kTau * n / dancers;
    double radius = 1.6 + 0.3 * rng.next_uniform();
    double orbit = (0.15 + 0.1 * rng.next_uniform()) / fps;
    double gait = kTau * rng.next_uniform();
    std::array<double, kJoints> amp{}, phase{};
    for (int j = 0; j < kJoints; ++j) {
      amp[j] = 0.15 + 0.2 * rng.next_uniform();
      phase[j] = kTau * rng.next_uniform();
    }
    for (int l = 0; l < frames; ++l) {
      Pose p;
      for (int j = 0; j < kJoints; ++j) {
        double th = amp[j] * std::sin(beat * l + phase[j]);
        double c = std::cos(th), s = std::sin(th);
        double* r = p.rot6d.data() + 6 * j;
        r[0] = c;
        r[1] = s;
        r[2] = 0.0;
        r[3] = -s;
        r[4] = c;
        r[5] = 0.0;
      }
      double swing = std::sin(beat * l + gait);
      p.contacts = {swing > 0 ? 1.0 : 0.0, swing > 0.3 ? 1.0 : 0.0, swing <= 0 ? 1.0 : 0.0,
                    swing <= -0.3 ? 1.0 : 0.0};
      double a = a0 + orbit * l;
      p.root = {radius * std::cos(a), radius * std::sin(a),
                0.92 + 0.03 * std::sin(beat * l + gait)};
      gm.set_pose(l, n, p);
    }
  }
  MusicTrack mt;
  mt.frames = frames;
  mt.dim = music_dim;
  mt.fps = fps;
  mt.features.assign(static_cast<std::size_t>(frames) * music_dim, 0.0);
  std::vector<double> chroma(static_cast<std::size_t>(music_dim));
  for (int c = 0; c < music_dim; ++c) chroma[c] = kTau * rng.next_uniform();
  int period = std::max(2, static_cast<int>(std::lround(kTau / beat)));
  for (int l = 0; l < frames; ++l) {
    for (int c = 0; c < music_dim - 1; ++c) {
      mt.features[l * music_dim + c] = std::sin(beat * (c % 4 + 1) * l + chroma[c]);
    }
    mt.features[l * music_dim + music_dim - 1] = l % period == 0 ? 1.0 : 0.0;
  }
  return {std::move(gm), std::move(mt)};
}

int run_synth(const RunConfig& rc, int frames_flag, int dancers_flag) {
  std::string dir = out_or(rc, "gdance_out/data");
  int frames = frames_flag > 0 ? frames_flag : rc.synth_frames;
  int dancers = dancers_flag > 0 ? dancers_flag : rc.decoder.dancers;
  if (frames < 2) throw ConfigError("synth.frames must be >= 2");
  if (dancers < 1) throw ConfigError("synth needs at least one dancer");
  if (rc.synth_sequences < 1) throw ConfigError("synth.sequences must be >= 1");
  fs::create_directories(dir);
  RngStream root(rc.seed);  // synth runs default to seed 0 when none is given
  for (int k = 0; k < rc.synth_sequences; ++k) {
    auto [gm, mt] =
        synth_pair(root.fork(static_cast<std::uint64_t>(k)), frames, dancers,
                   rc.decoder.music_dim, rc.synth_fps);
    std::ostringstream stem;
    stem << dir << "/seq_" << std::setw(3) << std::setfill('0') << k;
    write_motion(stem.str() + ".gdm1", gm);
    write_music(stem.str() + ".gdmu", mt);
  }
  std::cout << "synth: wrote " << rc.synth_sequences << " sequences (" << frames << " frames, "
            << dancers << " dancers) to " << dir << "\n";
  return 0;
}

// ----------------------------------------------------------------- train ---

int run_train(const RunConfig& rc) {
  require_seed(rc, "train");
  DecoderConfig dc = rc.decoder;
  dc.validate();
  std::string ckpt = out_or(rc, "gdance_out/checkpoint.gdck");
  std::string curve = rc.train_curve.empty()
                          ? (fs::path(ckpt).parent_path() / "loss.csv").string()
                          : rc.train_curve;
  auto data = load_dataset(rc.train_dataset);

  Decoder dec(dc, rc.seed);
  TrainConfig tc;
  tc.steps = rc.train_steps;
  tc.lr = rc.train_lr;
  tc.seed = rc.seed;
  ensure_parent(ckpt);
  ensure_parent(curve);
  tc.curve_path = curve;
  TrainResult tr = train_loop(dec, data, tc);
  save_checkpoint(ckpt, dec.params());

  double first = tr.curve.empty() ? 0.0 : tr.curve.front().total;
  double last = tr.curve.empty() ? 0.0 : tr.curve.back().total;
  std::cout << "train: " << tc.steps << " steps on " << data.size() << " sequences\n"
            << "train: total loss " << first << " -> " << last << "\n"
            << "train: checkpoint " << ckpt << "\n"
            << "train: curve " << curve << "\n";
  return 0;
}

// ---------------------------------------------------------------- sample ---

int run_sample(const RunConfig& rc, int frames_flag, int segments_flag,
               const std::string& mode_flag) {
  require_seed(rc, "sample");
  std::string mode = mode_flag.empty() ? rc.sample_mode : mode_flag;
  if (mode != "offline" && mode != "streaming") {
    throw ConfigError("sample.mode must be offline or streaming, got '" + mode + "'");
  }
  Decoder dec = restore_decoder(rc, rc.sample_checkpoint);
  int want = frames_flag > 0 ? frames_flag : rc.sample_frames;
  MusicTrack mt = load_music_checked(rc.sample_music, rc, want);
  int L = want > 0 ? want : mt.frames;
  if (L < 2) throw ConfigError("sample needs at least 2 frames");
  Tensor music = music_tensor(mt, L);
  int dim = dec.config().dancers * kPoseDim;
  int s_window = segments_flag > 0 ? segments_flag : rc.sample_s_window;

  DenoiseFn model = dec.denoiser(identity_swap(dec));
  SampleResult sr;
  if (mode == "offline") {
    sr = sample_offline(model, music, dim, dec.schedule(), rc.seed);
  } else {
    sr = sample_tns(model, music, dim, dec.schedule(), s_window, dec.config().segment_len,
                    rc.seed);
  }
  std::string out = out_or(rc, "gdance_out/sample.gdm1");
  ensure_parent(out);
  write_motion(out, motion_from_flat(sr.motion, dec.config().dancers, mt.fps));
  std::cout << "sample: " << mode << ", " << L << " frames, " << dec.config().dancers
            << " dancers, " << sr.model_calls << " model calls, " << std::setprecision(4)
            << sr.seconds << " s\n"
            << "sample: wrote " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------- stream ---

int run_stream(const RunConfig& rc, int segments_flag, int frames_flag) {
  require_seed(rc, "stream");
  Decoder dec = restore_decoder(rc, rc.stream_checkpoint);
  MusicTrack mt = load_music_checked(rc.stream_music, rc, frames_flag);
  int L = frames_flag > 0 ? frames_flag : mt.frames;
  int seg_len = rc.stream_segment_len > 0 ? rc.stream_segment_len : dec.config().segment_len;
  if (seg_len < 1) throw ConfigError("stream.segment_len must be >= 1");
  if (L % seg_len == 1) {
    throw ConfigError("final segment would hold a single frame; adjust frames (" +
                      std::to_string(L) + ") or segment_len (" + std::to_string(seg_len) + ")");
  }

  StreamConfig sc;
  sc.dim = dec.config().dancers * kPoseDim;
  sc.segment_len = seg_len;
  sc.s_window = segments_flag > 0 ? segments_flag : rc.stream_s_window;
  sc.history_segments = rc.stream_history;
  StreamEngine eng(dec.denoiser(identity_swap(dec)), dec.schedule(), sc, rc.seed);

  std::string dir = out_or(rc, "gdance_out/stream");
  fs::create_directories(dir);
  std::string latency = rc.stream_latency.empty() ? dir + "/latency.csv" : rc.stream_latency;
  ensure_parent(latency);
  std::ofstream log(latency);
  if (!log) throw IoError("cannot write " + latency);
  log << "segment,frames,seconds\n" << std::setprecision(17);

  Tensor music = music_tensor(mt, L);
  int emitted = 0;
  double total = 0.0;
  auto drain = [&] {
    for (;;) {
      std::vector<Tensor> out_segs;
      auto t0 = std::chrono::steady_clock::now();
      bool progressed = eng.tick(out_segs);
      double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      for (const Tensor& seg : out_segs) {
        std::ostringstream name;
        name << dir << "/segment_" << std::setw(3) << std::setfill('0') << emitted << ".gdm1";
        write_motion(name.str(), motion_from_flat(seg, dec.config().dancers, mt.fps));
        log << emitted << "," << seg.size(0) << "," << secs << "\n";
        total += secs;
        ++emitted;
      }
      if (!progressed) break;
    }
  };
  for (int l = 0; l < L; l += seg_len) {
    int n = std::min(seg_len, L - l);
    eng.push_music(ops::slice(music, 0, l, n));
    drain();
  }
  eng.finish();
  while (!eng.done()) drain();

  std::cout << "stream: emitted " << emitted << " segments (" << L << " frames) to " << dir
            << "\n"
            << "stream: per-segment latency log " << latency << ", emit-tick total "
            << std::setprecision(4) << total << " s\n";
  return 0;
}

// ------------------------------------------------------------------ eval ---

int run_eval(const RunConfig& rc, const std::string& gen_arg, const std::string& ref_arg) {
  std::string gen_dir = gen_arg.empty() ? rc.eval_generated : gen_arg;
  std::string ref_dir = ref_arg.empty() ? rc.eval_reference : ref_arg;
  if (gen_dir.empty() || ref_dir.empty()) {
    throw ConfigError("eval needs generated and reference directories");
  }
  auto load_dir = [](const std::string& dir) {
    std::vector<GroupMotion> motions;
    for (const std::string& p : sorted_files(dir, ".gdm1")) motions.push_back(read_motion(p));
    if (motions.empty()) throw IoError("no .gdm1 files in " + dir);
    return motions;
  };
  MetricReport mr = evaluate(load_dir(gen_dir), load_dir(ref_dir), load_skeleton(rc));
  std::string out = out_or(rc, "gdance_out/eval.json");
  ensure_parent(out);
  std::ofstream f(out);
  if (!f) throw IoError("cannot write " + out);
  f << report_json(mr);
  std::cout << report_table(mr) << "report: " << out << "\n";
  return 0;
}

// ----------------------------------------------------------------- bench ---

int run_bench(const RunConfig& rc, int dancers_flag, int window_flag) {
  ScalingConfig sc;
  if (rc.bench_axis == "frames") {
    sc.axis = ScalingAxis::frames;
  } else if (rc.bench_axis == "dancers") {
    sc.axis = ScalingAxis::dancers;
  } else {
    throw ConfigError("bench.axis must be frames or dancers, got '" + rc.bench_axis + "'");
  }
  sc.sizes = rc.bench_sizes;
  sc.repeats = rc.bench_repeats;
  sc.fixed = dancers_flag > 0 && sc.axis == ScalingAxis::frames ? dancers_flag : rc.bench_fixed;
  sc.seed = rc.seed;
  sc.decoder = rc.decoder;
  if (window_flag >= 0) sc.decoder.window = window_flag;
  ScalingReport r = run_scaling(sc);

  std::string out = out_or(rc, "gdance_out/bench.json");
  ensure_parent(out);
  {
    std::ofstream f(out);
    if (!f) throw IoError("cannot write " + out);
    f << scaling_json(r);
  }
  std::string csv = (fs::path(out).parent_path() / fs::path(out).stem()).string() + ".csv";
  {
    std::ofstream f(csv);
    if (!f) throw IoError("cannot write " + csv);
    f << scaling_csv(r);
  }
  if (!rc.bench_plot.empty()) {
    ensure_parent(rc.bench_plot);
    std::ofstream f(rc.bench_plot);
    if (!f) throw IoError("cannot write " + rc.bench_plot);
    f << "# size decoupled_seconds dense_seconds\n" << std::setprecision(17);
    for (std::size_t i = 0; i < r.sizes.size(); ++i) {
      f << r.sizes[i] << " " << r.decoupled_seconds[i] << " " << r.dense_seconds[i] << "\n";
    }
  }
  std::cout << "bench: exponent decoupled " << std::setprecision(4) << r.decoupled_exponent
            << ", dense " << r.dense_exponent << "\n";
  if (!r.advisory.empty()) std::cout << "bench: advisory: " << r.advisory << "\n";
  std::cout << "bench: report " << out << ", csv " << csv << "\n";
  return 0;
}

// ----------------------------------------------------------- export-json ---

int run_export(const RunConfig& rc, const std::string& input) {
  if (input.empty()) throw ConfigError("export-json needs an input .gdm1 path");
  GroupMotion gm = read_motion(input);
  Skeleton sk = load_skeleton(rc);
  NoGradGuard guard;
  Tensor pos = fk_positions(ops::reshape(to_tensor(gm), {gm.frames * gm.dancers, kPoseDim}), sk);
  const double* p = pos.ptr();

  std::string out = out_or(rc, "gdance_out/positions.json");
  ensure_parent(out);
  std::ofstream f(out);
  if (!f) throw IoError("cannot write " + out);
  f << std::setprecision(17);
  f << "{\n  \"fps\": " << gm.fps << ",\n  \"frames\": " << gm.frames
    << ",\n  \"dancers\": " << gm.dancers << ",\n  \"joints\": " << kJoints
    << ",\n  \"positions\": [";
  for (int l = 0; l < gm.frames; ++l) {
    f << (l ? "," : "") << "\n    [";
    for (int n = 0; n < gm.dancers; ++n) {
      f << (n ? "," : "") << "[";
      const double* row = p + (static_cast<std::size_t>(l) * gm.dancers + n) * kJoints * 3;
      for (int j = 0; j < kJoints; ++j) {
        f << (j ? "," : "") << "[" << row[3 * j] << "," << row[3 * j + 1] << ","
          << row[3 * j + 2] << "]";
      }
      f << "]";
    }
    f << "]";
  }
  f << "\n  ]\n}\n";
  std::cout << "export-json: wrote " << out << " (" << gm.frames << " frames)\n";
  return 0;
}

}  // namespace

// ------------------------------------------------------------------ main ---

int main(int argc, char** argv) {
  CLI::App app{"gdance: group dance motion diffusion toolkit"};
  app.fallthrough();
  app.require_subcommand(0, 1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_path;
  int dancers = 3, frames = 0, window = 8, segments = 4;
  std::string mode = "offline";

  auto* o_config = app.add_option("--config", config_path, "JSON run configuration file");
  auto* o_seed =
      app.add_option("--seed", seed, "RNG seed; required for train, sample, and stream")
          ->capture_default_str();
  auto* o_out = app.add_option("--out", out_path, "primary output path of the command");
  auto* o_dancers =
      app.add_option("--dancers", dancers, "dancer count override")->capture_default_str();
  auto* o_frames =
      app.add_option("--frames", frames, "frame count override (0: use config / whole track)")
          ->capture_default_str();
  auto* o_window =
      app.add_option("--window", window, "attention window override")->capture_default_str();
  auto* o_segments =
      app.add_option("--segments", segments, "staircase window (segments in flight)")
          ->capture_default_str();
  auto* o_mode = app.add_option("--mode", mode, "sampling mode: offline|streaming")
                     ->capture_default_str();

  CLI::App* c_train = app.add_subcommand("train", "fit the decoder on a dataset directory");
  CLI::App* c_sample = app.add_subcommand("sample", "generate motion from a music track");
  CLI::App* c_stream =
      app.add_subcommand("stream", "segment-by-segment generation with latency log");
  CLI::App* c_eval = app.add_subcommand("eval", "metric report: generated vs reference");
  std::string eval_gen, eval_ref;
  c_eval->add_option("generated", eval_gen, "directory of generated .gdm1 files");
  c_eval->add_option("reference", eval_ref, "directory of reference .gdm1 files");
  CLI::App* c_bench = app.add_subcommand("bench", "wall-time scaling sweep and exponents");
  CLI::App* c_synth = app.add_subcommand("synth", "write a synthetic dataset directory");
  CLI::App* c_export =
      app.add_subcommand("export-json", "per-frame joint positions for external viewers");
  std::string export_input;
  c_export->add_option("input", export_input, "input .gdm1 motion file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    RunConfig rc = load_config(config_path);
    if (o_seed->count() > 0) {
      rc.seed = seed;
      rc.seed_set = true;
    }
    if (o_out->count() > 0) rc.out = out_path;
    if (o_dancers->count() > 0) rc.decoder.dancers = dancers;
    if (o_window->count() > 0) rc.decoder.window = window;
    int frames_flag = o_frames->count() > 0 ? frames : 0;
    int segments_flag = o_segments->count() > 0 ? segments : 0;
    int dancers_flag = o_dancers->count() > 0 ? dancers : 0;
    int window_flag = o_window->count() > 0 ? window : -1;
    std::string mode_flag = o_mode->count() > 0 ? mode : "";
    (void)o_config;

    bool timing = app.got_subcommand(c_bench) || app.got_subcommand(c_sample) ||
                  app.got_subcommand(c_stream);
    thread_cap(timing);  // validated; the compute engine runs single-threaded

    if (app.got_subcommand(c_train)) return run_train(rc);
    if (app.got_subcommand(c_sample)) return run_sample(rc, frames_flag, segments_flag, mode_flag);
    if (app.got_subcommand(c_stream)) return run_stream(rc, segments_flag, frames_flag);
    if (app.got_subcommand(c_eval)) return run_eval(rc, eval_gen, eval_ref);
    if (app.got_subcommand(c_bench)) return run_bench(rc, dancers_flag, window_flag);
    if (app.got_subcommand(c_synth)) return run_synth(rc, frames_flag, dancers_flag);
    if (app.got_subcommand(c_export)) return run_export(rc, export_input);
    std::cout << app.help();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}
