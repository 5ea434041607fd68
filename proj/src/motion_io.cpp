#include "gdance/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "gdance/error.hpp"

namespace gdance {

namespace {

using nlohmann::json;

void put_u32(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xFF));
  buf.push_back(static_cast<char>((v >> 8) & 0xFF));
  buf.push_back(static_cast<char>((v >> 16) & 0xFF));
  buf.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

struct Reader {
  std::string bytes;
  std::size_t pos = 0;
  std::string path;

  void need(std::size_t n, const char* what) {
    if (pos + n > bytes.size())
      throw IoError(path + ": truncated payload while reading " + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  float f32(const char* what) {
    std::uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

Reader open_with_magic(const std::string& path, const char* magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  Reader r;
  r.path = path;
  r.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  r.need(4, "magic");
  if (r.bytes.compare(0, 4, magic) != 0)
    throw IoError(path + ": bad magic, expected " + magic);
  r.pos = 4;
  return r;
}

void write_file(const std::string& path, const std::string& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError(path + ": write failed");
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw IoError(path + ": invalid JSON");
  return j;
}

void dump_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << j.dump(1) << "\n";
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace

void write_motion(const std::string& path, const GroupMotion& motion) {
  motion.validate();
  std::string buf = "GDM1";
  put_u32(buf, static_cast<std::uint32_t>(motion.frames));
  put_u32(buf, static_cast<std::uint32_t>(motion.dancers));
  put_u32(buf, static_cast<std::uint32_t>(kPoseDim));
  put_f32(buf, static_cast<float>(motion.fps));
  for (double v : motion.values) put_f32(buf, static_cast<float>(v));
  write_file(path, buf);
}

GroupMotion read_motion(const std::string& path) {
  Reader r = open_with_magic(path, "GDM1");
  GroupMotion m;
  m.frames = static_cast<int>(r.u32("frame count"));
  m.dancers = static_cast<int>(r.u32("dancer count"));
  const std::uint32_t dim = r.u32("pose dim");
  if (dim != static_cast<std::uint32_t>(kPoseDim))
    throw IoError(path + ": header mismatch, pose dim " + std::to_string(dim) + " != " +
                  std::to_string(kPoseDim));
  m.fps = r.f32("fps");
  const std::size_t count = static_cast<std::size_t>(m.frames) * m.dancers * kPoseDim;
  m.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) m.values[i] = r.f32("pose payload");
  m.validate();
  return m;
}

void write_music(const std::string& path, const MusicTrack& music) {
  music.validate();
  std::string buf = "GDMU";
  put_u32(buf, static_cast<std::uint32_t>(music.frames));
  put_u32(buf, static_cast<std::uint32_t>(music.dim));
  put_f32(buf, static_cast<float>(music.fps));
  for (double v : music.features) put_f32(buf, static_cast<float>(v));
  write_file(path, buf);
}

MusicTrack read_music(const std::string& path) {
  Reader r = open_with_magic(path, "GDMU");
  MusicTrack m;
  m.frames = static_cast<int>(r.u32("frame count"));
  m.dim = static_cast<int>(r.u32("feature dim"));
  m.fps = r.f32("fps");
  const std::size_t count = static_cast<std::size_t>(m.frames) * m.dim;
  m.features.resize(count);
  for (std::size_t i = 0; i < count; ++i) m.features[i] = r.f32("feature payload");
  m.validate();
  return m;
}

void write_motion_json(const std::string& path, const GroupMotion& motion) {
  motion.validate();
  json j;
  j["format"] = "GDM1";
  j["frames"] = motion.frames;
  j["dancers"] = motion.dancers;
  j["dim"] = kPoseDim;
  j["fps"] = motion.fps;
  j["values"] = motion.values;
  dump_json(path, j);
}

GroupMotion read_motion_json(const std::string& path) {
  json j = load_json(path);
  try {
    if (j.at("format").get<std::string>() != "GDM1")
      throw IoError(path + ": bad magic, format key is not GDM1");
    if (j.at("dim").get<int>() != kPoseDim)
      throw IoError(path + ": header mismatch, pose dim " +
                    std::to_string(j.at("dim").get<int>()));
    GroupMotion m;
    m.frames = j.at("frames").get<int>();
    m.dancers = j.at("dancers").get<int>();
    m.fps = j.at("fps").get<double>();
    m.values = j.at("values").get<std::vector<double>>();
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_music_json(const std::string& path, const MusicTrack& music) {
  music.validate();
  json j;
  j["format"] = "GDMU";
  j["frames"] = music.frames;
  j["dim"] = music.dim;
  j["fps"] = music.fps;
  j["features"] = music.features;
  dump_json(path, j);
}

MusicTrack read_music_json(const std::string& path) {
  json j = load_json(path);
  try {
    if (j.at("format").get<std::string>() != "GDMU")
      throw IoError(path + ": bad magic, format key is not GDMU");
    MusicTrack m;
    m.frames = j.at("frames").get<int>();
    m.dim = j.at("dim").get<int>();
    m.fps = j.at("fps").get<double>();
    m.features = j.at("features").get<std::vector<double>>();
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

Skeleton read_skeleton_json(const std::string& path) {
  json j = load_json(path);
  try {
    auto parents = j.at("parents").get<std::vector<int>>();
    auto offsets = j.at("offsets").get<std::vector<std::vector<double>>>();
    if (parents.size() != kJoints || offsets.size() != kJoints)
      throw IoError(path + ": header mismatch, expected " + std::to_string(kJoints) + " joints");
    Skeleton s;
    for (int i = 0; i < kJoints; ++i) {
      s.parents[i] = parents[i];
      if (offsets[i].size() != 3) throw IoError(path + ": offset " + std::to_string(i) +
                                                " is not a 3-vector");
      for (int k = 0; k < 3; ++k) s.offsets[i][k] = offsets[i][k];
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace gdance
