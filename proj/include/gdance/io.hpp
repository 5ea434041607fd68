#pragma once

#include <string>

#include "gdance/motion.hpp"

namespace gdance {

// Binary interchange formats, little-endian:
//   GDM1  magic "GDM1" | u32 frames | u32 dancers | u32 dim(=151) | f32 fps
//         | frames*dancers*dim float32, frame-major then dancer then channel
//   GDMU  magic "GDMU" | u32 frames | u32 dim | f32 fps | frames*dim float32
// Payload values are float32; doubles are projected on write.
void write_motion(const std::string& path, const GroupMotion& motion);
GroupMotion read_motion(const std::string& path);
void write_music(const std::string& path, const MusicTrack& music);
MusicTrack read_music(const std::string& path);

// JSON mirrors for inspection. Motion keys: format, frames, dancers, dim,
// fps, values (flat row-major). Music keys: format, frames, dim, fps,
// features (flat row-major).
void write_motion_json(const std::string& path, const GroupMotion& motion);
GroupMotion read_motion_json(const std::string& path);
void write_music_json(const std::string& path, const MusicTrack& music);
MusicTrack read_music_json(const std::string& path);

// Skeleton file: {"parents": [24 ints], "offsets": [[x,y,z] x 24]}.
Skeleton read_skeleton_json(const std::string& path);

}  // namespace gdance
