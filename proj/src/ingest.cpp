#include "egoact/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace egoact {

namespace {

using ojson = nlohmann::ordered_json;

std::string at_line(int lineno) { return " (line " + std::to_string(lineno) + ")"; }

ojson parse_json_line(const std::string& line, int lineno) {
  ojson j = ojson::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw FormatError("malformed JSON object" + at_line(lineno));
  }
  return j;
}

// Strict schema: every listed key present, nothing else.
void require_exact_keys(const ojson& j, std::initializer_list<const char*> keys, int lineno) {
  for (const char* k : keys) {
    if (!j.contains(k)) {
      throw FormatError(std::string("missing key \"") + k + "\"" + at_line(lineno));
    }
  }
  if (j.size() != keys.size()) {
    for (const auto& item : j.items()) {
      if (std::find_if(keys.begin(), keys.end(), [&](const char* k) {
            return item.key() == k;
          }) == keys.end()) {
        throw FormatError("unknown key \"" + item.key() + "\"" + at_line(lineno));
      }
    }
  }
}

int int_field(const ojson& j, const char* key, int lineno) {
  const auto& v = j.at(key);
  if (!v.is_number_integer()) {
    throw FormatError(std::string("key \"") + key + "\" must be an integer" + at_line(lineno));
  }
  return v.get<int>();
}

std::vector<double> number_array(const ojson& v, const char* key, size_t expected, int lineno) {
  if (!v.is_array() || v.size() != expected) {
    throw FormatError(std::string("key \"") + key + "\" must be an array of " +
                      std::to_string(expected) + " numbers" + at_line(lineno));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& e : v) {
    if (!e.is_number()) {
      throw FormatError(std::string("key \"") + key + "\" contains a non-numeric entry" +
                        at_line(lineno));
    }
    out.push_back(e.get<double>());
  }
  return out;
}

struct Header {
  int width = 0;
  int height = 0;
  int num_frames = 0;
};

Header parse_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("empty stream, expected header line");
  }
  ojson j = parse_json_line(line, 1);
  require_exact_keys(j, {"version", "width", "height", "num_frames"}, 1);
  int version = int_field(j, "version", 1);
  if (version != 1) {
    throw FormatError("unsupported version " + std::to_string(version) + at_line(1));
  }
  Header h;
  h.width = int_field(j, "width", 1);
  h.height = int_field(j, "height", 1);
  h.num_frames = int_field(j, "num_frames", 1);
  if (h.width <= 0 || h.height <= 0) {
    throw FormatError("width/height must be positive" + at_line(1));
  }
  if (h.num_frames == 0) {
    throw FormatError("empty sequence: num_frames is 0" + at_line(1));
  }
  if (h.num_frames < 0) {
    throw FormatError("num_frames must be positive" + at_line(1));
  }
  return h;
}

std::string next_frame_line(std::istream& in, int frame, int num_frames, int lineno) {
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("expected " + std::to_string(num_frames) + " frame lines, got " +
                      std::to_string(frame) + at_line(lineno));
  }
  return line;
}

void expect_end(std::istream& in, int num_frames) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      throw FormatError("trailing content after " + std::to_string(num_frames) + " frame lines");
    }
  }
}

ojson header_json(int width, int height, int num_frames) {
  ojson j;
  j["version"] = 1;
  j["width"] = width;
  j["height"] = height;
  j["num_frames"] = num_frames;
  return j;
}

ojson hand2d_json(const HandPose2D& h) {
  if (!h.valid) return nullptr;
  ojson a = ojson::array();
  for (const Vec2& p : h.joints) {
    a.push_back(p.x);
    a.push_back(p.y);
  }
  return a;
}

HandPose2D hand2d_from(const ojson& v, const char* key, int lineno) {
  HandPose2D h;
  if (v.is_null()) return h;  // absent hand: all zeros, valid=false
  std::vector<double> vals = number_array(v, key, 2 * kHandJointCount, lineno);
  h.valid = true;
  for (int i = 0; i < kHandJointCount; ++i) {
    h.joints[i] = {vals[2 * i], vals[2 * i + 1]};
  }
  return h;
}

ojson hand3d_json(const HandPose3D& h) {
  if (!h.valid) return nullptr;
  ojson a = ojson::array();
  for (const Vec3& p : h.joints) {
    a.push_back(p.x);
    a.push_back(p.y);
    a.push_back(p.z);
  }
  return a;
}

HandPose3D hand3d_from(const ojson& v, const char* key, int lineno) {
  HandPose3D h;
  if (v.is_null()) return h;
  std::vector<double> vals = number_array(v, key, 3 * kHandJointCount, lineno);
  h.valid = true;
  for (int i = 0; i < kHandJointCount; ++i) {
    h.joints[i] = {vals[3 * i], vals[3 * i + 1], vals[3 * i + 2]};
  }
  return h;
}

void validate_canonical_box(const ObjectPose2D& box, int lineno) {
  const auto& c = box.corners;
  bool axis_aligned = c[0].y == c[1].y && c[3].y == c[2].y && c[0].x == c[3].x && c[1].x == c[2].x;
  bool ordered = c[0].x <= c[1].x && c[0].y <= c[3].y;
  if (!axis_aligned || !ordered) {
    throw FormatError("obj_bbox is not a canonical axis-aligned TL,TR,BR,BL box" + at_line(lineno));
  }
}

}  // namespace

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw FormatError("unknown split \"" + s + "\" (expected train, val or test)");
}

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  throw Error("unreachable split value");
}

const std::vector<SequenceRecord>& Dataset::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  throw Error("unreachable split value");
}

CameraIntrinsics parse_intrinsics(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("intrinsics: empty stream");
  }
  std::istringstream fields(line);
  double fx, fy, cx, cy;
  long long w, h;
  if (!(fields >> fx >> fy >> cx >> cy >> w >> h)) {
    throw FormatError("intrinsics: expected `fx fy cx cy width height`, got \"" + line + "\"");
  }
  std::string extra;
  if (fields >> extra) {
    throw FormatError("intrinsics: trailing content \"" + extra + "\" in \"" + line + "\"");
  }
  CameraIntrinsics cam{fx, fy, cx, cy, static_cast<int>(w), static_cast<int>(h)};
  try {
    cam.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string(e.what()) + " in \"" + line + "\"");
  }
  return cam;
}

SequenceRecord parse_sequence_2d(std::istream& in) {
  Header h = parse_header(in);
  SequenceRecord rec;
  rec.frames.reserve(static_cast<size_t>(h.num_frames));
  for (int f = 0; f < h.num_frames; ++f) {
    int lineno = f + 2;
    std::string line = next_frame_line(in, f, h.num_frames, lineno);
    ojson j = parse_json_line(line, lineno);
    require_exact_keys(j, {"left", "right", "obj_bbox", "obj_label"}, lineno);
    FramePose frame;
    frame.width = h.width;
    frame.height = h.height;
    frame.left = hand2d_from(j.at("left"), "left", lineno);
    frame.right = hand2d_from(j.at("right"), "right", lineno);
    std::vector<double> bb = number_array(j.at("obj_bbox"), "obj_bbox", 8, lineno);
    for (int i = 0; i < kBoxCornerCount2D; ++i) {
      frame.object.corners[i] = {bb[2 * i], bb[2 * i + 1]};
    }
    frame.object.label = int_field(j, "obj_label", lineno);
    if (frame.object.label < 0) {
      throw FormatError("obj_label must be >= 0" + at_line(lineno));
    }
    validate_canonical_box(frame.object, lineno);
    rec.frames.push_back(frame);
  }
  expect_end(in, h.num_frames);
  return rec;
}

void write_sequence_2d(std::ostream& out, const SequenceRecord& rec) {
  if (rec.frames.empty()) {
    throw FormatError("cannot write an empty sequence");
  }
  int width = rec.frames.front().width;
  int height = rec.frames.front().height;
  out << header_json(width, height, static_cast<int>(rec.frames.size())).dump() << '\n';
  for (const FramePose& frame : rec.frames) {
    ojson j;
    j["left"] = hand2d_json(frame.left);
    j["right"] = hand2d_json(frame.right);
    ojson bb = ojson::array();
    for (const Vec2& c : frame.object.corners) {
      bb.push_back(c.x);
      bb.push_back(c.y);
    }
    j["obj_bbox"] = bb;
    j["obj_label"] = frame.object.label;
    out << j.dump() << '\n';
  }
}

RawSequence3D parse_sequence_3d(std::istream& in) {
  Header h = parse_header(in);
  RawSequence3D seq;
  seq.width = h.width;
  seq.height = h.height;
  seq.frames.reserve(static_cast<size_t>(h.num_frames));
  for (int f = 0; f < h.num_frames; ++f) {
    int lineno = f + 2;
    std::string line = next_frame_line(in, f, h.num_frames, lineno);
    ojson j = parse_json_line(line, lineno);
    require_exact_keys(j, {"left3d", "right3d", "obj_corners3d", "obj_label"}, lineno);
    Raw3DFrame frame;
    frame.left = hand3d_from(j.at("left3d"), "left3d", lineno);
    frame.right = hand3d_from(j.at("right3d"), "right3d", lineno);
    std::vector<double> cs = number_array(j.at("obj_corners3d"), "obj_corners3d", 24, lineno);
    for (int i = 0; i < kBoxCornerCount3D; ++i) {
      frame.object.corners[i] = {cs[3 * i], cs[3 * i + 1], cs[3 * i + 2]};
    }
    frame.object.label = int_field(j, "obj_label", lineno);
    if (frame.object.label < 0) {
      throw FormatError("obj_label must be >= 0" + at_line(lineno));
    }
    seq.frames.push_back(frame);
  }
  expect_end(in, h.num_frames);
  return seq;
}

void write_sequence_3d(std::ostream& out, const RawSequence3D& seq) {
  if (seq.frames.empty()) {
    throw FormatError("cannot write an empty sequence");
  }
  out << header_json(seq.width, seq.height, static_cast<int>(seq.frames.size())).dump() << '\n';
  for (const Raw3DFrame& frame : seq.frames) {
    ojson j;
    j["left3d"] = hand3d_json(frame.left);
    j["right3d"] = hand3d_json(frame.right);
    ojson cs = ojson::array();
    for (const Vec3& c : frame.object.corners) {
      cs.push_back(c.x);
      cs.push_back(c.y);
      cs.push_back(c.z);
    }
    j["obj_corners3d"] = cs;
    j["obj_label"] = frame.object.label;
    out << j.dump() << '\n';
  }
}

std::vector<FramePose> project_sequence(const RawSequence3D& raw, const CameraIntrinsics& cam) {
  cam.validate();
  std::vector<FramePose> frames;
  frames.reserve(raw.frames.size());
  for (size_t f = 0; f < raw.frames.size(); ++f) {
    const Raw3DFrame& r = raw.frames[f];
    try {
      FramePose out;
      out.width = cam.width;
      out.height = cam.height;
      out.left = project_hand(r.left, cam);
      out.right = project_hand(r.right, cam);
      std::array<Vec2, kBoxCornerCount3D> projected;
      for (int i = 0; i < kBoxCornerCount3D; ++i) {
        projected[i] = project_point(r.object.corners[i], cam);
      }
      out.object = bbox_from_corners(projected, r.object.label);
      frames.push_back(out);
    } catch (const GeometryError& e) {
      throw GeometryError("frame " + std::to_string(f) + ": " + e.what());
    }
  }
  return frames;
}

Manifest parse_manifest(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("manifest: empty stream");
  }
  if (!line.empty() && line.back() == '\r') {
    throw FormatError("manifest: CRLF line endings are not supported, use LF");
  }
  if (line != "sequence_path,action_id,split") {
    throw FormatError("manifest: bad header \"" + line +
                      "\", expected \"sequence_path,action_id,split\"");
  }
  Manifest m;
  std::unordered_set<std::string> seen;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.back() == '\r') {
      throw FormatError("manifest: CRLF line endings are not supported, use LF" + at_line(lineno));
    }
    size_t c1 = line.find(',');
    size_t c2 = (c1 == std::string::npos) ? std::string::npos : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos ||
        line.find(',', c2 + 1) != std::string::npos) {
      throw FormatError("manifest: expected 3 comma-separated fields" + at_line(lineno));
    }
    ManifestEntry e;
    e.sequence_path = line.substr(0, c1);
    if (e.sequence_path.empty()) {
      throw FormatError("manifest: empty sequence_path" + at_line(lineno));
    }
    std::string id_str = line.substr(c1 + 1, c2 - c1 - 1);
    try {
      size_t pos = 0;
      e.action_id = std::stoi(id_str, &pos);
      if (pos != id_str.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError("manifest: bad action_id \"" + id_str + "\"" + at_line(lineno));
    }
    if (e.action_id < 0) {
      throw FormatError("manifest: action_id must be >= 0" + at_line(lineno));
    }
    try {
      e.split = parse_split(line.substr(c2 + 1));
    } catch (const FormatError& err) {
      throw FormatError("manifest: " + std::string(err.what()) + at_line(lineno));
    }
    if (!seen.insert(e.sequence_path).second) {
      throw FormatError("manifest: duplicate path \"" + e.sequence_path + "\"" + at_line(lineno));
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(std::ostream& out, const Manifest& manifest) {
  out << "sequence_path,action_id,split\n";
  for (const ManifestEntry& e : manifest.entries) {
    out << e.sequence_path << ',' << e.action_id << ',' << split_name(e.split) << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& manifest_path,
                     const std::filesystem::path& root_dir,
                     std::optional<int> num_classes) {
  std::ifstream mf(manifest_path);
  if (!mf) {
    throw IoError("cannot open manifest " + manifest_path.string());
  }
  Manifest manifest;
  try {
    manifest = parse_manifest(mf);
  } catch (const FormatError& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }

  Dataset ds;
  int max_action = -1;
  for (const ManifestEntry& e : manifest.entries) {
    std::filesystem::path p = root_dir / e.sequence_path;
    std::ifstream f(p);
    if (!f) {
      throw IoError("cannot open sequence file " + p.string());
    }
    SequenceRecord rec;
    try {
      rec = parse_sequence_2d(f);
    } catch (const FormatError& err) {
      throw FormatError(p.string() + ": " + err.what());
    }
    rec.action_id = e.action_id;
    rec.source_id = e.sequence_path;
    if (num_classes && e.action_id >= *num_classes) {
      throw FormatError("manifest entry " + e.sequence_path + " has action_id " +
                        std::to_string(e.action_id) + " >= num_classes " +
                        std::to_string(*num_classes));
    }
    max_action = std::max(max_action, e.action_id);
    switch (e.split) {
      case Split::Train: ds.train.push_back(std::move(rec)); break;
      case Split::Val: ds.val.push_back(std::move(rec)); break;
      case Split::Test: ds.test.push_back(std::move(rec)); break;
    }
  }
  ds.num_classes = num_classes ? *num_classes : max_action + 1;
  return ds;
}

}  // namespace egoact
