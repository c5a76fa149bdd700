#include "motif/bvh.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "motif/rotations.hpp"

namespace motif {

namespace {

struct Token {
  std::string text;
  int line;
};

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  int line = 1;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back({cur, line});
      cur.clear();
    }
  };
  for (char c : text) {
    if (c == '\n') {
      flush();
      ++line;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

class TokenStream {
 public:
  explicit TokenStream(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  bool done() const { return at_ >= tokens_.size(); }
  const Token& peek() const {
    require(!done(), "bvh: unexpected end of file");
    return tokens_[at_];
  }
  Token next() {
    require(!done(), "bvh: unexpected end of file");
    return tokens_[at_++];
  }
  Token expect(const std::string& what) {
    Token t = next();
    require(t.text == what, "bvh: line " + std::to_string(t.line) + ": expected '" + what +
                                "', got '" + t.text + "'");
    return t;
  }
  double number(const char* context) {
    Token t = next();
    try {
      std::size_t used = 0;
      const double v = std::stod(t.text, &used);
      require(used == t.text.size(), "");
      return v;
    } catch (...) {
      throw DataError("bvh: line " + std::to_string(t.line) + ": expected a number for " +
                      context + ", got '" + t.text + "'");
    }
  }

 private:
  std::vector<Token> tokens_;
  std::size_t at_ = 0;
};

const char* kPositionChannels[3] = {"Xposition", "Yposition", "Zposition"};
const char* kRotationChannels[3] = {"Xrotation", "Yrotation", "Zrotation"};

bool is_known_channel(const std::string& name) {
  for (const char* c : kPositionChannels)
    if (name == c) return true;
  for (const char* c : kRotationChannels)
    if (name == c) return true;
  return false;
}

// Recursive joint block: OFFSET, CHANNELS, nested JOINT / End Site.
void parse_joint(TokenStream& ts, BvhDocument& doc, int parent, const std::string& name) {
  Joint joint;
  joint.name = name;
  joint.parent = parent;
  ts.expect("{");
  ts.expect("OFFSET");
  for (int i = 0; i < 3; ++i) joint.offset[i] = ts.number("OFFSET");

  std::vector<std::string> channels;
  if (ts.peek().text == "CHANNELS") {
    const Token t = ts.next();
    const int n = static_cast<int>(ts.number("CHANNELS count"));
    std::string rot_order;
    for (int i = 0; i < n; ++i) {
      Token c = ts.next();
      require(is_known_channel(c.text), "bvh: line " + std::to_string(c.line) +
                                            ": unsupported channel name '" + c.text + "'");
      if (c.text.find("rotation") != std::string::npos) rot_order.push_back(c.text[0]);
      channels.push_back(c.text);
    }
    require(rot_order.empty() || rot_order.size() == 3,
            "bvh: line " + std::to_string(t.line) + ": joint '" + name + "' declares " +
                std::to_string(rot_order.size()) + " rotation channels, expected 0 or 3");
    joint.rotation_order = rot_order;
  }
  require(!joint.rotation_order.empty(),
          "bvh: joint '" + name + "' has no rotation channels");

  const int self = doc.skeleton.joint_count();
  doc.skeleton.joints.push_back(joint);
  doc.joint_channels.push_back(channels);

  while (true) {
    Token t = ts.next();
    if (t.text == "}") break;
    if (t.text == "JOINT") {
      parse_joint(ts, doc, self, ts.next().text);
    } else if (t.text == "End") {
      ts.expect("Site");
      ts.expect("{");
      ts.expect("OFFSET");
      Joint end;
      end.name = name + "_End";
      end.parent = self;
      end.is_end_site = true;
      for (int i = 0; i < 3; ++i) end.offset[i] = ts.number("OFFSET");
      ts.expect("}");
      doc.skeleton.joints.push_back(end);
      doc.joint_channels.push_back({});
    } else {
      throw DataError("bvh: line " + std::to_string(t.line) + ": unexpected token '" +
                      t.text + "' inside joint '" + name + "'");
    }
  }
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

BvhDocument parse_bvh(const std::string& text) {
  TokenStream ts(tokenize(text));
  BvhDocument doc;

  ts.expect("HIERARCHY");
  Token root_kw = ts.next();
  require(root_kw.text == "ROOT", "bvh: line " + std::to_string(root_kw.line) +
                                      ": expected 'ROOT', got '" + root_kw.text + "'");
  parse_joint(ts, doc, -1, ts.next().text);

  ts.expect("MOTION");
  Token frames_kw = ts.next();
  require(frames_kw.text == "Frames:" || frames_kw.text == "Frames",
          "bvh: line " + std::to_string(frames_kw.line) + ": expected 'Frames:'");
  if (frames_kw.text == "Frames") ts.expect(":");
  const auto declared = static_cast<Eigen::Index>(ts.number("frame count"));
  ts.expect("Frame");
  Token time_kw = ts.next();
  require(time_kw.text == "Time:" || time_kw.text == "Time",
          "bvh: line " + std::to_string(time_kw.line) + ": expected 'Frame Time:'");
  if (time_kw.text == "Time") ts.expect(":");
  const double frame_time = ts.number("frame time");
  require(frame_time > 0, "bvh: frame time must be positive");
  // Snap to millihertz so rates like 30 or 29.97 survive the text round trip.
  doc.fps = std::round(1000.0 / frame_time) / 1000.0;
  if (doc.fps <= 0) doc.fps = 1.0 / frame_time;

  const Eigen::Index cols = doc.channel_count();
  std::vector<double> values;
  while (!ts.done()) values.push_back(ts.number("frame data"));
  require(static_cast<Eigen::Index>(values.size()) % cols == 0,
          "bvh: frame data holds " + std::to_string(values.size()) +
              " values, not a multiple of the " + std::to_string(cols) +
              " declared channels");
  const Eigen::Index present = static_cast<Eigen::Index>(values.size()) / cols;
  require(present == declared, "bvh: declared " + std::to_string(declared) +
                                   " frames but found " + std::to_string(present));
  require(present >= 1, "bvh: no frames");

  doc.frames.resize(present, cols);
  for (Eigen::Index i = 0; i < present; ++i)
    for (Eigen::Index c = 0; c < cols; ++c)
      doc.frames(i, c) = values[static_cast<std::size_t>(i * cols + c)];

  doc.skeleton.validate();
  return doc;
}

BvhDocument parse_bvh_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "bvh: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_bvh(ss.str());
}

namespace {

void write_joint(std::string& out, const MotionSequence& m,
                 const std::vector<std::vector<int>>& children, int j, int depth) {
  const auto& joint = m.skeleton.joints[static_cast<std::size_t>(j)];
  const std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  char buf[160];

  if (joint.is_end_site) {
    std::snprintf(buf, sizeof buf, "%sEnd Site\n%s{\n%s  OFFSET %.6f %.6f %.6f\n%s}\n",
                  indent.c_str(), indent.c_str(), indent.c_str(), joint.offset[0],
                  joint.offset[1], joint.offset[2], indent.c_str());
    out += buf;
    return;
  }

  const std::string order = joint.rotation_order.empty() ? "ZYX" : joint.rotation_order;
  out += indent + (joint.parent < 0 ? "ROOT " : "JOINT ") + joint.name + "\n";
  out += indent + "{\n";
  std::snprintf(buf, sizeof buf, "%s  OFFSET %.6f %.6f %.6f\n", indent.c_str(),
                joint.offset[0], joint.offset[1], joint.offset[2]);
  out += buf;
  if (joint.parent < 0) {
    out += indent + "  CHANNELS 6 Xposition Yposition Zposition";
  } else {
    out += indent + "  CHANNELS 3";
  }
  for (char a : order) out += std::string(" ") + a + "rotation";
  out += "\n";

  if (children[static_cast<std::size_t>(j)].empty()) {
    // BVH leaves need an End Site block; synthesize one if the skeleton has none.
    std::snprintf(buf, sizeof buf, "%s  End Site\n%s  {\n%s    OFFSET 0.000000 0.000000 0.000000\n%s  }\n",
                  indent.c_str(), indent.c_str(), indent.c_str(), indent.c_str());
    out += buf;
  } else {
    for (int c : children[static_cast<std::size_t>(j)])
      write_joint(out, m, children, c, depth + 1);
  }
  out += indent + "}\n";
}

}  // namespace

std::string write_bvh(const MotionSequence& m) {
  require(m.layout.kind == LayoutKind::GanimatorStyle,
          "write_bvh: GanimatorStyle layout required");
  require(m.dynamics.values().isFinite().all(), "write_bvh: non-finite feature values");
  m.skeleton.validate();

  const int j_all = m.skeleton.joint_count();
  std::vector<std::vector<int>> children(static_cast<std::size_t>(j_all));
  for (int j = 1; j < j_all; ++j)
    children[static_cast<std::size_t>(m.skeleton.joints[static_cast<std::size_t>(j)].parent)]
        .push_back(j);

  std::string out = "HIERARCHY\n";
  write_joint(out, m, children, 0, 0);

  char buf[96];
  out += "MOTION\n";
  std::snprintf(buf, sizeof buf, "Frames: %lld\n", static_cast<long long>(m.frames()));
  out += buf;
  std::snprintf(buf, sizeof buf, "Frame Time: %.8f\n", 1.0 / m.fps);
  out += buf;

  std::vector<int> slot(static_cast<std::size_t>(j_all), -1);
  {
    int at = 0;
    for (int j = 0; j < j_all; ++j)
      if (!m.skeleton.joints[static_cast<std::size_t>(j)].is_end_site)
        slot[static_cast<std::size_t>(j)] = at++;
  }

  const Eigen::Index f = m.layout.features;
  for (Eigen::Index n = 0; n < m.frames(); ++n) {
    const float* row = m.dynamics.data() + n * f;
    std::string line;
    auto emit = [&](double v) {
      std::snprintf(buf, sizeof buf, line.empty() ? "%.6f" : " %.6f", v);
      line += buf;
    };
    for (int j = 0; j < j_all; ++j) {
      const auto& joint = m.skeleton.joints[static_cast<std::size_t>(j)];
      if (joint.is_end_site) continue;
      if (joint.parent < 0)
        for (int e = 0; e < 3; ++e) emit(row[e]);
      Vec6d r6;
      const Eigen::Index base = 3 + slot[static_cast<std::size_t>(j)] * 6;
      for (int e = 0; e < 6; ++e) r6[e] = row[base + e];
      const std::string order = joint.rotation_order.empty() ? "ZYX" : joint.rotation_order;
      const Eigen::Vector3d angles = matrix_to_euler(rotation_6d_to_matrix(r6), order);
      for (int e = 0; e < 3; ++e) emit(angles[e] * kDegPerRad);
    }
    out += line + "\n";
  }
  return out;
}

void write_bvh_file(const MotionSequence& motion, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "bvh: cannot write '" + path + "'");
  const std::string text = write_bvh(motion);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  require(out.good(), "bvh: failed writing '" + path + "'");
}

MotionSequence motion_from_bvh(const BvhDocument& doc,
                               const std::vector<std::string>& contact_joint_names,
                               double contact_eps) {
  MotionSequence m;
  m.skeleton = doc.skeleton;
  m.fps = doc.fps;

  m.skeleton.contact_joints.clear();
  if (!contact_joint_names.empty()) {
    for (const auto& name : contact_joint_names) {
      const int idx = m.skeleton.index_of(name);
      require(idx >= 0, "bvh: contact joint '" + name + "' not found in skeleton");
      m.skeleton.contact_joints.push_back(idx);
    }
  } else {
    for (int j = 0; j < m.skeleton.joint_count(); ++j) {
      const auto& joint = m.skeleton.joints[static_cast<std::size_t>(j)];
      if (joint.is_end_site) continue;
      const std::string n = lower(joint.name);
      if (n.find("foot") != std::string::npos || n.find("toe") != std::string::npos ||
          n.find("ankle") != std::string::npos)
        m.skeleton.contact_joints.push_back(j);
    }
  }

  m.layout = FeatureLayout::ganimator(m.skeleton);
  const Eigen::Index n_frames = doc.frames.rows();
  m.dynamics = Tensor<float>({n_frames, m.layout.features});

  for (Eigen::Index n = 0; n < n_frames; ++n) {
    float* row = m.dynamics.data() + n * m.layout.features;
    Eigen::Index col = 0;
    int slot = 0;
    for (int j = 0; j < m.skeleton.joint_count(); ++j) {
      const auto& joint = m.skeleton.joints[static_cast<std::size_t>(j)];
      const auto& channels = doc.joint_channels[static_cast<std::size_t>(j)];
      Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
      Eigen::Vector3d pos = Eigen::Vector3d::Zero();
      for (const auto& ch : channels) {
        const double v = doc.frames(n, col++);
        if (ch == "Xposition") pos[0] = v;
        else if (ch == "Yposition") pos[1] = v;
        else if (ch == "Zposition") pos[2] = v;
        else rot = rot * axis_rotation(ch[0] - 'X', v * kRadPerDeg);
      }
      if (joint.is_end_site) continue;
      if (joint.parent < 0)
        for (int e = 0; e < 3; ++e) row[e] = static_cast<float>(pos[e]);
      const Vec6d r6 = matrix_to_6d(rot);
      for (int e = 0; e < 6; ++e) row[3 + slot * 6 + e] = static_cast<float>(r6[e]);
      ++slot;
    }
  }

  if (!m.skeleton.contact_joints.empty() && n_frames >= 2) {
    if (contact_eps < 0) contact_eps = default_contact_threshold(m.skeleton, m.fps);
    bake_contact_labels(m, contact_eps);
  }
  m.validate();
  return m;
}

}  // namespace motif
