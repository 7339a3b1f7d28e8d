#include "handuse/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace handuse {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

Corpus::Corpus(fs::path root, std::vector<Participant> participants, std::vector<Task> tasks)
    : root_(std::move(root)), participants_(std::move(participants)), tasks_(std::move(tasks)) {}

const Participant& Corpus::participant(std::string_view id) const {
  for (const auto& p : participants_)
    if (p.id == id) return p;
  fail("unknown participant '" + std::string(id) + "'");
}

const Task& Corpus::task(std::string_view id) const {
  for (const auto& t : tasks_)
    if (t.id == id) return t;
  fail("unknown task '" + std::string(id) + "'");
}

std::vector<const Task*> Corpus::tasks_of(std::string_view participant_id) const {
  std::vector<const Task*> out;
  for (const auto& t : tasks_)
    if (t.participant_id == participant_id) out.push_back(&t);
  return out;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

int parse_int(std::string_view s, const std::string& where) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail(where + ": expected integer, got '" + std::string(s) + "'");
  return v;
}

Box parse_box(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) fail(where + ": bbox must be [x,y,w,h]");
  int v[4];
  for (int i = 0; i < 4; ++i) {
    if (!j[i].is_number()) fail(where + ": bbox entries must be numbers");
    v[i] = static_cast<int>(std::lround(j[i].get<double>()));
  }
  if (v[2] < 0 || v[3] < 0) fail(where + ": negative box dimensions");
  return Box{v[0], v[1], v[2], v[3]};
}

bool by_frame_side(int fa, Side sa, int fb, Side sb) {
  return fa != fb ? fa < fb : static_cast<int>(sa) < static_cast<int>(sb);
}

bool is_frame_file(const fs::path& p) {
  const auto stem = p.stem().string();
  const auto ext = p.extension().string();
  if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") return false;
  return !stem.empty() && std::all_of(stem.begin(), stem.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

int count_frames(const fs::path& dir) {
  int n = 0;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && is_frame_file(entry.path())) ++n;
  return n;
}

class ManifestLoader {
 public:
  std::vector<Issue> issues;

  std::optional<Corpus> run(const fs::path& path) {
    json doc;
    try {
      doc = json::parse(read_file(path));
    } catch (const Error& e) {
      issues.push_back({ErrorKind::io, path.string(), e.what()});
      return std::nullopt;
    } catch (const json::exception& e) {
      issues.push_back({ErrorKind::validation, path.string(), std::string("malformed JSON: ") + e.what()});
      return std::nullopt;
    }
    const fs::path root = path.parent_path();
    if (!doc.is_object()) return schema(path.string(), "manifest must be a JSON object");

    std::vector<Participant> participants;
    const auto& jp = doc.value("participants", json::array());
    if (!jp.is_array() || jp.empty()) return schema(path.string(), "no participants");
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < jp.size(); ++i) {
      const std::string where = "participants[" + std::to_string(i) + "]";
      try {
        Participant p;
        p.id = jp.at(i).at("id").get<std::string>();
        p.affected_side = parse_side(jp.at(i).at("affected_side").get<std::string>());
        if (!seen.insert(p.id).second) fail("duplicate participant id '" + p.id + "'");
        participants.push_back(std::move(p));
      } catch (const std::exception& e) {
        issues.push_back({ErrorKind::validation, where, e.what()});
      }
    }

    std::vector<Task> tasks;
    const auto& jt = doc.value("tasks", json::array());
    if (!jt.is_array()) return schema(path.string(), "tasks must be an array");
    std::unordered_set<std::string> task_ids;
    for (std::size_t i = 0; i < jt.size(); ++i) {
      std::string where = "tasks[" + std::to_string(i) + "]";
      try {
        const auto& j = jt.at(i);
        Task t;
        t.id = j.at("id").get<std::string>();
        where = "task '" + t.id + "'";
        t.participant_id = j.at("participant_id").get<std::string>();
        t.dataset = parse_dataset(j.at("dataset").get<std::string>());
        t.kind = parse_task_kind(j.at("kind").get<std::string>());
        t.frames_dir = root / j.at("frames_dir").get<std::string>();
        t.fps = j.value("fps", 30.0);
        if (j.contains("resolution")) {
          const auto& r = j.at("resolution");
          if (!r.is_array() || r.size() != 2) fail("resolution must be [width,height]");
          t.resolution = FrameSize{r[0].get<int>(), r[1].get<int>()};
        }
        if (t.resolution.width <= 0 || t.resolution.height <= 0) fail("resolution must be positive");
        if (!(t.fps > 0)) fail("fps must be positive");
        t.detections_path = root / j.at("detections").get<std::string>();
        t.annotations_path = root / j.at("annotations").get<std::string>();
        if (j.contains("masks") && !j.at("masks").is_null()) t.masks_dir = root / j.at("masks").get<std::string>();

        if (!task_ids.insert(t.id).second) fail("duplicate task id");
        if (!seen.contains(t.participant_id)) fail("unknown participant '" + t.participant_id + "'");
        load_task_files(t, j, where);
        tasks.push_back(std::move(t));
      } catch (const Error& e) {
        issues.push_back({e.kind(), where, e.what()});
      } catch (const std::exception& e) {
        issues.push_back({ErrorKind::validation, where, e.what()});
      }
    }
    if (!issues.empty()) return std::nullopt;

    for (auto& p : participants)
      for (const auto& t : tasks)
        if (t.participant_id == p.id) p.datasets.insert(t.dataset);
    return Corpus(root, std::move(participants), std::move(tasks));
  }

 private:
  std::optional<Corpus> schema(const std::string& where, const std::string& what) {
    issues.push_back({ErrorKind::validation, where, what});
    return std::nullopt;
  }

  void load_task_files(Task& t, const json& j, const std::string& where) {
    if (!fs::is_directory(t.frames_dir)) fail_io("frames_dir '" + t.frames_dir.string() + "' does not exist");
    if (t.masks_dir && !fs::is_directory(*t.masks_dir)) fail_io("masks dir '" + t.masks_dir->string() + "' does not exist");
    t.frame_count = j.contains("frame_count") ? j.at("frame_count").get<int>() : count_frames(t.frames_dir);
    if (t.frame_count < 1) fail("task has no frames");

    t.detections = load_detections(t.detections_path, t.resolution);
    t.labels = load_annotations(t.annotations_path);

    for (const auto& d : t.detections)
      if (d.frame_index < 0 || d.frame_index >= t.frame_count)
        fail("detection frame " + std::to_string(d.frame_index) + " outside [0," + std::to_string(t.frame_count) + ")");
    for (const auto& l : t.labels) {
      const std::string at = " (frame " + std::to_string(l.frame_index) + ", " + std::string(to_string(l.side)) + ")";
      if (l.frame_index < 0 || l.frame_index >= t.frame_count) fail("annotation outside task frame range" + at);
      if (l.role != Role::none && t.kind != TaskKind::bimanual)
        fail("role label on " + std::string(to_string(t.kind)) + " task" + at);
      if (l.interaction && t.kind == TaskKind::negative) fail("interaction label on negative task" + at);
    }
    (void)where;
  }
};

std::string join_issues(const std::vector<Issue>& issues) {
  std::string msg;
  for (const auto& i : issues) {
    if (!msg.empty()) msg += "\n";
    msg += i.location + ": " + i.message;
  }
  return msg;
}

}  // namespace

Corpus load_manifest(const fs::path& path) {
  ManifestLoader loader;
  auto corpus = loader.run(path);
  if (!corpus) {
    const bool all_io = std::all_of(loader.issues.begin(), loader.issues.end(),
                                    [](const Issue& i) { return i.kind == ErrorKind::io; });
    throw Error(all_io ? ErrorKind::io : ErrorKind::validation, join_issues(loader.issues));
  }
  return std::move(*corpus);
}

std::vector<Issue> validate_manifest(const fs::path& path) {
  ManifestLoader loader;
  loader.run(path);
  return loader.issues;
}

std::vector<Detection> parse_detections(std::string_view text, FrameSize frame, const std::string& source) {
  std::vector<Detection> out;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      fail(where + ": malformed line");
    }
    try {
      Detection d;
      d.frame_index = j.at("frame").get<int>();
      d.side = parse_side(j.at("side").get<std::string>());
      const Box raw = parse_box(j.at("bbox"), where);
      d.bbox = clamp_to_frame(raw, frame);
      if (d.bbox.empty()) fail(where + ": box lies outside the frame");
      d.confidence = j.at("conf").get<double>();
      if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) fail(where + ": confidence outside [0,1]");
      if (j.contains("contact") && !j.at("contact").is_null())
        d.contact = parse_contact_state(j.at("contact").get<std::string>());
      if (j.contains("obj_bbox") && !j.at("obj_bbox").is_null())
        d.object_bbox = clamp_to_frame(parse_box(j.at("obj_bbox"), where), frame);
      out.push_back(d);
    } catch (const Error& e) {
      const std::string msg = e.what();
      fail(msg.rfind(where, 0) == 0 ? msg : where + ": " + msg);
    } catch (const json::exception& e) {
      fail(where + ": " + e.what());
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
    return by_frame_side(a.frame_index, a.side, b.frame_index, b.side);
  });
  return out;
}

std::vector<Detection> load_detections(const fs::path& path, FrameSize frame) {
  return parse_detections(read_file(path), frame, path.string());
}

std::vector<FrameLabel> parse_annotations(std::string_view text, const std::string& source) {
  std::vector<FrameLabel> out;
  std::size_t line_no = 0;
  bool header_seen = false;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto cols = split(line, ',');
    if (!header_seen) {
      if (cols.size() != 4 || cols[0] != "frame" || cols[1] != "side" || cols[2] != "interaction" || cols[3] != "role")
        fail(where + ": expected header 'frame,side,interaction,role'");
      header_seen = true;
      continue;
    }
    if (cols.size() != 4) fail(where + ": expected 4 columns");
    FrameLabel l;
    l.frame_index = parse_int(cols[0], where);
    try {
      l.side = parse_side(cols[1]);
      l.role = parse_role(cols[3]);
    } catch (const Error& e) {
      fail(where + ": " + e.what());
    }
    if (cols[2] == "1") l.interaction = true;
    else if (cols[2] == "0") l.interaction = false;
    else fail(where + ": interaction must be 0 or 1");
    if (l.role != Role::none && !l.interaction) fail(where + ": role without interaction");
    out.push_back(l);
  }
  if (!header_seen) fail(source + ": empty annotation file");
  std::sort(out.begin(), out.end(), [](const FrameLabel& a, const FrameLabel& b) {
    return by_frame_side(a.frame_index, a.side, b.frame_index, b.side);
  });
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].frame_index == out[i - 1].frame_index && out[i].side == out[i - 1].side)
      fail(source + ": duplicate label for frame " + std::to_string(out[i].frame_index) + " side " +
           std::string(to_string(out[i].side)));
  return out;
}

std::vector<FrameLabel> load_annotations(const fs::path& path) { return parse_annotations(read_file(path), path.string()); }

namespace {

ordered_json box_json(const Box& b) { return ordered_json::array({b.x, b.y, b.w, b.h}); }

std::string relative_to(const fs::path& p, const fs::path& base) {
  if (base.empty()) return p.generic_string();
  auto rel = p.lexically_normal().lexically_relative(base.lexically_normal());
  return rel.empty() ? p.generic_string() : rel.generic_string();
}

}  // namespace

std::string serialize_manifest(const Corpus& corpus, const fs::path& manifest_dir) {
  ordered_json doc;
  doc["participants"] = ordered_json::array();
  for (const auto& p : corpus.participants())
    doc["participants"].push_back({{"id", p.id}, {"affected_side", to_string(p.affected_side)}});
  doc["tasks"] = ordered_json::array();
  for (const auto& t : corpus.tasks()) {
    ordered_json j;
    j["id"] = t.id;
    j["participant_id"] = t.participant_id;
    j["dataset"] = to_string(t.dataset);
    j["kind"] = to_string(t.kind);
    j["frames_dir"] = relative_to(t.frames_dir, manifest_dir);
    j["frame_count"] = t.frame_count;
    j["fps"] = t.fps;
    j["resolution"] = {t.resolution.width, t.resolution.height};
    j["detections"] = relative_to(t.detections_path, manifest_dir);
    j["annotations"] = relative_to(t.annotations_path, manifest_dir);
    if (t.masks_dir) j["masks"] = relative_to(*t.masks_dir, manifest_dir);
    doc["tasks"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

std::string serialize_detections(const std::vector<Detection>& detections) {
  std::string out;
  for (const auto& d : detections) {
    ordered_json j;
    j["frame"] = d.frame_index;
    j["side"] = to_string(d.side);
    j["bbox"] = box_json(d.bbox);
    j["conf"] = d.confidence;
    if (d.contact) j["contact"] = to_string(*d.contact);
    if (d.object_bbox) j["obj_bbox"] = box_json(*d.object_bbox);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string serialize_annotations(const std::vector<FrameLabel>& labels) {
  std::string out = "frame,side,interaction,role\n";
  for (const auto& l : labels) {
    out += std::to_string(l.frame_index);
    out += ',';
    out += to_string(l.side);
    out += l.interaction ? ",1," : ",0,";
    out += to_string(l.role);
    out += '\n';
  }
  return out;
}

fs::path frame_path(const Task& task, int index) {
  char name[32];
  std::snprintf(name, sizeof name, "%06d.png", index);
  fs::path p = task.frames_dir / name;
  if (!fs::exists(p)) {
    std::snprintf(name, sizeof name, "%06d.jpg", index);
    const fs::path jpg = task.frames_dir / name;
    if (fs::exists(jpg)) return jpg;
  }
  return p;
}

fs::path mask_path(const Task& task, int index, Side side) {
  char name[48];
  std::snprintf(name, sizeof name, "%06d_%s.png", index, std::string(to_string(side)).c_str());
  return task.masks_dir.value_or(fs::path{}) / name;
}

LabelSummary summarize(const std::vector<FrameLabel>& labels) {
  LabelSummary s;
  for (const auto& l : labels) {
    ++s.frames;
    ++(l.interaction ? s.interaction : s.no_interaction);
    if (l.role == Role::manipulator) ++s.manipulator;
    if (l.role == Role::stabilizer) ++s.stabilizer;
  }
  return s;
}

HandCategory hand_category(const Participant& participant, Side side) noexcept {
  return side == participant.affected_side ? HandCategory::more_affected : HandCategory::less_affected;
}

std::vector<HandInstance> build_instances(const Corpus& corpus, const Task& task, Mode mode) {
  std::vector<HandInstance> out;
  if (mode == Mode::role && task.kind != TaskKind::bimanual) return out;
  const Participant& participant = corpus.participant(task.participant_id);

  auto det = task.detections.begin();
  for (const auto& label : task.labels) {
    if (mode == Mode::role && !label.interaction) continue;
    HandInstance inst;
    inst.task_id = task.id;
    inst.frame_index = label.frame_index;
    inst.side = label.side;
    inst.category = hand_category(participant, label.side);
    inst.label = label;

    // Both lists are sorted by (frame, side); advance a shared cursor.
    while (det != task.detections.end() && by_frame_side(det->frame_index, det->side, label.frame_index, label.side)) ++det;
    for (auto it = det; it != task.detections.end() && it->frame_index == label.frame_index && it->side == label.side; ++it)
      inst.candidates.push_back(*it);
    std::stable_sort(inst.candidates.begin(), inst.candidates.end(),
                     [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace handuse
