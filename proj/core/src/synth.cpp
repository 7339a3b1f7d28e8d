#include "handuse/synth.hpp"

#include <cmath>
#include <cstdio>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "handuse/hash.hpp"
#include "handuse/parallel.hpp"
#include "handuse/report.hpp"
#include "handuse/rng.hpp"

namespace handuse {
namespace fs = std::filesystem;
namespace {

struct TaskPlan {
  std::string suffix;
  Dataset dataset;
  TaskKind kind;
  int frames;
};

std::vector<TaskPlan> plans(const SynthConfig& c) {
  std::vector<TaskPlan> out = {{"home_bi1", Dataset::home, TaskKind::bimanual, c.bimanual_frames},
                               {"home_bi2", Dataset::home, TaskKind::bimanual, c.bimanual_frames},
                               {"home_neg", Dataset::home, TaskKind::negative, c.negative_frames},
                               {"home_uni", Dataset::home, TaskKind::unimanual, c.unimanual_frames}};
  if (c.homelab_frames > 0) out.push_back({"homelab_bi", Dataset::homelab, TaskKind::bimanual, c.homelab_frames});
  return out;
}

Box hand_box(int frame, Side side, FrameSize fs) {
  const int s = side == Side::left ? 0 : 1;
  const int w = fs.width * 13 / 72, h = fs.height * 10 / 27;
  const int base_x = s == 0 ? fs.width * 5 / 24 : fs.width * 5 / 8;
  const int base_y = fs.height * 17 / 40;
  Box b;
  b.x = base_x + static_cast<int>(std::lround(4 * std::sin(0.35 * frame + 1.3 * s)));
  b.y = base_y + static_cast<int>(std::lround(3 * std::cos(0.27 * frame + s)));
  b.w = w;
  b.h = h;
  return clamp_to_frame(b, fs);
}

FrameLabel plan_label(const TaskPlan& plan, int participant, int task_index, int frame, Side side, int block) {
  FrameLabel l;
  l.frame_index = frame;
  l.side = side;
  const int phase = (participant + task_index) % 3;
  const int b = frame / block + phase;
  switch (plan.kind) {
    case TaskKind::unimanual: {
      const Side active = participant % 2 == 0 ? Side::left : Side::right;
      l.interaction = side == active && b % 2 == 0;
      break;
    }
    case TaskKind::bimanual: {
      const int state = b % 3;
      if (state == 1) break;
      l.interaction = true;
      const bool left_manipulates = state == 0;
      l.role = (side == Side::left) == left_manipulates ? Role::manipulator : Role::stabilizer;
      break;
    }
    case TaskKind::negative: break;
  }
  return l;
}

std::string participant_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%02d", i + 1);
  return buf;
}

cv::Vec3b hsv_to_bgr(int h, int s, int v) {
  cv::Mat px(1, 1, CV_8UC3, cv::Scalar(h, s, v));
  cv::cvtColor(px, px, cv::COLOR_HSV2BGR);
  return px.at<cv::Vec3b>(0, 0);
}

/// Low-saturation grey blocks, wide enough to pan one pixel per frame.
cv::Mat background_texture(std::uint64_t seed, int width, int height) {
  Rng rng(seed);
  cv::Mat tex(height, width, CV_8UC3);
  constexpr int kCell = 8;
  for (int by = 0; by < height; by += kCell)
    for (int bx = 0; bx < width; bx += kCell) {
      const int grey = 70 + static_cast<int>(rng.below(101));
      const cv::Scalar c(grey + static_cast<int>(rng.below(9)) - 4, grey + static_cast<int>(rng.below(9)) - 4,
                         grey + static_cast<int>(rng.below(9)) - 4);
      cv::rectangle(tex, cv::Rect(bx, by, std::min(kCell, width - bx), std::min(kCell, height - by)), c, cv::FILLED);
    }
  return tex;
}

double hand_scale(Role role, int frame, Side side) {
  if (role != Role::manipulator) return 0.85;
  return 0.8 + 0.15 * std::sin(1.1 * frame + (side == Side::left ? 0.0 : 2.0));
}

void render_task(const Task& task, int participant, const SynthConfig& config) {
  const FrameSize fs = config.frame;
  fs::create_directories(task.frames_dir);
  if (task.masks_dir) fs::create_directories(*task.masks_dir);
  const cv::Mat tex = background_texture(splitmix64(config.seed ^ (0x5445580000000000ULL + participant)),
                                         fs.width + task.frame_count + 1, fs.height);
  const cv::Vec3b skin(static_cast<uchar>(110 + 5 * participant % 30), 150, 215);
  const cv::Vec3b object = hsv_to_bgr((105 + 12 * participant) % 180, 220, 190);
  const cv::Scalar object_dark(object[0] * 0.6, object[1] * 0.6, object[2] * 0.6);
  const std::vector<int> png = {cv::IMWRITE_PNG_COMPRESSION, 1};

  auto label_at = [&](int f, Side s) -> const FrameLabel* {
    for (const auto& l : task.labels)
      if (l.frame_index == f && l.side == s) return &l;
    return nullptr;
  };
  auto box_at = [&](int f, Side s) -> const Detection* {
    for (const auto& d : task.detections)
      if (d.frame_index == f && d.side == s) return &d;
    return nullptr;
  };

  for (int f = 0; f < task.frame_count; ++f) {
    cv::Mat img = tex(cv::Rect(f, 0, fs.width, fs.height)).clone();
    std::array<cv::Mat, 2> masks;
    for (Side side : {Side::left, Side::right}) {
      const FrameLabel* l = label_at(f, side);
      const Detection* d = box_at(f, side);
      auto& mask = masks[static_cast<std::size_t>(side)];
      mask = cv::Mat::zeros(fs.height, fs.width, CV_8UC1);
      if (!d) continue;
      const Box& b = d->bbox;
      const cv::Rect r(b.x, b.y, b.w, b.h);
      if (l && l->interaction) {
        cv::rectangle(img, r, cv::Scalar(object[0], object[1], object[2]), cv::FILLED);
        for (int y = b.y + 6; y < b.y + b.h; y += 14)
          cv::line(img, {b.x, y}, {b.x + b.w - 1, y}, object_dark, 3);
      }
      const double scale = hand_scale(l ? l->role : Role::none, f, side);
      const cv::Point centre(b.x + b.w / 2, b.y + b.h / 2);
      const cv::Size axes(static_cast<int>(std::lround(b.w * 0.34 * scale)),
                          static_cast<int>(std::lround(b.h * 0.40 * scale)));
      cv::ellipse(img, centre, axes, 0, 0, 360, cv::Scalar(skin[0], skin[1], skin[2]), cv::FILLED, cv::LINE_8);
      cv::ellipse(mask, centre, axes, 0, 0, 360, cv::Scalar(255), cv::FILLED, cv::LINE_8);
    }

    if (!cv::imwrite(frame_path(task, f).string(), img, png)) fail_io("cannot write frame for task " + task.id);
    if (task.masks_dir)
      for (Side side : {Side::left, Side::right})
        if (!cv::imwrite(mask_path(task, f, side).string(), masks[static_cast<std::size_t>(side)], png))
          fail_io("cannot write mask for task " + task.id);
  }
}

}  // namespace

Corpus synthetic_layout(const fs::path& root, const SynthConfig& config) {
  if (config.participants < 2) fail("synth: need at least 2 participants");
  if (config.block < 1) fail("synth: block must be positive");
  const auto task_plans = plans(config);
  for (const auto& p : task_plans)
    if (p.frames < 1) fail("synth: task frame counts must be positive");

  std::vector<Participant> participants;
  std::vector<Task> tasks;
  for (int p = 0; p < config.participants; ++p) {
    Participant part;
    part.id = participant_id(p);
    part.affected_side = p % 2 == 0 ? Side::left : Side::right;
    for (std::size_t ti = 0; ti < task_plans.size(); ++ti) {
      const auto& plan = task_plans[ti];
      Task t;
      t.id = part.id + "_" + plan.suffix;
      t.participant_id = part.id;
      t.dataset = plan.dataset;
      t.kind = plan.kind;
      t.frame_count = plan.frames;
      t.resolution = config.frame;
      const fs::path dir = root / part.id / t.id;
      t.frames_dir = dir / "frames";
      t.detections_path = dir / "detections.jsonl";
      t.annotations_path = dir / "annotations.csv";
      if (config.write_masks) t.masks_dir = dir / "masks";
      for (int f = 0; f < plan.frames; ++f)
        for (Side side : {Side::left, Side::right}) {
          const FrameLabel l = plan_label(plan, p, static_cast<int>(ti), f, side, config.block);
          Detection d;
          d.frame_index = f;
          d.side = side;
          d.bbox = hand_box(f, side, config.frame);
          d.confidence = side == Side::left ? 0.9 : 0.92;
          if (l.interaction) {
            d.contact = ContactState::portable_object;
            d.object_bbox = d.bbox;
          } else {
            d.contact = (f / config.block) % 2 == 0 ? ContactState::no_contact : ContactState::non_portable_object;
          }
          t.labels.push_back(l);
          t.detections.push_back(d);
        }
      part.datasets.insert(plan.dataset);
      tasks.push_back(std::move(t));
    }
    participants.push_back(std::move(part));
  }
  return Corpus(root, std::move(participants), std::move(tasks));
}

fs::path write_synthetic_corpus(const fs::path& root, const SynthConfig& config) {
  const Corpus corpus = synthetic_layout(root, config);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) fail_io("cannot create '" + root.string() + "': " + ec.message());

  const auto& tasks = corpus.tasks();
  parallel_for(tasks.size(), config.jobs, [&](std::size_t i) {
    const Task& t = tasks[i];
    const int participant = std::stoi(t.participant_id.substr(1)) - 1;
    render_task(t, participant, config);
    write_file_atomic(t.detections_path, serialize_detections(t.detections));
    write_file_atomic(t.annotations_path, serialize_annotations(t.labels));
  });
  const fs::path manifest = root / "manifest.json";
  write_file_atomic(manifest, serialize_manifest(corpus, root));
  return manifest;
}

}  // namespace handuse
