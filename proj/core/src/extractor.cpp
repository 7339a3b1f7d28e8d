#include "handuse/extractor.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "handuse/hash.hpp"
#include "json.hpp"

namespace handuse {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

ExtractionStats& ExtractionStats::operator+=(const ExtractionStats& o) {
  tasks_computed += o.tasks_computed;
  tasks_reused += o.tasks_reused;
  vectors += o.vectors;
  empty_masks += o.empty_masks;
  empty_regions += o.empty_regions;
  if (!mask_source) mask_source = o.mask_source;
  return *this;
}

namespace {

/// Sliding window of decoded frames plus per-frame derived bin maps.
class FrameWindow {
 public:
  FrameWindow(const Task& task, const FeatureConfig& config) : task_(task), config_(config) {}

  const cv::Mat& frame(int index) {
    auto it = frames_.find(index);
    if (it != frames_.end()) return it->second;
    cv::Mat img = cv::imread(frame_path(task_, index).string(), cv::IMREAD_COLOR);
    if (img.empty()) fail_io("task '" + task_.id + "': unreadable frame " + frame_path(task_, index).string());
    if (img.cols != task_.resolution.width || img.rows != task_.resolution.height)
      fail("task '" + task_.id + "': frame " + std::to_string(index) + " is " + std::to_string(img.cols) + "x" +
           std::to_string(img.rows) + ", manifest says " + std::to_string(task_.resolution.width) + "x" +
           std::to_string(task_.resolution.height));
    return frames_.emplace(index, std::move(img)).first->second;
  }

  /// Drop frames and maps that no instance at or after `index` can need.
  void advance_to(int index) {
    frames_.erase(frames_.begin(), frames_.lower_bound(index - 1));
    if (derived_index_ != index) {
      hsv_.reset();
      flow_.reset();
    }
  }

  const HsvBinMap& hsv(int index) {
    prepare(index);
    if (!hsv_) hsv_ = compute_hsv_bins(frame(index), config_.hsv_bins);
    return *hsv_;
  }

  const FlowBinMap& flow(int index) {
    prepare(index);
    if (!flow_) {
      const cv::Mat prev = index > 0 ? frame(index - 1) : cv::Mat();
      flow_ = compute_flow_bins(dense_flow(prev, frame(index), config_.flow), config_);
    }
    return *flow_;
  }

 private:
  void prepare(int index) {
    if (derived_index_ != index) {
      hsv_.reset();
      flow_.reset();
      derived_index_ = index;
    }
  }

  const Task& task_;
  const FeatureConfig& config_;
  std::map<int, cv::Mat> frames_;
  int derived_index_ = -1;
  std::optional<HsvBinMap> hsv_;
  std::optional<FlowBinMap> flow_;
};

}  // namespace

std::vector<ExtractedInstance> extract_task(const Corpus& corpus, const Task& task, Mode mode,
                                            const FeatureConfig& config, ExtractionStats* stats) {
  ExtractionStats local;
  auto instances = build_instances(corpus, task, mode);
  const auto provider = make_mask_provider(task, config.masks);
  local.mask_source = provider->source();
  FrameWindow window(task, config);

  std::vector<ExtractedInstance> out;
  out.reserve(instances.size());
  for (auto& inst : instances) {
    ExtractedInstance ex;
    if (inst.has_detection()) {
      const int f = inst.frame_index;
      window.advance_to(f);
      const cv::Mat& frame = window.frame(f);
      for (const auto& cand : inst.candidates) {
        const HandMask mask = provider->mask(f, inst.side, cand.bbox, frame);
        if (mask.empty()) ++local.empty_masks;
        const RegionSet regions(mask, task.resolution, config.background_dilation);

        FeatureComponents comps;
        comps.hsv = hsv_region_histograms(window.hsv(f), regions);
        comps.flow = flow_region_histograms(window.flow(f), regions);
        comps.hog = hog_descriptor(frame, cand.bbox, config.hog);
        if (comps.hsv->empty_region || comps.flow->empty_region) ++local.empty_regions;
        if (mode == Mode::role) {
          std::vector<long long> areas{mask.area};
          for (int k = 1; k < config.size_change_frames && f + k < task.frame_count; ++k) {
            if (!provider->available(f + k, inst.side)) break;
            areas.push_back(provider->mask(f + k, inst.side, cand.bbox, window.frame(f + k)).area);
          }
          comps.size_change = hand_size_change(areas, cand.bbox.area(), config.size_change_frames);
        }
        ex.vectors.push_back(assemble(mode, comps, config));
        ++local.vectors;
      }
    }
    ex.instance = std::move(inst);
    out.push_back(std::move(ex));
  }
  local.tasks_computed = 1;
  if (stats) *stats += local;
  return out;
}

std::uint64_t task_fingerprint(const Task& task) {
  return Fnv1a()
      .add("task/v1")
      .add(task.id)
      .add(to_string(task.kind))
      .add(static_cast<std::uint64_t>(task.frame_count))
      .add(static_cast<std::uint64_t>(task.resolution.width))
      .add(static_cast<std::uint64_t>(task.resolution.height))
      .add(serialize_detections(task.detections))
      .add(serialize_annotations(task.labels))
      .value();
}

FeatureCache::FeatureCache(fs::path dir) : dir_(std::move(dir)) {}

fs::path FeatureCache::file_for(const Task& task, Mode mode) const {
  return dir_ / (task.id + "." + std::string(to_string(mode)) + ".features.jsonl");
}

std::optional<std::vector<ExtractedInstance>> FeatureCache::load(const Corpus& corpus, const Task& task, Mode mode,
                                                                 const FeatureConfig& config,
                                                                 ExtractionStats* counts) const {
  std::ifstream in(file_for(task, mode));
  if (!in) return std::nullopt;
  std::string line;
  if (!std::getline(in, line)) return std::nullopt;
  const FeatureLayout layout = layout_for(mode, config);
  try {
    const json header = json::parse(line);
    if (header.value("format", "") != "handuse-features" || header.value("version", 0) != 1) return std::nullopt;
    if (header.at("config_hash").get<std::string>() != to_hex(config.hash())) return std::nullopt;
    if (header.at("task_fingerprint").get<std::string>() != to_hex(task_fingerprint(task))) return std::nullopt;
    if (header.at("layout_hash").get<std::string>() != to_hex(layout.hash())) return std::nullopt;

    std::map<std::tuple<int, int, int>, std::vector<double>> records;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json r = json::parse(line);
      const auto key = std::make_tuple(r.at("frame").get<int>(), static_cast<int>(parse_side(r.at("side").get<std::string>())),
                                       r.at("candidate").get<int>());
      records[key] = r.at("values").get<std::vector<double>>();
    }

    std::vector<ExtractedInstance> out;
    for (auto& inst : build_instances(corpus, task, mode)) {
      ExtractedInstance ex;
      for (int c = 0; c < static_cast<int>(inst.candidates.size()); ++c) {
        auto it = records.find({inst.frame_index, static_cast<int>(inst.side), c});
        if (it == records.end() || it->second.size() != layout.size()) return std::nullopt;
        ex.vectors.push_back(FeatureVector{mode, std::move(it->second), layout.hash()});
      }
      ex.instance = std::move(inst);
      out.push_back(std::move(ex));
    }
    if (counts) {
      counts->vectors += header.at("vectors").get<std::size_t>();
      counts->empty_masks += header.at("empty_masks").get<std::size_t>();
      counts->empty_regions += header.at("empty_regions").get<std::size_t>();
      const std::string src = header.value("mask_source", "none");
      if (src == to_string(MaskSource::files)) counts->mask_source = MaskSource::files;
      else if (src == to_string(MaskSource::heuristic)) counts->mask_source = MaskSource::heuristic;
    }
    return out;
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable cache is treated as a miss
  }
}

void FeatureCache::store(const Task& task, Mode mode, const FeatureConfig& config,
                         const std::vector<ExtractedInstance>& instances, const ExtractionStats& counts) const {
  fs::create_directories(dir_);
  const FeatureLayout layout = layout_for(mode, config);
  const fs::path target = file_for(task, mode);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail_io("cannot write feature cache '" + tmp.string() + "'");
    ordered_json header;
    header["format"] = "handuse-features";
    header["version"] = 1;
    header["task"] = task.id;
    header["mode"] = to_string(mode);
    header["config_hash"] = to_hex(config.hash());
    header["task_fingerprint"] = to_hex(task_fingerprint(task));
    header["layout_hash"] = to_hex(layout.hash());
    header["mask_source"] = counts.mask_source ? std::string(to_string(*counts.mask_source)) : std::string("none");
    header["vectors"] = counts.vectors;
    header["empty_masks"] = counts.empty_masks;
    header["empty_regions"] = counts.empty_regions;
    header["layout"] = ordered_json::array();
    for (const auto& s : layout.segments)
      header["layout"].push_back({{"name", s.name}, {"offset", s.offset}, {"length", s.length}});
    out << header.dump() << '\n';
    for (const auto& ex : instances) {
      for (std::size_t c = 0; c < ex.vectors.size(); ++c) {
        ordered_json r;
        r["task"] = task.id;
        r["frame"] = ex.instance.frame_index;
        r["side"] = to_string(ex.instance.side);
        r["mode"] = to_string(mode);
        r["candidate"] = c;
        r["values"] = ex.vectors[c].values;
        out << r.dump() << '\n';
      }
    }
    if (!out) fail_io("failed writing feature cache '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

std::vector<ExtractedInstance> extract_task_cached(const Corpus& corpus, const Task& task, Mode mode,
                                                   const FeatureConfig& config, const FeatureCache* cache,
                                                   ExtractionStats* stats) {
  if (cache) {
    ExtractionStats counts;
    if (auto hit = cache->load(corpus, task, mode, config, &counts)) {
      counts.tasks_reused = 1;
      if (stats) *stats += counts;
      return std::move(*hit);
    }
  }
  ExtractionStats local;
  auto out = extract_task(corpus, task, mode, config, &local);
  if (cache) cache->store(task, mode, config, out, local);
  if (stats) *stats += local;
  return out;
}

}  // namespace handuse
