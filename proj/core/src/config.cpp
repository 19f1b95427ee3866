#include "adet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "adet/error.hpp"

namespace adet {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  require(j.is_object(), ErrorKind::kConfiguration, std::string(where) + " must be a JSON object");
  std::set<std::string> names(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    require(names.count(key) > 0, ErrorKind::kConfiguration, std::string("unknown key '") + key + "' in " + where);
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(json& j, const DetectorConfig& c) {
  j = json{{"categories", c.categories},
           {"backbone_channels", c.backbone_channels},
           {"rpn_channels", c.rpn_channels},
           {"anchor_size", c.anchor_size},
           {"anchor_ratios", c.anchor_ratios},
           {"rpn_positive_iou", c.rpn_positive_iou},
           {"rpn_negative_iou", c.rpn_negative_iou},
           {"rpn_batch_size", c.rpn_batch_size},
           {"rpn_positive_fraction", c.rpn_positive_fraction},
           {"proposal_nms_iou", c.proposal_nms_iou},
           {"pre_nms_top_n", c.pre_nms_top_n},
           {"train_proposals", c.train_proposals},
           {"test_proposals", c.test_proposals},
           {"pool_size", c.pool_size},
           {"head_hidden", c.head_hidden},
           {"roi_batch_size", c.roi_batch_size},
           {"roi_positive_fraction", c.roi_positive_fraction},
           {"roi_foreground_iou", c.roi_foreground_iou},
           {"max_detections", c.max_detections}};
}

void from_json(const json& j, DetectorConfig& c) {
  check_keys(j,
             {"categories", "backbone_channels", "rpn_channels", "anchor_size", "anchor_ratios", "rpn_positive_iou",
              "rpn_negative_iou", "rpn_batch_size", "rpn_positive_fraction", "proposal_nms_iou", "pre_nms_top_n",
              "train_proposals", "test_proposals", "pool_size", "head_hidden", "roi_batch_size",
              "roi_positive_fraction", "roi_foreground_iou", "max_detections"},
             "detector");
  read_opt(j, "categories", c.categories);
  read_opt(j, "backbone_channels", c.backbone_channels);
  read_opt(j, "rpn_channels", c.rpn_channels);
  read_opt(j, "anchor_size", c.anchor_size);
  read_opt(j, "anchor_ratios", c.anchor_ratios);
  read_opt(j, "rpn_positive_iou", c.rpn_positive_iou);
  read_opt(j, "rpn_negative_iou", c.rpn_negative_iou);
  read_opt(j, "rpn_batch_size", c.rpn_batch_size);
  read_opt(j, "rpn_positive_fraction", c.rpn_positive_fraction);
  read_opt(j, "proposal_nms_iou", c.proposal_nms_iou);
  read_opt(j, "pre_nms_top_n", c.pre_nms_top_n);
  read_opt(j, "train_proposals", c.train_proposals);
  read_opt(j, "test_proposals", c.test_proposals);
  read_opt(j, "pool_size", c.pool_size);
  read_opt(j, "head_hidden", c.head_hidden);
  read_opt(j, "roi_batch_size", c.roi_batch_size);
  read_opt(j, "roi_positive_fraction", c.roi_positive_fraction);
  read_opt(j, "roi_foreground_iou", c.roi_foreground_iou);
  read_opt(j, "max_detections", c.max_detections);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"w", c.w},
           {"lr", {c.lr_initial, c.lr_final}},
           {"phase_iterations", {c.phase1_iterations, c.phase2_iterations}},
           {"momentum", c.momentum},
           {"weight_decay", c.weight_decay},
           {"mode", to_string(c.mode)},
           {"source_only", c.source_only},
           {"clip_norm", c.clip_norm},
           {"lambda_ema", c.lambda_ema},
           {"lambda_ema_decay", c.lambda_ema_decay},
           {"resample_auxiliary", c.resample_auxiliary},
           {"margin_delta", c.margin_delta},
           {"image_classifier_hidden", c.image_classifier_hidden},
           {"object_classifier_hidden", {c.object_classifier_hidden1, c.object_classifier_hidden2}}};
}

void from_json(const json& j, TrainConfig& c) {
  check_keys(j,
             {"w", "lr", "phase_iterations", "momentum", "weight_decay", "mode", "source_only", "clip_norm",
              "lambda_ema", "lambda_ema_decay", "resample_auxiliary", "margin_delta", "image_classifier_hidden",
              "object_classifier_hidden"},
             "train");
  read_opt(j, "w", c.w);
  if (j.contains("lr")) {
    const auto lr = j.at("lr").get<std::vector<double>>();
    require(lr.size() == 2, ErrorKind::kConfiguration, "train.lr must be [initial, final]");
    c.lr_initial = lr[0];
    c.lr_final = lr[1];
  }
  if (j.contains("phase_iterations")) {
    const auto p = j.at("phase_iterations").get<std::vector<int>>();
    require(p.size() == 2, ErrorKind::kConfiguration, "train.phase_iterations must be [phase1, phase2]");
    c.phase1_iterations = p[0];
    c.phase2_iterations = p[1];
  }
  read_opt(j, "momentum", c.momentum);
  read_opt(j, "weight_decay", c.weight_decay);
  if (j.contains("mode")) c.mode = parse_alignment_mode(j.at("mode").get<std::string>());
  read_opt(j, "source_only", c.source_only);
  read_opt(j, "clip_norm", c.clip_norm);
  read_opt(j, "lambda_ema", c.lambda_ema);
  read_opt(j, "lambda_ema_decay", c.lambda_ema_decay);
  read_opt(j, "resample_auxiliary", c.resample_auxiliary);
  read_opt(j, "margin_delta", c.margin_delta);
  read_opt(j, "image_classifier_hidden", c.image_classifier_hidden);
  if (j.contains("object_classifier_hidden")) {
    const auto h = j.at("object_classifier_hidden").get<std::vector<int>>();
    require(h.size() == 2, ErrorKind::kConfiguration, "train.object_classifier_hidden must be [h1, h2]");
    c.object_classifier_hidden1 = h[0];
    c.object_classifier_hidden2 = h[1];
  }
}

void to_json(json& j, const AdversarialConfig& c) {
  j = json{{"lambda0", c.lambda0}, {"alpha", c.alpha}, {"beta", c.beta}};
}

void from_json(const json& j, AdversarialConfig& c) {
  check_keys(j, {"lambda0", "alpha", "beta"}, "adversarial");
  read_opt(j, "lambda0", c.lambda0);
  read_opt(j, "alpha", c.alpha);
  read_opt(j, "beta", c.beta);
}

void to_json(json& j, const RainMixConfig& c) {
  j = json{{"chains", c.chains},
           {"max_depth", c.max_depth},
           {"max_rotate_deg", c.max_rotate_deg},
           {"zoom", {c.zoom_min, c.zoom_max}},
           {"max_translate", c.max_translate},
           {"max_shear_deg", c.max_shear_deg},
           {"mix_weight", {c.mix_weight_min, c.mix_weight_max}}};
}

void from_json(const json& j, RainMixConfig& c) {
  check_keys(j, {"chains", "max_depth", "max_rotate_deg", "zoom", "max_translate", "max_shear_deg", "mix_weight"},
             "rainmix");
  read_opt(j, "chains", c.chains);
  read_opt(j, "max_depth", c.max_depth);
  read_opt(j, "max_rotate_deg", c.max_rotate_deg);
  if (j.contains("zoom")) {
    const auto z = j.at("zoom").get<std::vector<double>>();
    require(z.size() == 2, ErrorKind::kConfiguration, "rainmix.zoom must be [min, max]");
    c.zoom_min = z[0];
    c.zoom_max = z[1];
  }
  read_opt(j, "max_translate", c.max_translate);
  read_opt(j, "max_shear_deg", c.max_shear_deg);
  if (j.contains("mix_weight")) {
    const auto m = j.at("mix_weight").get<std::vector<double>>();
    require(m.size() == 2, ErrorKind::kConfiguration, "rainmix.mix_weight must be [min, max]");
    c.mix_weight_min = m[0];
    c.mix_weight_max = m[1];
  }
}

void to_json(json& j, const SynthesisConfig& c) {
  j = json{{"fog_preset", c.fog_preset},
           {"atmospheric_light", c.atmospheric_light},
           {"rain_library", c.rain_library},
           {"rainmix", c.rainmix}};
}

void from_json(const json& j, SynthesisConfig& c) {
  check_keys(j, {"fog_preset", "atmospheric_light", "rain_library", "rainmix"}, "synthesis");
  read_opt(j, "fog_preset", c.fog_preset);
  read_opt(j, "atmospheric_light", c.atmospheric_light);
  read_opt(j, "rain_library", c.rain_library);
  read_opt(j, "rainmix", c.rainmix);
}

void to_json(json& j, const DatasetRef& c) { j = json{{"root", c.root}, {"split", c.split}}; }

void from_json(const json& j, DatasetRef& c) {
  check_keys(j, {"root", "split"}, "dataset reference");
  read_opt(j, "root", c.root);
  read_opt(j, "split", c.split);
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"seed", c.seed},
           {"source", c.source},
           {"target", c.target},
           {"auxiliary", c.auxiliary},
           {"eval", c.eval},
           {"detector", c.detector},
           {"train", c.train},
           {"adversarial", c.adversarial},
           {"synthesis", c.synthesis},
           {"score_threshold", c.score_threshold},
           {"nms_iou", c.nms_iou}};
}

void from_json(const json& j, RunConfig& c) {
  check_keys(j,
             {"seed", "source", "target", "auxiliary", "eval", "detector", "train", "adversarial", "synthesis",
              "score_threshold", "nms_iou"},
             "run config");
  read_opt(j, "seed", c.seed);
  read_opt(j, "source", c.source);
  read_opt(j, "target", c.target);
  read_opt(j, "auxiliary", c.auxiliary);
  read_opt(j, "eval", c.eval);
  read_opt(j, "detector", c.detector);
  read_opt(j, "train", c.train);
  read_opt(j, "adversarial", c.adversarial);
  read_opt(j, "synthesis", c.synthesis);
  read_opt(j, "score_threshold", c.score_threshold);
  read_opt(j, "nms_iou", c.nms_iou);
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

void write_json_file(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  out << dump_json(j);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfiguration, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  try {
    RunConfig cfg = j.get<RunConfig>();
    cfg.detector.validate();
    cfg.train.validate();
    cfg.adversarial.validate();
    return cfg;
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfiguration, "invalid run config " + path.string() + ": " + e.what());
  }
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) { write_json_file(path, json(cfg)); }

}  // namespace adet
