#include "millie/runconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace millie {

namespace {

void check_keys(const Json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object())
    throw ConfigError("config section '" + section + "' must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (allowed.find(key) == allowed.end())
      throw ConfigError("unknown key '" + key + "' in config section '" + section + "'");
  }
}

double want_num(const Json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError("config value '" + where + "' must be a number");
  return j.get<double>();
}

int want_int(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError("config value '" + where + "' must be an integer");
  return j.get<int>();
}

std::uint64_t want_seed(const Json& j, const std::string& where) {
  if (!j.is_number_unsigned() && !j.is_number_integer())
    throw ConfigError("config value '" + where + "' must be a non-negative integer");
  if (j.is_number_integer() && j.get<long long>() < 0)
    throw ConfigError("config value '" + where + "' must be a non-negative integer");
  return j.get<std::uint64_t>();
}

bool want_bool(const Json& j, const std::string& where) {
  if (!j.is_boolean()) throw ConfigError("config value '" + where + "' must be a boolean");
  return j.get<bool>();
}

}  // namespace

void MetricsConfig::validate() const {
  if (!(match_radius > 0.0)) throw ConfigError("metrics.match_radius must be positive");
  if (pca_dims < 1) throw ConfigError("metrics.pca_dims must be at least 1");
}

void RunConfig::validate() const {
  if (seg.opening_radius < 0) throw ConfigError("segmentation.opening_radius must be non-negative");
  if (seg.min_marker_distance < 1)
    throw ConfigError("segmentation.min_marker_distance must be positive");
  if (seg.min_area < 1) throw ConfigError("segmentation.min_area must be positive");
  if (seg.bins < 2) throw ConfigError("segmentation.bins must be at least 2");
  aug.validate();
  backbone.validate();
  if (head_width1 < 1 || head_width2 < 1)
    throw ConfigError("model head widths must be positive");
  train.validate();
  synth.validate();
  metrics.validate();
}

RunConfig parse_run_config(const Json& j) {
  RunConfig cfg;
  check_keys(j, "(root)",
             {"segmentation", "augment", "backbone", "train", "synthetic", "metrics"});

  if (j.contains("segmentation")) {
    const Json& s = j["segmentation"];
    check_keys(s, "segmentation", {"opening_radius", "min_marker_distance", "min_area", "bins"});
    if (s.contains("opening_radius"))
      cfg.seg.opening_radius = want_int(s["opening_radius"], "segmentation.opening_radius");
    if (s.contains("min_marker_distance"))
      cfg.seg.min_marker_distance =
          want_int(s["min_marker_distance"], "segmentation.min_marker_distance");
    if (s.contains("min_area")) cfg.seg.min_area = want_int(s["min_area"], "segmentation.min_area");
    if (s.contains("bins")) cfg.seg.bins = want_int(s["bins"], "segmentation.bins");
  }

  if (j.contains("augment")) {
    const Json& a = j["augment"];
    check_keys(a, "augment",
               {"enable_geometric", "enable_hue", "enable_gamma", "enable_noise", "hue_shift_max",
                "gamma_lo", "gamma_hi", "noise_sigma_max"});
    if (a.contains("enable_geometric"))
      cfg.aug.enable_geometric = want_bool(a["enable_geometric"], "augment.enable_geometric");
    if (a.contains("enable_hue")) cfg.aug.enable_hue = want_bool(a["enable_hue"], "augment.enable_hue");
    if (a.contains("enable_gamma"))
      cfg.aug.enable_gamma = want_bool(a["enable_gamma"], "augment.enable_gamma");
    if (a.contains("enable_noise"))
      cfg.aug.enable_noise = want_bool(a["enable_noise"], "augment.enable_noise");
    if (a.contains("hue_shift_max"))
      cfg.aug.hue_shift_max = static_cast<float>(want_num(a["hue_shift_max"], "augment.hue_shift_max"));
    if (a.contains("gamma_lo"))
      cfg.aug.gamma_lo = static_cast<float>(want_num(a["gamma_lo"], "augment.gamma_lo"));
    if (a.contains("gamma_hi"))
      cfg.aug.gamma_hi = static_cast<float>(want_num(a["gamma_hi"], "augment.gamma_hi"));
    if (a.contains("noise_sigma_max"))
      cfg.aug.noise_sigma_max =
          static_cast<float>(want_num(a["noise_sigma_max"], "augment.noise_sigma_max"));
  }

  if (j.contains("backbone")) {
    const Json& b = j["backbone"];
    check_keys(b, "backbone", {"input_side", "channels", "head_width1", "head_width2"});
    if (b.contains("input_side"))
      cfg.backbone.input_side = want_int(b["input_side"], "backbone.input_side");
    if (b.contains("channels")) {
      if (!b["channels"].is_array())
        throw ConfigError("config value 'backbone.channels' must be an array of integers");
      cfg.backbone.channels.clear();
      for (const auto& c : b["channels"])
        cfg.backbone.channels.push_back(want_int(c, "backbone.channels[]"));
    }
    if (b.contains("head_width1"))
      cfg.head_width1 = want_int(b["head_width1"], "backbone.head_width1");
    if (b.contains("head_width2"))
      cfg.head_width2 = want_int(b["head_width2"], "backbone.head_width2");
  }

  if (j.contains("train")) {
    const Json& t = j["train"];
    check_keys(t, "train",
               {"learning_rate", "max_epochs", "bag_size_cap", "early_stop_patience",
                "validation_fraction", "tta_replicas", "seed"});
    if (t.contains("learning_rate"))
      cfg.train.learning_rate = want_num(t["learning_rate"], "train.learning_rate");
    if (t.contains("max_epochs")) cfg.train.max_epochs = want_int(t["max_epochs"], "train.max_epochs");
    if (t.contains("bag_size_cap"))
      cfg.train.bag_size_cap = want_int(t["bag_size_cap"], "train.bag_size_cap");
    if (t.contains("early_stop_patience"))
      cfg.train.early_stop_patience =
          want_int(t["early_stop_patience"], "train.early_stop_patience");
    if (t.contains("validation_fraction"))
      cfg.train.validation_fraction =
          want_num(t["validation_fraction"], "train.validation_fraction");
    if (t.contains("tta_replicas"))
      cfg.train.tta_replicas = want_int(t["tta_replicas"], "train.tta_replicas");
    if (t.contains("seed")) cfg.train.seed = want_seed(t["seed"], "train.seed");
  }

  if (j.contains("synthetic")) {
    const Json& s = j["synthetic"];
    check_keys(s, "synthetic",
               {"samples_per_class", "fields_per_sample", "glyphs_per_field", "witness_fraction",
                "noise_level", "field_side", "seed"});
    if (s.contains("samples_per_class"))
      cfg.synth.samples_per_class = want_int(s["samples_per_class"], "synthetic.samples_per_class");
    if (s.contains("fields_per_sample"))
      cfg.synth.fields_per_sample = want_int(s["fields_per_sample"], "synthetic.fields_per_sample");
    if (s.contains("glyphs_per_field"))
      cfg.synth.glyphs_per_field = want_int(s["glyphs_per_field"], "synthetic.glyphs_per_field");
    if (s.contains("witness_fraction"))
      cfg.synth.witness_fraction = want_num(s["witness_fraction"], "synthetic.witness_fraction");
    if (s.contains("noise_level"))
      cfg.synth.noise_level = want_num(s["noise_level"], "synthetic.noise_level");
    if (s.contains("field_side")) cfg.synth.field_side = want_int(s["field_side"], "synthetic.field_side");
    if (s.contains("seed")) cfg.synth.seed = want_seed(s["seed"], "synthetic.seed");
  }

  if (j.contains("metrics")) {
    const Json& m = j["metrics"];
    check_keys(m, "metrics", {"match_radius", "pca_dims"});
    if (m.contains("match_radius"))
      cfg.metrics.match_radius = want_num(m["match_radius"], "metrics.match_radius");
    if (m.contains("pca_dims")) cfg.metrics.pca_dims = want_int(m["pca_dims"], "metrics.pca_dims");
  }

  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

Json effective_config(const RunConfig& config) {
  Json j;
  j["segmentation"] = {{"opening_radius", config.seg.opening_radius},
                       {"min_marker_distance", config.seg.min_marker_distance},
                       {"min_area", config.seg.min_area},
                       {"bins", config.seg.bins}};
  j["augment"] = {{"enable_geometric", config.aug.enable_geometric},
                  {"enable_hue", config.aug.enable_hue},
                  {"enable_gamma", config.aug.enable_gamma},
                  {"enable_noise", config.aug.enable_noise},
                  {"hue_shift_max", config.aug.hue_shift_max},
                  {"gamma_lo", config.aug.gamma_lo},
                  {"gamma_hi", config.aug.gamma_hi},
                  {"noise_sigma_max", config.aug.noise_sigma_max}};
  j["backbone"] = {{"input_side", config.backbone.input_side},
                   {"channels", config.backbone.channels},
                   {"head_width1", config.head_width1},
                   {"head_width2", config.head_width2}};
  j["train"] = {{"learning_rate", config.train.learning_rate},
                {"max_epochs", config.train.max_epochs},
                {"bag_size_cap", config.train.bag_size_cap},
                {"early_stop_patience", config.train.early_stop_patience},
                {"validation_fraction", config.train.validation_fraction},
                {"tta_replicas", config.train.tta_replicas},
                {"seed", config.train.seed}};
  j["synthetic"] = {{"samples_per_class", config.synth.samples_per_class},
                    {"fields_per_sample", config.synth.fields_per_sample},
                    {"glyphs_per_field", config.synth.glyphs_per_field},
                    {"witness_fraction", config.synth.witness_fraction},
                    {"noise_level", config.synth.noise_level},
                    {"field_side", config.synth.field_side},
                    {"seed", config.synth.seed}};
  j["metrics"] = {{"match_radius", config.metrics.match_radius},
                  {"pca_dims", config.metrics.pca_dims}};
  return j;
}

}  // namespace millie
