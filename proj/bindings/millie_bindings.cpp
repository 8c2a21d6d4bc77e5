#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <sstream>

#include "millie/checkpoint.hpp"
#include "millie/dataio.hpp"
#include "millie/metrics.hpp"
#include "millie/model.hpp"
#include "millie/runconfig.hpp"
#include "millie/segmentation.hpp"
#include "millie/training.hpp"

namespace py = pybind11;
using namespace millie;

namespace {

RgbImage image_from_array(const py::array& array) {
  auto buf = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>::ensure(array);
  if (!buf || buf.ndim() != 3 || buf.shape(2) != 3)
    throw DimensionError("expected an (h, w, 3) uint8 image array");
  RgbImage img(static_cast<int>(buf.shape(1)), static_cast<int>(buf.shape(0)));
  std::memcpy(img.pixels.data(), buf.data(), img.pixels.size());
  return img;
}

py::array array_from_image(const RgbImage& img) {
  py::array_t<std::uint8_t> out({img.height, img.width, 3});
  std::memcpy(out.mutable_data(), img.pixels.data(), img.pixels.size());
  return std::move(out);
}

PatchImage patch_from_array(const py::array& array) {
  return PatchImage{image_from_array(array), "array", 0.0, 0.0};
}

py::array_t<float> array_from_tensor(const Tensor& t) {
  py::array_t<float> out(t.data.size());
  std::memcpy(out.mutable_data(), t.data.data(), t.data.size() * sizeof(float));
  return out;
}

RunConfig config_from_py(const py::object& config) {
  if (config.is_none()) return RunConfig{};
  std::string text;
  if (py::isinstance<py::str>(config))
    text = config.cast<std::string>();
  else
    text = py::module_::import("json").attr("dumps")(config).cast<std::string>();
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

// Checkpoint-shaped model handle: everything inference needs plus the
// training history when it came from train().
struct PyModel {
  ModelParams params;
  CheckpointMeta meta;
  std::vector<EpochStats> history;
};

py::dict match_to_dict(const MatchScore& m) {
  py::dict d;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["true_positives"] = m.true_positives;
  d["false_positives"] = m.false_positives;
  d["false_negatives"] = m.false_negatives;
  return d;
}

}  // namespace

PYBIND11_MODULE(_millie, m) {
  m.doc() = "Weakly supervised screening over bags of segmented cells";
  m.attr("__version__") = kToolVersion;

  static py::exception<Error> base_error(m, "MillieError");
  py::register_exception<DimensionError>(m, "DimensionError", base_error);
  py::register_exception<ConfigError>(m, "ConfigError", base_error);
  py::register_exception<DataError>(m, "DataError", base_error);
  py::register_exception<IoError>(m, "IoError", base_error);
  py::register_exception<IntegrityError>(m, "IntegrityError", base_error);
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", base_error);

  m.def(
      "otsu_threshold",
      [](const py::array& values, int bins) {
        auto buf =
            py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(values);
        if (!buf) throw DimensionError("expected a numeric array");
        std::vector<float> v(buf.data(), buf.data() + buf.size());
        return otsu_threshold(v, bins);
      },
      py::arg("values"), py::arg("bins") = 256);

  m.def(
      "segment_field",
      [](const py::array& image, int opening_radius, int min_marker_distance, int min_area,
         int bins) {
        SegmentationParams params{opening_radius, min_marker_distance, min_area, bins};
        const RgbImage img = image_from_array(image);
        py::list out;
        for (const auto& patch : segment_field(img, params, "array"))
          out.append(py::make_tuple(array_from_image(patch.image), patch.centroid_row,
                                    patch.centroid_col));
        return out;
      },
      py::arg("image"), py::arg("opening_radius") = 5, py::arg("min_marker_distance") = 20,
      py::arg("min_area") = 800, py::arg("bins") = 256);

  m.def(
      "segmentation_score",
      [](const std::vector<std::pair<double, double>>& predicted,
         const std::vector<std::pair<double, double>>& truth, double match_radius) {
        return match_to_dict(segmentation_score(predicted, truth, match_radius));
      },
      py::arg("predicted"), py::arg("truth"), py::arg("match_radius") = 10.0);

  m.def(
      "roc_auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        const RocCurve roc = roc_auc(scores, labels);
        py::array_t<double> points({static_cast<py::ssize_t>(roc.points.size()),
                                    static_cast<py::ssize_t>(3)});
        auto view = points.mutable_unchecked<2>();
        for (py::ssize_t i = 0; i < view.shape(0); ++i) {
          view(i, 0) = roc.points[static_cast<std::size_t>(i)].threshold;
          view(i, 1) = roc.points[static_cast<std::size_t>(i)].fpr;
          view(i, 2) = roc.points[static_cast<std::size_t>(i)].tpr;
        }
        py::dict d;
        d["auc"] = roc.auc;
        d["auc_num"] = roc.auc_num;
        d["auc_den"] = roc.auc_den;
        d["points"] = points;
        return d;
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "kfold",
      [](const std::vector<std::string>& labels, int k, std::uint64_t seed) {
        return kfold(labels, k, seed).fold;
      },
      py::arg("labels"), py::arg("k"), py::arg("seed") = 0);

  m.def(
      "pca_project",
      [](const py::array& vectors, int dims) {
        auto buf =
            py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(vectors);
        if (!buf || buf.ndim() != 2) throw DimensionError("expected an (n, d) array");
        std::vector<std::vector<double>> rows(static_cast<std::size_t>(buf.shape(0)));
        for (py::ssize_t i = 0; i < buf.shape(0); ++i)
          rows[static_cast<std::size_t>(i)].assign(buf.data() + i * buf.shape(1),
                                                   buf.data() + (i + 1) * buf.shape(1));
        const PcaProjection pca = pca_project(rows, dims);
        py::dict d;
        d["mean"] = pca.mean;
        d["axes"] = pca.axes;
        d["coords"] = pca.coords;
        d["explained"] = pca.explained;
        return d;
      },
      py::arg("vectors"), py::arg("dims") = 2);

  m.def(
      "silhouette",
      [](const std::vector<std::vector<double>>& points, const std::vector<int>& labels) {
        return silhouette(points, labels);
      },
      py::arg("points"), py::arg("labels"));

  m.def(
      "generate_synthetic",
      [](const std::string& out_dir, const py::object& config) {
        const RunConfig cfg = config_from_py(config);
        const SyntheticDataset ds = generate_synthetic(cfg.synth, out_dir);
        std::size_t glyphs = 0;
        for (const auto& f : ds.fields) glyphs += f.glyphs.size();
        py::dict d;
        d["classes"] = ds.manifest.classes;
        d["samples"] = ds.manifest.samples.size();
        d["fields"] = ds.fields.size();
        d["glyphs"] = glyphs;
        d["cells"] = ds.cells.items.size();
        return d;
      },
      py::arg("out_dir"), py::arg("config") = py::none());

  m.def("load_manifest", [](const std::string& path) {
    const DatasetManifest manifest = load_manifest(path);
    py::list samples;
    for (const auto& s : manifest.samples)
      samples.append(py::make_tuple(s.sample_id, s.label, s.patch_paths));
    py::dict d;
    d["classes"] = manifest.classes;
    d["samples"] = samples;
    return d;
  });

  py::class_<PyModel>(m, "Model")
      .def_static("load",
                  [](const std::string& path) {
                    PyModel model;
                    model.params = load_checkpoint(path, &model.meta);
                    return model;
                  },
                  py::arg("path"))
      .def("save",
           [](const PyModel& model, const std::string& path) {
             save_checkpoint(model.params, model.meta, path);
           },
           py::arg("path"))
      .def_property_readonly("classes",
                             [](const PyModel& model) { return model.params.class_names; })
      .def_property_readonly("input_side",
                             [](const PyModel& model) { return model.params.config.input_side; })
      .def_property_readonly("stopping_reason",
                             [](const PyModel& model) { return model.meta.stopping_reason; })
      .def_property_readonly("history",
                             [](const PyModel& model) {
                               py::list out;
                               for (const auto& e : model.history) {
                                 py::dict d;
                                 d["epoch"] = e.epoch;
                                 d["train_loss"] = e.train_loss;
                                 d["val_loss"] = e.val_loss;
                                 d["val_accuracy"] = e.val_accuracy;
                                 out.append(d);
                               }
                               return out;
                             })
      .def("predict_bag",
           [](const PyModel& model, const std::vector<py::array>& patches) {
             std::vector<PatchImage> bag;
             bag.reserve(patches.size());
             for (const auto& p : patches) bag.push_back(patch_from_array(p));
             return array_from_tensor(predict_bag(bag, model.params).probabilities);
           },
           py::arg("patches"))
      .def("score_cell",
           [](const PyModel& model, const py::array& patch) {
             return array_from_tensor(score_cell(patch_from_array(patch), model.params));
           },
           py::arg("patch"))
      .def("embed",
           [](const PyModel& model, const py::array& patch, const std::string& layer) {
             const std::string name = layer == "conv" ? "post-fusion-conv" : layer;
             return array_from_tensor(
                 extract_embedding(patch_from_array(patch), model.params,
                                   parse_embedding_layer(name)));
           },
           py::arg("patch"), py::arg("layer") = "fc1");

  m.def(
      "train",
      [](const std::string& manifest_path, const py::object& config) {
        const RunConfig cfg = config_from_py(config);
        const DatasetManifest manifest = load_manifest(manifest_path);
        PatchCache cache;
        std::ostringstream log;
        TrainedModel trained =
            train(manifest.samples, manifest.classes, cfg.train, cfg.backbone, cfg.aug, cache,
                  &log, cfg.head_width1, cfg.head_width2);
        PyModel model;
        model.meta.seed = cfg.train.seed;
        model.meta.train = trained.config;
        model.meta.backbone = trained.params.config;
        model.meta.class_names = trained.params.class_names;
        model.meta.stopping_reason = trained.stopping_reason;
        model.history = trained.history;
        model.params = std::move(trained.params);
        return model;
      },
      py::arg("manifest_path"), py::arg("config") = py::none());
}
