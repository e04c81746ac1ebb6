// Copyright 2026 The GSTran Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "gstran/cli.hpp"
#include "gstran/errors.hpp"
#include "gstran/geom/ops.hpp"
#include "gstran/global_transformer.hpp"
#include "gstran/io.hpp"
#include "gstran/local_transformer.hpp"
#include "gstran/metrics.hpp"
#include "gstran/network.hpp"
#include "gstran/training.hpp"

namespace py = pybind11;
using namespace gstran;

namespace {

using Matrix = py::array_t<double, py::array::c_style | py::array::forcecast>;

diff::Array<double> to_array(const Matrix& m) {
  if (m.ndim() != 2) throw DimensionError("expected a 2-d array, got " + std::to_string(m.ndim()) + "-d");
  const auto rows = std::size_t(m.shape(0)), cols = std::size_t(m.shape(1));
  return diff::Array<double>::from({rows, cols}, std::vector<double>(m.data(), m.data() + rows * cols));
}

py::array_t<double> to_numpy(const diff::Array<double>& a) {
  std::vector<py::ssize_t> shape(a.shape().begin(), a.shape().end());
  py::array_t<double> out(shape);
  std::copy(a.values().begin(), a.values().end(), out.mutable_data());
  return out;
}

template <typename V>
py::array_t<V> table(const std::vector<V>& values, std::size_t rows, std::size_t cols) {
  py::array_t<V> out({py::ssize_t(rows), py::ssize_t(cols)});
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

geom::PointCloud make_cloud(const geom::Points& positions, const std::optional<geom::Points>& normals,
                            const std::optional<std::vector<int>>& labels, std::optional<int> category) {
  geom::PointCloud c;
  c.positions = positions;
  if (normals) c.normals = *normals;
  if (labels) c.labels = *labels;
  c.category = category;
  return c;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["oa"] = r.oa;
  d["macc"] = r.macc;
  d["miou"] = r.miou;
  d["per_class_iou"] = r.per_class_iou;
  if (r.ins_miou) {
    d["ins_miou"] = *r.ins_miou;
    d["cat_miou"] = *r.cat_miou;
  }
  return d;
}

ModelConfig config_from_dict(const py::dict& d) {
  KeyValues kv;
  for (const auto& [k, v] : d) kv.set(py::str(k), py::str(v));
  return ModelConfig::from_key_values(kv);
}

py::dict config_to_dict(const ModelConfig& c) {
  py::dict d;
  for (const auto& [k, v] : c.to_key_values().items()) d[py::str(k)] = v;
  return d;
}

py::list shapes(const std::vector<StageShape>& s) {
  py::list out;
  for (const auto& x : s) out.append(py::make_tuple(x.points, x.channels));
  return out;
}

// Precision-erased model handle.
class PyModel {
 public:
  PyModel(ModelConfig config, std::uint64_t seed) {
    if (config.precision == Precision::f64) f64_.emplace(config, seed);
    else f32_.emplace(config, seed);
  }
  explicit PyModel(const std::filesystem::path& checkpoint) {
    if (read_checkpoint_config(checkpoint).precision == Precision::f64)
      f64_.emplace(load_checkpoint<double>(checkpoint));
    else
      f32_.emplace(load_checkpoint<float>(checkpoint));
  }

  const ModelConfig& config() const { return f64_ ? f64_->config() : f32_->config(); }

  py::dict forward(const geom::PointCloud& cloud) const {
    return f64_ ? forward_with(*f64_, cloud) : forward_with(*f32_, cloud);
  }
  std::vector<int> predict(const geom::PointCloud& cloud) const {
    return f64_ ? gstran::predict(*f64_, cloud) : gstran::predict(*f32_, cloud);
  }
  void save(const std::filesystem::path& path) const {
    if (f64_) save_checkpoint(*f64_, path);
    else save_checkpoint(*f32_, path);
  }
  std::size_t parameter_count() const {
    return f64_ ? f64_->parameters().scalar_count() : f32_->parameters().scalar_count();
  }

 private:
  template <typename T>
  static py::dict forward_with(const Model<T>& m, const geom::PointCloud& cloud) {
    const auto r = m.forward(cloud);
    std::vector<double> logits(r.logits.values().begin(), r.logits.values().end());
    py::dict d;
    d["logits"] = table(logits, r.logits.dim(0), r.logits.dim(1));
    d["encoder_shapes"] = shapes(r.encoder_shapes);
    d["decoder_shapes"] = shapes(r.decoder_shapes);
    d["warnings"] = r.warnings;
    return d;
  }

  std::optional<Model<float>> f32_;
  std::optional<Model<double>> f64_;
};

}  // namespace

PYBIND11_MODULE(_gstran, m) {
  m.doc() = "Point-cloud segmentation with local geometric and global semantic transformers";

  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_RuntimeError);
  py::register_exception<DataError>(m, "DataError", PyExc_OSError);

  m.def(
      "knn",
      [](const geom::Points& source, const geom::Points& queries, std::size_t k) {
        const auto nn = geom::knn(source, queries, k);
        return py::make_tuple(table(nn.indices, nn.rows(), k), table(nn.distances, nn.rows(), k));
      },
      py::arg("source"), py::arg("queries"), py::arg("k"),
      "Exact kNN; returns (indices, distances), ties broken by index.");
  m.def("fps", &geom::fps, py::arg("positions"), py::arg("m"), py::arg("start") = 0,
        "Farthest-point sampling indices.");
  m.def(
      "estimate_normals",
      [](const geom::Points& positions, std::size_t k) {
        auto r = geom::estimate_normals(positions, k);
        return py::make_tuple(r.normals, r.degenerate);
      },
      py::arg("positions"), py::arg("k") = 16);
  m.def(
      "interpolate",
      [](const geom::Points& known, const geom::RowMatrix& features, const geom::Points& queries) {
        geom::PointCloud c;
        c.positions = known;
        c.features = features;
        return geom::interpolate_features(c, queries);
      },
      py::arg("known"), py::arg("features"), py::arg("queries"),
      "3-NN inverse squared distance interpolation.");

  m.def("tangent_plane_distance",
        [](const Eigen::Vector3d& p, const Eigen::Vector3d& q, const Eigen::Vector3d& n) {
          return tangent_plane_distance(p, q, n);
        });
  m.def("geometric_weight", &geometric_weight, py::arg("d_tan"));
  m.def("distance_weight", &distance_weight, py::arg("d"), py::arg("eps") = diff::kDefaultReciprocalEps);
  m.def(
      "combine_weights",
      [](const Matrix& distance_w, const Matrix& geometric_w, const std::string& op) {
        return to_numpy(combine_weights(to_array(distance_w), to_array(geometric_w), parse_combine_op(op)).combined_w);
      },
      py::arg("distance_w"), py::arg("geometric_w"), py::arg("op") = "hadamard",
      "Row-normalized combination (hadamard, sum, average).");

  m.def(
      "similarity", [](const Matrix& q, const Matrix& k) { return to_numpy(similarity_from_projections(to_array(q), to_array(k))); },
      py::arg("q"), py::arg("k"));
  m.def(
      "head_attentions",
      [](const Matrix& q, const Matrix& k, std::size_t heads) {
        std::vector<py::array_t<double>> out;
        for (const auto& a : head_attentions_from_projections(to_array(q), to_array(k), heads)) out.push_back(to_numpy(a));
        return out;
      },
      py::arg("q"), py::arg("k"), py::arg("heads"));
  m.def(
      "global_mask",
      [](const std::vector<Matrix>& heads) {
        std::vector<diff::Array<double>> a;
        for (const auto& h : heads) a.push_back(to_array(h));
        return to_numpy(global_mask(a));
      },
      py::arg("heads"));
  m.def(
      "refined_similarity",
      [](const Matrix& sim, const Matrix& mask, bool renormalize) {
        return to_numpy(refined_similarity(to_array(sim), to_array(mask), renormalize));
      },
      py::arg("sim"), py::arg("mask"), py::arg("renormalize") = true);

  m.def(
      "compute_metrics",
      [](py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast> counts) {
        if (counts.ndim() != 2 || counts.shape(0) != counts.shape(1))
          throw DimensionError("confusion matrix must be square");
        const auto k = std::size_t(counts.shape(0));
        return report_dict(compute_metrics(
            ConfusionMatrix::from_counts(k, std::vector<std::uint64_t>(counts.data(), counts.data() + k * k))));
      },
      py::arg("confusion"), "Rows are ground truth, columns predictions.");
  m.def(
      "instance_miou",
      [](const std::vector<std::tuple<std::vector<int>, std::vector<int>, int>>& objects, const CategoryParts& parts) {
        std::vector<ObjectPrediction> o;
        for (const auto& [pred, label, cat] : objects) o.push_back({pred, label, cat});
        const auto s = instance_miou(o, parts);
        return py::make_tuple(s.ins_miou, s.cat_miou);
      },
      py::arg("objects"), py::arg("category_parts"), "objects: (pred, label, category) triples.");

  py::class_<geom::PointCloud>(m, "PointCloud")
      .def(py::init(&make_cloud), py::arg("positions"), py::arg("normals") = std::nullopt,
           py::arg("labels") = std::nullopt, py::arg("category") = std::nullopt)
      .def_readwrite("positions", &geom::PointCloud::positions)
      .def_readwrite("normals", &geom::PointCloud::normals)
      .def_readwrite("labels", &geom::PointCloud::labels)
      .def_readwrite("category", &geom::PointCloud::category)
      .def("__len__", &geom::PointCloud::size);

  m.def("read_xyz", &io::read_xyz_table, py::arg("path"));
  m.def("write_xyz", &io::write_xyz_table, py::arg("cloud"), py::arg("path"));
  m.def(
      "synthetic_cloud",
      [](const std::string& family, std::size_t points, double noise, double ratio, std::uint64_t seed) {
        return io::synthetic_cloud(io::parse_shape_family(family), points, noise, ratio, seed);
      },
      py::arg("family") = "plane_with_fin", py::arg("points") = 512, py::arg("noise") = 0.0,
      py::arg("ratio") = 0.5, py::arg("seed") = 0);

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const py::dict& config, std::uint64_t seed) { return PyModel(config_from_dict(config), seed); }),
           py::arg("config") = py::dict(), py::arg("seed") = 0,
           "config: key=value settings as a dict, e.g. {'stage_count': 2}.")
      .def_static("load", [](const std::filesystem::path& p) { return PyModel(p); }, py::arg("path"))
      .def_property_readonly("config", [](const PyModel& m) { return config_to_dict(m.config()); })
      .def_property_readonly("parameter_count", &PyModel::parameter_count)
      .def("forward", &PyModel::forward, py::arg("cloud"),
           "Returns logits plus the encoder and decoder (points, channels) schedule.")
      .def("predict", &PyModel::predict, py::arg("cloud"))
      .def("save", &PyModel::save, py::arg("path"));

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a command-line invocation; returns (exit_code, stdout, stderr).");
}
