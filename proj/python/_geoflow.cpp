// Python bindings. Dense grids cross the boundary as float64 numpy arrays,
// configs and reports as JSON strings (the geoflow package wraps them in dicts).

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "geoflow/adapter.hpp"
#include "geoflow/camera.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/flow_policy.hpp"
#include "geoflow/grpo.hpp"
#include "geoflow/metrics.hpp"
#include "geoflow/parallel.hpp"
#include "geoflow/reward.hpp"
#include "geoflow/synthetic.hpp"

namespace py = pybind11;
using namespace geoflow;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

TensorGrid to_grid(const Array& a) {
  std::vector<std::size_t> dims(a.shape(), a.shape() + a.ndim());
  return TensorGrid::from_f64(std::move(dims), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const TensorGrid& g) {
  const auto w = g.cast(DType::kF64);
  Array out(std::vector<py::ssize_t>(w.dims().begin(), w.dims().end()));
  std::copy(w.f64().begin(), w.f64().end(), out.mutable_data());
  return out;
}

py::array_t<bool> mask_to_array(const ValidityMask& m) {
  py::array_t<bool> out({static_cast<py::ssize_t>(m.height()), static_cast<py::ssize_t>(m.width())});
  for (std::size_t p = 0; p < m.size(); ++p) out.mutable_data()[p] = m.get(p);
  return out;
}

ValidityMask mask_from_array(const py::array_t<bool, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ShapeError("mask must be 2-D");
  ValidityMask m(a.shape(0), a.shape(1));
  for (std::size_t p = 0; p < m.size(); ++p) m.set(p, a.data()[p]);
  return m;
}

metrics::CorrespondenceSet correspondences(const Eigen::MatrixX2d& a, const Eigen::MatrixX2d& b) {
  if (a.rows() != b.rows()) throw ShapeError("a and b need the same number of points");
  metrics::CorrespondenceSet c;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    c.a.emplace_back(a(i, 0), a(i, 1));
    c.b.emplace_back(b(i, 0), b(i, 1));
  }
  return c;
}

PoseSE3 pose_from(const Eigen::Matrix<double, 3, 4, Eigen::RowMajor>& m) {
  return PoseSE3::from_row_major(std::span<const double>(m.data(), 12));
}

class ConstantVelocity final : public flow::VelocityField {
 public:
  explicit ConstantVelocity(std::vector<double> v) : v_(std::move(v)) {}
  std::size_t dim() const override { return v_.size(); }
  void velocity_into(std::span<const double>, double, std::span<double> out) const override {
    std::copy(v_.begin(), v_.end(), out.begin());
  }

 private:
  std::vector<double> v_;
};

}  // namespace

PYBIND11_MODULE(_geoflow, m) {
  m.doc() = "Geometry-consistency rewards, toy flow-policy GRPO and epipolar metrics.";

  py::register_exception<Error>(m, "GeoflowError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("set_num_threads", &set_num_threads, py::arg("threads"));

  // reward primitives
  m.def("normalized_epe", [](const Array& pred, const Array& rigid, double eps) {
    return to_array(reward::normalized_epe(to_grid(pred), to_grid(rigid), eps));
  }, py::arg("flow_pred"), py::arg("flow_rigid"), py::arg("eps") = 1.0);
  m.def("relative_depth_error", [](const Array& warped, const Array& next, double eps, py::object valid) {
    const auto w = to_grid(warped);
    const ValidityMask v = valid.is_none() ? ValidityMask(w.height(), w.width(), true)
                                           : mask_from_array(valid.cast<py::array_t<bool>>());
    return to_array(reward::relative_depth_error(w, to_grid(next), eps, v));
  }, py::arg("depth_warped"), py::arg("depth_next"), py::arg("eps") = 1.0, py::arg("valid") = py::none());
  m.def("geo_quality", [](const Array& epe, const Array& depth_error) {
    return to_array(reward::geo_quality(to_grid(epe), to_grid(depth_error)));
  });
  m.def("composite", &reward::composite, py::arg("lam"), py::arg("r_geo"), py::arg("r_dino"));

  // camera
  m.def("rigid_flow", [](const Array& depth, const std::array<double, 4>& K,
                         const Eigen::Matrix<double, 3, 4, Eigen::RowMajor>& T) {
    const auto k = Intrinsics::from_span(K);
    const auto r = rigid_flow(to_grid(depth), k, k, pose_from(T));
    return py::make_tuple(to_array(r.flow), mask_to_array(r.valid));
  }, py::arg("depth"), py::arg("K"), py::arg("T"));
  m.def("reproject_depth", [](const Array& depth, const std::array<double, 4>& K,
                              const Eigen::Matrix<double, 3, 4, Eigen::RowMajor>& T) {
    const auto k = Intrinsics::from_span(K);
    const auto r = reproject_depth(to_grid(depth), k, k, pose_from(T));
    return py::make_tuple(to_array(r.depth), mask_to_array(r.coverage));
  }, py::arg("depth"), py::arg("K"), py::arg("T"));

  // sampler and GRPO
  m.def("sde_step", [](std::vector<double> x, std::vector<double> v, double t, double dt,
                       double noise_scale, std::vector<double> z) {
    const ConstantVelocity field(std::move(v));
    const auto r = flow::sde_step(field, x, t, dt, noise_scale, z);
    return py::make_tuple(r.x_next, r.mean, r.sigma_step);
  }, py::arg("x"), py::arg("v"), py::arg("t"), py::arg("dt"), py::arg("noise_scale"), py::arg("z"));
  m.def("group_advantages", [](std::vector<double> r) { return grpo::group_advantages(r); });
  m.def("train_toy", [](const std::string& config, int pretrain_iterations, std::uint64_t pretrain_seed) {
    const auto cfg = json::parse(config).get<grpo::TrainerConfig>();
    cfg.validate();
    py::gil_scoped_release release;
    const auto policy = grpo::toy_pretrained_policy(pretrain_seed, pretrain_iterations);
    const auto result = grpo::train(cfg, policy, grpo::scene_reward(synth::grpo_template()));
    json out = {{"metrics", result.metrics}, {"aborted", result.aborted}, {"failure", result.failure}};
    return out.dump();
  }, py::arg("config") = "{}", py::arg("pretrain_iterations") = 2000, py::arg("pretrain_seed") = 0);

  // metrics
  m.def("eight_point", [](const Eigen::MatrixX2d& a, const Eigen::MatrixX2d& b) {
    return Eigen::Matrix3d(metrics::eight_point(correspondences(a, b)));
  }, py::arg("a"), py::arg("b"));
  m.def("sampson_error", [](const Eigen::Matrix3d& F, const Eigen::MatrixX2d& a, const Eigen::MatrixX2d& b) {
    const auto r = metrics::sampson_error(F, correspondences(a, b));
    return py::make_tuple(r.per_pair, r.mean);
  }, py::arg("F"), py::arg("a"), py::arg("b"));
  m.def("dynamic_degree", [](const std::vector<Array>& flows) {
    std::vector<TensorGrid> g;
    for (const auto& f : flows) g.push_back(to_grid(f));
    return metrics::dynamic_degree(g);
  });

  // end to end
  m.def("synth", [](const std::string& out, const std::string& spec, const std::string& perturbation,
                    std::uint64_t seed) {
    const auto s = spec.empty() ? synth::default_scene() : json::parse(spec).get<synth::SceneSpec>();
    s.validate();
    const auto p = perturbation.empty() ? synth::PerturbationSpec{}
                                        : json::parse(perturbation).get<synth::PerturbationSpec>();
    p.validate();
    adapter::write_dir(synth::render_video(s, p, seed), out);
  }, py::arg("out"), py::arg("spec") = "", py::arg("perturbation") = "", py::arg("seed") = 0);
  m.def("score_dir", [](const std::string& input, const std::string& config) {
    reward::RewardConfig cfg;
    if (!config.empty()) cfg = json::parse(config).get<reward::RewardConfig>();
    cfg.validate();
    const auto data = adapter::read_dir(input);
    return reward::video_report(reward::score_video(data.video, cfg), cfg).dump();
  }, py::arg("input"), py::arg("config") = "");
}
