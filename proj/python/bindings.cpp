#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "fcgs/pipeline.hpp"
#include "fcgs/ply.hpp"
#include "fcgs/weights.hpp"

namespace py = pybind11;
using namespace fcgs;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a, std::size_t cols, const char* name) {
  if (a.ndim() != 2 || static_cast<std::size_t>(a.shape(1)) != cols)
    throw py::value_error(std::string(name) + " must have shape (N, " + std::to_string(cols) + ")");
  Matrix m(static_cast<std::size_t>(a.shape(0)), cols);
  std::memcpy(m.data.data(), a.data(), m.data.size() * sizeof(double));
  return m;
}

Array to_array(const Matrix& m) {
  Array a({m.rows, m.cols});
  std::memcpy(a.mutable_data(), m.data.data(), m.data.size() * sizeof(double));
  return a;
}

GaussianCloud make_cloud(const Array& positions, const Array& f_geo, const Array& f_col) {
  GaussianCloud c;
  c.positions = to_matrix(positions, 3, "positions");
  c.f_geo = to_matrix(f_geo, kGeoDim, "f_geo");
  c.f_col = to_matrix(f_col, kColDim, "f_col");
  return c;
}

py::tuple cloud_tuple(const GaussianCloud& c) {
  return py::make_tuple(to_array(c.positions), to_array(c.f_geo), to_array(c.f_col));
}

ByteView view(const py::bytes& b) {
  std::string_view s = b;
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

py::bytes to_bytes(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

py::object report_dict(const RateReport& r) {
  return py::module_::import("json").attr("loads")(report_json(r));
}

}  // namespace

PYBIND11_MODULE(_fcgs, m) {
  m.doc() = "Feed-forward Gaussian splatting scene codec.";

  // Message carries the error category first, e.g. "corruption error: ...".
  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error;
  error.call_once_and_store_result([&]() { return py::exception<Error>(m, "Error"); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string msg = std::string(to_string(e.kind())) + ": " + e.what();
      py::set_error(error.get_stored(), msg.c_str());
    }
  });

  py::class_<ModelWeights>(m, "Weights")
      .def_property_readonly("profile", [](const ModelWeights& w) { return w.profile; })
      .def_property_readonly("fingerprint", [](const ModelWeights& w) { return to_hex(w.fingerprint); })
      .def("serialize", [](const ModelWeights& w) { return to_bytes(serialize_weights(w)); });

  m.def("load_weights", [](const py::bytes& b) { return load_weights(view(b)); }, py::arg("data"));
  m.def(
      "gen_test_weights",
      [](std::uint64_t seed, bool compact) { return gen_test_weights(seed, {.compact = compact}); },
      py::arg("seed") = 0, py::arg("compact") = false);

  m.def(
      "encode",
      [](const Array& positions, const Array& f_geo, const Array& f_col, const ModelWeights& w, std::uint64_t seed,
         std::size_t chunk_size, unsigned workers) {
        const GaussianCloud c = make_cloud(positions, f_geo, f_col);
        Bytes out;
        {
          py::gil_scoped_release release;
          out = encode_scene(c, w, {.seed = seed, .chunk_size = chunk_size, .workers = workers});
        }
        return to_bytes(out);
      },
      py::arg("positions"), py::arg("f_geo"), py::arg("f_col"), py::arg("weights"), py::arg("seed") = 0,
      py::arg("chunk_size") = kDefaultChunkSize, py::arg("workers") = 1);

  m.def(
      "decode",
      [](const py::bytes& data, const ModelWeights& w, unsigned workers) {
        const std::string s = data;
        GaussianCloud c;
        {
          py::gil_scoped_release release;
          c = decode_scene({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}, w, workers);
        }
        return cloud_tuple(c);
      },
      py::arg("data"), py::arg("weights"), py::arg("workers") = 1,
      "Returns (positions, f_geo, f_col) in decoded order.");

  m.def("inspect", [](const py::bytes& data) { return report_dict(inspect(view(data))); }, py::arg("data"));

  m.def(
      "estimate",
      [](const Array& positions, const Array& f_geo, const Array& f_col, const ModelWeights& w, std::uint64_t seed) {
        return report_dict(estimate_scene(make_cloud(positions, f_geo, f_col), w, {.seed = seed}));
      },
      py::arg("positions"), py::arg("f_geo"), py::arg("f_col"), py::arg("weights"), py::arg("seed") = 0);

  m.def("read_ply", [](const py::bytes& data) { return cloud_tuple(parse_ply(view(data))); }, py::arg("data"));
  m.def(
      "write_ply",
      [](const Array& positions, const Array& f_geo, const Array& f_col) {
        return to_bytes(write_ply(make_cloud(positions, f_geo, f_col)));
      },
      py::arg("positions"), py::arg("f_geo"), py::arg("f_col"));
}
