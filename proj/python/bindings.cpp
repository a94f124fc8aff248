#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "venuerank/errors.hpp"
#include "venuerank/evalharness.hpp"
#include "venuerank/gateway.hpp"
#include "venuerank/scopesim.hpp"
#include "venuerank/textprep.hpp"

namespace py = pybind11;
using namespace venuerank;

namespace {

// JSON crosses the boundary as text; the Python side decodes it.
class Recommender {
 public:
  explicit Recommender(const std::filesystem::path& path) : snap_(load_snapshot(path)) {}

  std::string recommend(const std::string& title, const std::string& abstract,
                        const std::vector<std::string>& keywords, std::optional<std::size_t> k) const {
    RecommendRequest req{title, abstract, keywords, k};
    return recommend_json(*snap_, req).dump();
  }
  std::vector<std::string> venue_ids() const { return snap_->model->venue_ids(); }
  const std::string& model_id() const { return snap_->model_id; }

 private:
  std::shared_ptr<const ModelSnapshot> snap_;
};

}  // namespace

PYBIND11_MODULE(_venuerank, m) {
  m.doc() = "Native core of the venuerank package.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<EmptyTextError>(m, "EmptyTextError", PyExc_ValueError);
  py::register_exception<RequestError>(m, "RequestError", PyExc_ValueError);

  m.def("baseline_clean", [](const std::string& s) { return baseline_clean(s); });
  m.def("enhanced_clean", [](const std::string& s) { return enhanced_clean(s); });
  m.def("strip_latex", [](const std::string& s) { return strip_latex(s); });
  m.def("split_camel_case", [](const std::string& s) { return split_camel_case(s); });
  m.def("max_len", [](const std::string& code) { return max_len_for(FeatureCombo::parse(code)); });

  m.def("cosine", [](const std::vector<double>& a, const std::vector<double>& b) { return cosine(a, b); });
  m.def("hitrate_at_k", &hitrate_at_k, py::arg("rankings"), py::arg("labels"), py::arg("k"));
  m.def("macro_accuracy_at_k", &macro_accuracy_at_k, py::arg("rankings"), py::arg("labels"), py::arg("k"),
        py::arg("classes"));

  m.def("grad_check", [](const std::string& variant, std::uint64_t seed) {
    const auto c = grad_check_architecture(variant_from_string(variant), seed);
    return py::make_tuple(c.label, c.report.worst());
  });

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli_dispatch(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));

  py::class_<Recommender>(m, "Recommender")
      .def(py::init<const std::filesystem::path&>(), py::arg("path"))
      .def("recommend_json", &Recommender::recommend, py::arg("title") = "", py::arg("abstract") = "",
           py::arg("keywords") = std::vector<std::string>{}, py::arg("k") = std::nullopt,
           py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("venue_ids", &Recommender::venue_ids)
      .def_property_readonly("model_id", &Recommender::model_id);
}
