#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "splitfed/client.hpp"
#include "splitfed/harness.hpp"
#include "splitfed/serialize.hpp"
#include "splitfed/server.hpp"

namespace py = pybind11;
using namespace splitfed;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::array_t<float> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.dims().begin(), t.dims().end());
  py::array_t<float> out(shape);
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

Tensor from_numpy(const FloatArray& a) {
  Dims dims(a.shape(), a.shape() + a.ndim());
  return Tensor(dims, std::vector<float>(a.data(), a.data() + a.size()));
}

std::vector<Tensor> unstack_numpy(const FloatArray& a) {
  return unstack(from_numpy(a));
}

py::array_t<float> stack_numpy(const std::vector<Sample>& samples, bool masks) {
  std::vector<Tensor> items;
  for (const auto& s : samples) items.push_back(masks ? s.mask : s.image);
  if (items.empty()) return py::array_t<float>(std::vector<py::ssize_t>{0});
  return to_numpy(stack(items));
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["miou"] = r.miou;
  d["dice"] = r.dice;
  d["per_image_iou"] = r.per_image_iou;
  d["per_image_dice"] = r.per_image_dice;
  return d;
}

py::dict paramset_dict(const ParamSet& p) {
  py::dict d;
  for (const auto& e : p) d[py::str(e.name)] = to_numpy(e.value);
  return d;
}

ParamSet paramset_from(const py::dict& d) {
  ParamSet p;
  for (const auto& [k, v] : d) p.add(py::cast<std::string>(k), from_numpy(py::cast<FloatArray>(v)));
  return p;
}

// A loopback decoder server owned by Python.
class PyServer {
 public:
  PyServer(const std::filesystem::path& decoder, std::optional<std::filesystem::path> source_encoder,
           std::optional<std::filesystem::path> log) {
    auto [spec, params] = load_decoder_checkpoint(decoder);
    std::optional<ParamSet> enc;
    if (source_encoder) enc = load_encoder_checkpoint(*source_encoder).second;
    host_ = std::make_shared<const DecoderHost>(spec, std::move(params), std::move(enc));
    ServerOptions opts;
    opts.log_path = std::move(log);
    server_ = std::make_unique<Server>(host_, opts);
    server_->start();
  }
  std::string address() const { return server_->endpoint().to_string(); }
  std::uint16_t port() const { return server_->port(); }
  std::string decoder_hash() const { return digest_hex(host_->decoder_hash()); }
  std::uint64_t requests_served() const { return server_->requests_served(); }
  void stop() { server_->stop(); }

 private:
  std::shared_ptr<const DecoderHost> host_;
  std::unique_ptr<Server> server_;
};

}  // namespace

PYBIND11_MODULE(_splitfed, m) {
  m.doc() = "Split learning with a frozen shared decoder";

  py::register_exception<Error>(m, "SplitfedError", PyExc_RuntimeError);

  m.def("derive_seed", &derive_seed, py::arg("seed"), py::arg("label"));

  py::class_<DatasetSplit>(m, "DatasetSplit")
      .def_readonly("domain_id", &DatasetSplit::domain_id)
      .def_property_readonly("train_images", [](const DatasetSplit& s) { return stack_numpy(s.train, false); })
      .def_property_readonly("train_masks", [](const DatasetSplit& s) { return stack_numpy(s.train, true); })
      .def_property_readonly("test_images", [](const DatasetSplit& s) { return stack_numpy(s.test, false); })
      .def_property_readonly("test_masks", [](const DatasetSplit& s) { return stack_numpy(s.test, true); })
      .def("save", [](const DatasetSplit& s, const std::filesystem::path& p) { save_split(s, p); })
      .def("to_bytes", [](const DatasetSplit& s) {
        const Bytes b = serialize_split(s);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      })
      .def("__repr__", [](const DatasetSplit& s) {
        return "<DatasetSplit " + s.domain_id + " train=" + std::to_string(s.train.size()) +
               " test=" + std::to_string(s.test.size()) + ">";
      });

  m.def("default_centres", [](std::uint64_t seed) { return default_centres(seed); }, py::arg("seed"));
  m.def("load_split", &load_split, py::arg("path"));

  m.def(
      "segmentation_metrics",
      [](const FloatArray& probs, const FloatArray& masks, float threshold) {
        const auto p = unstack_numpy(probs);
        const auto g = unstack_numpy(masks);
        return report_dict(segmentation_metrics(p, g, threshold));
      },
      py::arg("probs"), py::arg("masks"), py::arg("threshold") = kDefaultThreshold,
      "Per-image IoU/Dice of [N,1,H,W] probability maps against binary masks.");
  m.def(
      "bce_from_logits",
      [](const FloatArray& logits, const FloatArray& masks) {
        const auto r = bce_from_logits(from_numpy(logits), from_numpy(masks));
        return py::make_tuple(r.loss, to_numpy(r.d_logits));
      },
      py::arg("logits"), py::arg("masks"));

  m.def("load_paramset", [](const std::filesystem::path& p) { return paramset_dict(load_paramset(p)); });
  m.def("save_paramset", [](const py::dict& d, const std::filesystem::path& p) { save_paramset(paramset_from(d), p); });
  m.def("decoder_hash", [](const py::dict& d) { return digest_hex(decoder_hash(paramset_from(d))); },
        "SHA-256 (hex) of the SFPS serialisation.");

  m.def(
      "run_experiment",
      [](std::uint64_t seed, const std::string& scale, std::optional<std::filesystem::path> out) {
        ExperimentConfig cfg;
        cfg.master_seed = seed;
        cfg.scale = parse_scale(scale);
        cfg.out_dir = std::move(out);
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_full_experiment(cfg);
        }
        return results_csv(r);
      },
      py::arg("seed") = 7, py::arg("scale") = "default", py::arg("out") = py::none(),
      "Runs every method on the synthetic centres and returns results.csv as text.");

  py::class_<PyServer>(m, "Server")
      .def(py::init<const std::filesystem::path&, std::optional<std::filesystem::path>,
                    std::optional<std::filesystem::path>>(),
           py::arg("decoder"), py::arg("source_encoder") = py::none(), py::arg("log") = py::none())
      .def_property_readonly("address", &PyServer::address)
      .def_property_readonly("port", &PyServer::port)
      .def_property_readonly("decoder_hash", &PyServer::decoder_hash)
      .def_property_readonly("requests_served", &PyServer::requests_served)
      .def("stop", &PyServer::stop, py::call_guard<py::gil_scoped_release>());

  m.def(
      "train_client",
      [](const std::string& server, const DatasetSplit& split, const std::string& variant, const std::string& init,
         std::uint64_t iterations, std::size_t batch, float lr, std::uint64_t seed,
         std::optional<std::filesystem::path> out) {
        ClientConfig cfg;
        cfg.centre_id = split.domain_id;
        cfg.server = parse_endpoint(server);
        cfg.variant = parse_variant(variant);
        cfg.init_mode = parse_init_mode(init);
        cfg.schedule.iterations = iterations;
        cfg.schedule.batch_size = batch;
        cfg.schedule.learning_rate = lr;
        cfg.seed = seed;
        cfg.out_dir = std::move(out);
        RemoteTrainResult r;
        {
          py::gil_scoped_release release;
          r = train_remote(cfg, split);
        }
        py::dict d;
        std::vector<float> losses;
        for (const auto& l : r.trace.losses) losses.push_back(l.loss);
        d["losses"] = losses;
        d["best_miou"] = r.trace.best_miou;
        d["best_iteration"] = r.trace.best_iteration;
        d["encoder"] = paramset_dict(r.best_encoder);
        return d;
      },
      py::arg("server"), py::arg("split"), py::arg("variant") = "small", py::arg("init") = "random",
      py::arg("iterations") = 2000, py::arg("batch") = 4, py::arg("lr") = 2e-4f, py::arg("seed") = 0,
      py::arg("out") = py::none());
}
