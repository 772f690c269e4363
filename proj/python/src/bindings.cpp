// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cordlab/experiment.hpp"
#include "cordlab/perturbation.hpp"

namespace py = pybind11;
using namespace cordlab;

namespace {

std::vector<int> to_ids(const TokenSeq& t) {
  std::vector<int> out;
  out.reserve(t.size());
  for (Token x : t) out.push_back(x.id);
  return out;
}

TokenSeq to_tokens(const std::vector<int>& ids) {
  TokenSeq out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(Token{i});
  return out;
}

using PyContexts = std::vector<std::pair<std::vector<int>, double>>;

ContextSequence to_contexts(const PyContexts& c) {
  std::vector<Context> v;
  for (const auto& [tokens, score] : c) v.push_back(Context{to_tokens(tokens), score});
  return ContextSequence(std::move(v));
}

PyContexts from_contexts(const ContextSequence& c) {
  PyContexts out;
  for (const auto& x : c) out.emplace_back(to_ids(x.tokens), x.score);
  return out;
}

py::dict metrics_dict(const RunReport& r) {
  py::dict out;
  for (const auto& d : r.datasets) {
    py::dict m;
    m["n_instances"] = d.n_instances;
    if (d.exact_match) m["exact_match"] = *d.exact_match;
    if (d.idk_accuracy) m["idk_accuracy"] = *d.idk_accuracy;
    if (d.needle_f1) m["needle_f1"] = *d.needle_f1;
    if (d.consistency_jsd) m["consistency_jsd"] = *d.consistency_jsd;
    if (d.position_bias) {
      m["position_bias"] = d.position_bias->accuracy;
      m["position_bias_spread"] = d.position_bias->spread;
    }
    out[py::str(d.name)] = m;
  }
  if (r.pairing_ratio) out["pairing_ratio"] = *r.pairing_ratio;
  return out;
}

struct Run {
  ModelParams params;
  std::vector<SelectionRecord> selections;
  std::vector<LossBreakdown> steps;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "cordlab core: consistency regularization with rank distillation on synthetic RAG tasks";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<LengthError>(m, "LengthError", PyExc_ValueError);

  m.def("jsd", [](std::vector<double> p, std::vector<double> q) {
    return jsd_value(TokenDistribution{std::move(p)}, TokenDistribution{std::move(q)});
  }, py::arg("p"), py::arg("q"), "Jensen-Shannon divergence in nats.");
  m.def("nll", [](std::vector<std::vector<double>> dists, const std::vector<int>& answer) {
    std::vector<TokenDistribution> d;
    for (auto& x : dists) d.push_back(TokenDistribution{std::move(x)});
    return nll_loss(d, to_tokens(answer)).value;
  }, py::arg("dists"), py::arg("answer"));
  m.def("tail_size", &tail_size, py::arg("n"), py::arg("alpha"));
  m.def("score_aware_alpha", [](const std::vector<double>& s) { return score_aware_alpha(s); }, py::arg("scores"));
  m.def("full_shuffle", [](const PyContexts& c, std::uint64_t seed) {
    return from_contexts(full_shuffle(to_contexts(c), seed));
  }, py::arg("contexts"), py::arg("seed"));
  m.def("interpolate_perturb", [](const PyContexts& c, double alpha, std::uint64_t seed) {
    return from_contexts(interpolate_perturb(to_contexts(c), {alpha, seed}));
  }, py::arg("contexts"), py::arg("alpha"), py::arg("seed"));

  py::class_<Instance>(m, "Instance")
      .def_readonly("id", &Instance::id)
      .def_property_readonly("question", [](const Instance& i) { return to_ids(i.question); })
      .def_property_readonly("contexts", [](const Instance& i) { return from_contexts(i.contexts); })
      .def_property_readonly("answer", [](const Instance& i) { return to_ids(i.answer); })
      .def_property_readonly("scenario", [](const Instance& i) { return std::string(to_string(i.scenario)); })
      .def_readonly("gold_ranks", &Instance::gold_ranks)
      .def("__repr__", [](const Instance& i) { return "<Instance " + i.id + ">"; });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("vocab_size", &Dataset::vocab_size)
      .def("__len__", [](const Dataset& d) { return d.instances.size(); })
      .def("__getitem__", [](const Dataset& d, std::size_t i) {
        if (i >= d.instances.size()) throw py::index_error();
        return d.instances[i];
      })
      .def("save", [](const Dataset& d, const std::filesystem::path& p) { save_dataset(d, p); }, py::arg("path"));
  m.def("load_dataset", [](const std::filesystem::path& p, std::optional<int> vocab) { return load_dataset(p, vocab); },
        py::arg("path"), py::arg("vocab_size") = py::none());

  py::class_<ModelParams>(m, "Model")
      .def_property_readonly("n_parameters", &ModelParams::size)
      .def("save", [](const ModelParams& p, const std::filesystem::path& path) { save_checkpoint(p, path); })
      .def_static("load", [](const std::filesystem::path& path) { return load_checkpoint(path); })
      .def("decode", [](const ModelParams& p, const Instance& i) {
        return to_ids(greedy_decode(p, i.question, i.contexts, static_cast<int>(i.answer.size()) + 1));
      }, py::arg("instance"))
      .def("logprob", [](const ModelParams& p, const Instance& i, std::optional<PyContexts> ordering) {
        const ContextSequence c = ordering ? to_contexts(*ordering) : i.contexts;
        return sequence_logprob(p, i.question, c, with_terminator(i.answer, p.config));
      }, py::arg("instance"), py::arg("ordering") = py::none(),
         "Log-probability of the answer plus terminator under the given (or instance) ordering.");

  m.def("select_teacher", [](const ModelParams& p, const Instance& i, double alpha, std::uint64_t seed) {
    const auto c = select_teacher(p, i, alpha, seed);
    py::dict d;
    d["which"] = std::string(to_string(c.which));
    d["ordering"] = from_contexts(c.ordering);
    d["logprob_interp"] = c.logprob_interp;
    d["logprob_full"] = c.logprob_full;
    return d;
  }, py::arg("model"), py::arg("instance"), py::arg("alpha"), py::arg("seed"));

  py::class_<GeneratedData>(m, "GeneratedData")
      .def_readonly("train", &GeneratedData::train)
      .def_readonly("test", &GeneratedData::test)
      .def_readonly("idk_train", &GeneratedData::idk_train)
      .def_readonly("idk_test", &GeneratedData::idk_test)
      .def_readonly("pretrain", &GeneratedData::pretrain);

  py::class_<Run>(m, "Run")
      .def_readonly("model", &Run::params)
      .def_property_readonly("losses", [](const Run& r) {
        std::vector<double> out;
        for (const auto& s : r.steps) out.push_back(s.combined);
        return out;
      })
      .def_property_readonly("pairing_ratio", [](const Run& r) -> std::optional<double> {
        if (r.selections.empty()) return std::nullopt;
        return summarize_selections(r.selections).ratio;
      })
      .def_property_readonly("mean_alpha", [](const Run& r) -> std::optional<double> {
        if (r.selections.empty()) return std::nullopt;
        return summarize_selections(r.selections).mean_alpha;
      });

  py::class_<ExperimentSpec>(m, "Experiment")
      .def_static("from_json", &parse_experiment, py::arg("text"))
      .def_static("from_file", [](const std::filesystem::path& p) { return load_experiment(p); }, py::arg("path"))
      .def_readwrite("seed", &ExperimentSpec::seed)
      .def_property("mode", [](const ExperimentSpec& s) { return std::string(to_string(s.train.mode)); },
                    [](ExperimentSpec& s, const std::string& m) { s.train.mode = train_mode_from_string(m); })
      .def_property("lambda_", [](const ExperimentSpec& s) { return s.train.lambda; },
                    [](ExperimentSpec& s, double l) { s.train.lambda = l; })
      .def("config_hash", &config_hash)
      .def("effective_config", &effective_config_json)
      .def("manifest", &manifest_json)
      .def("generate", [](const ExperimentSpec& s) {
        py::gil_scoped_release nogil;
        return generate(s);
      })
      .def("base_model", [](const ExperimentSpec& s, const GeneratedData& d) {
        py::gil_scoped_release nogil;
        return base_model(s, d.pretrain);
      }, py::arg("data"))
      .def("finetune", [](const ExperimentSpec& s, const GeneratedData& d, const ModelParams& base) {
        py::gil_scoped_release nogil;
        TrainResult r = finetune(s, d, base);
        Run run{std::move(r.params), std::move(r.log.selections), {}};
        for (const auto& st : r.log.steps) run.steps.push_back(st.loss);
        return run;
      }, py::arg("data"), py::arg("base"))
      .def("evaluate", [](const ExperimentSpec& s, const ModelParams& p, const GeneratedData& d,
                          std::optional<Run> run) {
        RunReport r;
        {
          py::gil_scoped_release nogil;
          std::vector<SelectionRecord> sel = run ? run->selections : std::vector<SelectionRecord>{};
          r = evaluate_run(s, p, d.test, d.idk_test, sel);
        }
        return metrics_dict(r);
      }, py::arg("model"), py::arg("data"), py::arg("run") = py::none());
}
