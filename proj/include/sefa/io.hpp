#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sefa/align.hpp"
#include "sefa/envs.hpp"
#include "sefa/errors.hpp"
#include "sefa/eval.hpp"
#include "sefa/flow.hpp"
#include "sefa/sha256.hpp"
#include "sefa/solvers.hpp"
#include "sefa/velocity_net.hpp"

namespace sefa {

// Persistence for the four document kinds (demos, couplings, checkpoints,
// reports) plus the trajectory CSV export. Demos and couplings are JSON
// Lines; checkpoints and reports are single JSON documents. All numbers go
// through the JSON library's shortest round-trip serializer, so save/load is
// value-identical and reruns are byte-identical.

using json = nlohmann::json;

inline constexpr int kCheckpointFormatVersion = 1;

enum class Stage { base, reflow, sefa };

inline std::string stage_name(Stage s) {
  switch (s) {
    case Stage::base: return "base";
    case Stage::reflow: return "reflow";
    case Stage::sefa: return "sefa";
  }
  return "?";
}

inline Stage parse_stage(const std::string& s) {
  if (s == "base") return Stage::base;
  if (s == "reflow") return Stage::reflow;
  if (s == "sefa") return Stage::sefa;
  throw ValidationError("unknown stage tag: " + s);
}

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot open " + path + " for writing");
  }
  out << bytes;
  if (!out) {
    throw Error("write failed for " + path);
  }
}

inline void require_finite(const std::vector<double>& v, const std::string& where) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw ValidationError(where + ": non-finite number");
    }
  }
}

inline std::vector<double> number_array(const json& j, const char* key,
                                        const std::string& where) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw ValidationError(where + ": missing array field '" + key + "'");
  }
  std::vector<double> out;
  out.reserve(j[key].size());
  for (const json& v : j[key]) {
    if (!v.is_number()) {
      throw ValidationError(where + ": field '" + key + "' has a non-number entry");
    }
    out.push_back(v.get<double>());
  }
  require_finite(out, where + ": field '" + key + "'");
  return out;
}

// Parses one JSON-Lines file, reporting the 1-based line number on failure.
template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path);
  }
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() && in.eof()) break;  // trailing newline
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
    fn(j, lineno);
  }
}

// Shortest round-trip decimal form (also what the JSON serializer emits).
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// demos

inline void save_demos(const std::string& path,
                       const std::vector<Demonstration>& demos) {
  std::string out;
  for (const Demonstration& d : demos) {
    json j{{"obs", d.obs}, {"action", d.action}, {"episode", d.episode}, {"t", d.t}};
    out += j.dump();
    out += '\n';
  }
  detail::write_file(path, out);
}

inline std::vector<Demonstration> load_demos(const std::string& path) {
  std::vector<Demonstration> demos;
  detail::for_each_jsonl(path, [&](const json& j, int lineno) {
    const std::string where = path + " line " + std::to_string(lineno);
    Demonstration d;
    d.obs = detail::number_array(j, "obs", where);
    d.action = detail::number_array(j, "action", where);
    if (!j.contains("episode") || !j["episode"].is_number_integer() ||
        !j.contains("t") || !j["t"].is_number_integer()) {
      throw ValidationError(where + ": missing integer field 'episode' or 't'");
    }
    d.episode = j["episode"].get<int>();
    d.t = j["t"].get<int>();
    if (!demos.empty() && (d.obs.size() != demos[0].obs.size() ||
                           d.action.size() != demos[0].action.size())) {
      throw ValidationError(where + ": dimensions differ from earlier lines");
    }
    demos.push_back(std::move(d));
  });
  if (demos.empty()) {
    throw ValidationError(path + ": no demonstrations");
  }
  return demos;
}

// ---------------------------------------------------------------------------
// couplings

inline void save_couplings(const std::string& path, const CouplingSet& couplings) {
  std::string out;
  for (const CouplingRecord& r : couplings) {
    json j{{"obs", r.obs},
           {"noise", r.noise},
           {"action", r.action},
           {"source", source_name(r.source)},
           {"replaced", r.replaced}};
    out += j.dump();
    out += '\n';
  }
  detail::write_file(path, out);
}

inline CouplingSet load_couplings(const std::string& path) {
  CouplingSet couplings;
  detail::for_each_jsonl(path, [&](const json& j, int lineno) {
    const std::string where = path + " line " + std::to_string(lineno);
    CouplingRecord r;
    r.obs = detail::number_array(j, "obs", where);
    r.noise = detail::number_array(j, "noise", where);
    r.action = detail::number_array(j, "action", where);
    if (!j.contains("source") || !j["source"].is_string() ||
        !j.contains("replaced") || !j["replaced"].is_boolean()) {
      throw ValidationError(where + ": missing 'source' or 'replaced'");
    }
    try {
      r.source = parse_source(j["source"].get<std::string>());
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    r.replaced = j["replaced"].get<bool>();
    if (r.noise.size() != r.action.size()) {
      throw ValidationError(where + ": noise dimension " +
                            std::to_string(r.noise.size()) +
                            " != action dimension " + std::to_string(r.action.size()));
    }
    if (r.source == Source::groundtruth && r.replaced) {
      throw ValidationError(where + ": groundtruth couplings cannot be replaced");
    }
    if (!couplings.empty() && (r.obs.size() != couplings[0].obs.size() ||
                               r.action.size() != couplings[0].action.size())) {
      throw ValidationError(where + ": dimensions differ from earlier lines");
    }
    couplings.push_back(std::move(r));
  });
  if (couplings.empty()) {
    throw ValidationError(path + ": no couplings");
  }
  return couplings;
}

// ---------------------------------------------------------------------------
// checkpoints

struct Provenance {
  std::string parent_checkpoint_sha256;
  std::string couplings_sha256;
};

struct Checkpoint {
  Stage stage = Stage::base;
  VelocityNet net;
  std::optional<TrainConfig> train_config;
  std::optional<Provenance> provenance;  // required for reflow/sefa
};

namespace detail {

inline json weights_to_json(const TensorBuffer& w) {
  json rows = json::array();
  for (int i = 0; i < w.shape[0]; ++i) {
    json row = json::array();
    for (int j = 0; j < w.shape[1]; ++j) {
      row.push_back(w.at(i, j));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline TensorBuffer weights_from_json(const json& rows, int want_rows, int want_cols,
                                      const std::string& where) {
  if (!rows.is_array() || static_cast<int>(rows.size()) != want_rows) {
    throw ValidationError(where + ": expected " + std::to_string(want_rows) + " rows");
  }
  TensorBuffer w({want_rows, want_cols});
  for (int i = 0; i < want_rows; ++i) {
    const json& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<int>(row.size()) != want_cols) {
      throw ValidationError(where + ": row " + std::to_string(i) + " expected " +
                            std::to_string(want_cols) + " columns");
    }
    for (int j = 0; j < want_cols; ++j) {
      const json& v = row[static_cast<std::size_t>(j)];
      if (!v.is_number() || !std::isfinite(v.get<double>())) {
        throw ValidationError(where + ": non-finite weight");
      }
      w.at(i, j) = v.get<double>();
    }
  }
  return w;
}

inline json train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch", c.batch},
              {"lr", c.lr},
              {"seed", c.seed},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"eps", c.eps},
              {"weight_decay", c.weight_decay}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch = j.at("batch").get<int>();
  c.lr = j.at("lr").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  return c;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const VelocityNet& net = ckpt.net;
  json weights = json::object();
  for (int l = 0; l < net.num_layers(); ++l) {
    weights["w" + std::to_string(l + 1)] = detail::weights_to_json(net.weights[l]);
    weights["b" + std::to_string(l + 1)] = net.biases[l].data;
  }
  json doc{
      {"format_version", kCheckpointFormatVersion},
      {"stage", stage_name(ckpt.stage)},
      {"arch",
       {{"action_dim", net.arch.action_dim},
        {"obs_dim", net.arch.obs_dim},
        {"hidden", net.arch.hidden},
        {"time_harmonics", net.arch.time_harmonics},
        {"activation", "tanh"},
        {"input_layout", "action,time,obs"}}},
      {"normalizer",
       {{"obs_min", net.norm.obs_min},
        {"obs_max", net.norm.obs_max},
        {"act_min", net.norm.act_min},
        {"act_max", net.norm.act_max}}},
      {"weights", std::move(weights)},
      {"train_config", ckpt.train_config
                           ? detail::train_config_to_json(*ckpt.train_config)
                           : json(nullptr)},
      {"provenance",
       ckpt.provenance
           ? json{{"parent_checkpoint_sha256", ckpt.provenance->parent_checkpoint_sha256},
                  {"couplings_sha256", ckpt.provenance->couplings_sha256}}
           : json(nullptr)},
  };
  detail::write_file(path, doc.dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  json doc;
  try {
    doc = json::parse(detail::read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!doc.contains("format_version") || !doc["format_version"].is_number_integer()) {
    throw ValidationError(path + ": missing format_version");
  }
  if (doc["format_version"].get<int>() != kCheckpointFormatVersion) {
    throw VersionError(path + ": unsupported format_version " +
                       doc["format_version"].dump() + " (want " +
                       std::to_string(kCheckpointFormatVersion) + ")");
  }
  Checkpoint ckpt;
  try {
    ckpt.stage = parse_stage(doc.at("stage").get<std::string>());
    const json& arch = doc.at("arch");
    NetArch na;
    na.action_dim = arch.at("action_dim").get<int>();
    na.obs_dim = arch.at("obs_dim").get<int>();
    na.hidden = arch.at("hidden").get<std::vector<int>>();
    na.time_harmonics = arch.value("time_harmonics", 0);
    if (na.action_dim < 1 || na.obs_dim < 1 || na.time_harmonics < 0) {
      throw ValidationError(path + ": bad arch dimensions");
    }
    if (arch.at("activation").get<std::string>() != "tanh") {
      throw ValidationError(path + ": unsupported activation");
    }
    ckpt.net.arch = na;

    const json& nj = doc.at("normalizer");
    Normalizer& norm = ckpt.net.norm;
    norm.obs_min = detail::number_array(nj, "obs_min", path);
    norm.obs_max = detail::number_array(nj, "obs_max", path);
    norm.act_min = detail::number_array(nj, "act_min", path);
    norm.act_max = detail::number_array(nj, "act_max", path);
    norm.fitted = true;
    if (static_cast<int>(norm.obs_min.size()) != na.obs_dim ||
        norm.obs_max.size() != norm.obs_min.size() ||
        static_cast<int>(norm.act_min.size()) != na.action_dim ||
        norm.act_max.size() != norm.act_min.size()) {
      throw ValidationError(path + ": normalizer dimensions do not match arch");
    }
    for (std::size_t i = 0; i < norm.obs_min.size(); ++i) {
      if (norm.obs_max[i] < norm.obs_min[i]) {
        throw ValidationError(path + ": normalizer obs max < min");
      }
    }
    for (std::size_t i = 0; i < norm.act_min.size(); ++i) {
      if (norm.act_max[i] < norm.act_min[i]) {
        throw ValidationError(path + ": normalizer act max < min");
      }
    }

    const json& weights = doc.at("weights");
    const std::vector<int> dims = na.layer_dims();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const std::string wkey = "w" + std::to_string(l + 1);
      const std::string bkey = "b" + std::to_string(l + 1);
      if (!weights.contains(wkey) || !weights.contains(bkey)) {
        throw ValidationError(path + ": missing tensor " + wkey + " or " + bkey);
      }
      ckpt.net.weights.push_back(detail::weights_from_json(
          weights[wkey], dims[l], dims[l + 1], path + ": " + wkey));
      std::vector<double> b = detail::number_array(weights, bkey.c_str(), path);
      if (static_cast<int>(b.size()) != dims[l + 1]) {
        throw ValidationError(path + ": " + bkey + " expected length " +
                              std::to_string(dims[l + 1]));
      }
      ckpt.net.biases.emplace_back(std::vector<int>{dims[l + 1]}, std::move(b));
    }

    if (doc.contains("train_config") && !doc["train_config"].is_null()) {
      ckpt.train_config = detail::train_config_from_json(doc["train_config"]);
    }
    if (doc.contains("provenance") && !doc["provenance"].is_null()) {
      Provenance p;
      p.parent_checkpoint_sha256 =
          doc["provenance"].at("parent_checkpoint_sha256").get<std::string>();
      p.couplings_sha256 = doc["provenance"].at("couplings_sha256").get<std::string>();
      ckpt.provenance = p;
    }
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  if (ckpt.stage != Stage::base && !ckpt.provenance) {
    throw ValidationError(path + ": " + stage_name(ckpt.stage) +
                          " checkpoint requires provenance");
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// eval report

struct EvalReportDoc {
  json config = json::object();
  StudyResult study;
  double straightness = 0.0;
  double transport_cost = 0.0;
  std::optional<AlignmentReport> alignment;
};

inline void save_report(const std::string& path, const EvalReportDoc& doc) {
  json per_seed = json::array();
  for (const SeedRate& s : doc.study.per_seed) {
    per_seed.push_back(json{{"seed", s.seed}, {"success_rate", s.success_rate}});
  }
  json j{{"config", doc.config},
         {"per_seed", std::move(per_seed)},
         {"mean", doc.study.mean},
         {"std", doc.study.stddev},
         {"nfe_per_prediction", doc.study.nfe_per_prediction},
         {"straightness", doc.straightness},
         {"transport_cost", doc.transport_cost},
         {"alignment", doc.alignment
                           ? json{{"total", doc.alignment->total},
                                  {"replaced", doc.alignment->replaced},
                                  {"fraction", doc.alignment->fraction}}
                           : json(nullptr)}};
  detail::write_file(path, j.dump(2) + "\n");
}

inline json load_report(const std::string& path) {
  try {
    return json::parse(detail::read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void save_alignment_report(const std::string& path, const AlignmentReport& r) {
  json j{{"total", r.total},
         {"replaced", r.replaced},
         {"fraction", r.fraction},
         {"mean_replaced_distance", r.mean_replaced_distance},
         {"mean_preserved_distance", r.mean_preserved_distance}};
  detail::write_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// trajectory export (figure data)

// CSV of probe-step Euler paths in normalized action space, one block of
// steps+1 rows per sample. Sample i draws from derive_seed(seed, i): first
// the demo index for the conditioning observation, then the noise vector.
inline void export_paths(const std::string& path, const VelocityNet& net,
                         const std::vector<Demonstration>& demos, int samples,
                         int steps, std::uint64_t seed) {
  if (samples < 1 || steps < 1) {
    throw InvalidArgumentError("export_paths: samples and steps must be >= 1");
  }
  if (demos.empty()) {
    throw InvalidArgumentError("export_paths: empty demonstration set");
  }
  if (!net.norm.fitted) {
    throw StateError("export_paths: net has no fitted normalizer");
  }
  std::string out = "sample,step,s";
  for (int d = 0; d < net.arch.action_dim; ++d) {
    out += ",dim" + std::to_string(d);
  }
  out += '\n';
  for (int i = 0; i < samples; ++i) {
    DeterministicRng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const std::size_t demo_idx =
        static_cast<std::size_t>(rng.next_below(demos.size()));
    const std::vector<double> obs_n = net.norm.normalize_obs(demos[demo_idx].obs);
    const std::vector<double> noise = rng.gaussian_vector(net.arch.action_dim);
    const SamplePath sp = euler_integrate(net, noise, obs_n, steps);
    for (std::size_t k = 0; k < sp.times.size(); ++k) {
      out += std::to_string(i);
      out += ',';
      out += std::to_string(k);
      out += ',';
      out += detail::format_double(sp.times[k]);
      for (double v : sp.states[k]) {
        out += ',';
        out += detail::format_double(v);
      }
      out += '\n';
    }
  }
  detail::write_file(path, out);
}

// ---------------------------------------------------------------------------
// misc CLI grammar

// "A..B" (inclusive) or a single "A".
inline std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      return {static_cast<std::uint64_t>(std::stoull(text))};
    }
    const std::uint64_t lo = std::stoull(text.substr(0, dots));
    const std::uint64_t hi = std::stoull(text.substr(dots + 2));
    if (hi < lo) {
      throw InvalidArgumentError("");
    }
    std::vector<std::uint64_t> out;
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  } catch (const std::exception&) {
    throw InvalidArgumentError("bad seed range '" + text + "' (want A..B or A)");
  }
}

}  // namespace sefa
