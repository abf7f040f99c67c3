#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "uds/diversity_buffer.hpp"
#include "uds/srft.hpp"
#include "uds/toy_lm.hpp"

namespace uds {

using nlohmann::json;

inline constexpr std::string_view kIoVersion = "uds-io-v1";

// --------------------------------------------------------------------------
// Projection factor: self-describing JSON record; signs and indices are
// integers so the round trip is bit-exact.

inline json factor_to_json(const ProjectionFactor<double>& g) {
  json j;
  j["kind"] = "projection-factor";
  j["io_version"] = kIoVersion;
  j["version"] = g.version;
  j["input_dim"] = g.input_dim;
  j["output_dim"] = g.output_dim;
  j["seed"] = g.seed;
  j["scale"] = g.scale;
  std::vector<int> signs(static_cast<std::size_t>(g.signs.size()));
  for (Index i = 0; i < g.signs.size(); ++i)
    signs[static_cast<std::size_t>(i)] = g.signs(i) > 0 ? 1 : -1;
  j["signs"] = signs;
  j["selected_rows"] = g.selected_rows;
  return j;
}

inline ProjectionFactor<double> factor_from_json(const json& j) {
  if (j.value("kind", "") != "projection-factor")
    throw std::invalid_argument("factor_from_json: not a projection-factor record");
  ProjectionFactor<double> g;
  g.version = j.at("version").get<std::string>();
  g.input_dim = j.at("input_dim").get<Index>();
  g.output_dim = j.at("output_dim").get<Index>();
  g.seed = j.at("seed").get<std::uint64_t>();
  g.scale = j.at("scale").get<double>();
  const auto signs = j.at("signs").get<std::vector<int>>();
  g.signs.resize(static_cast<Index>(signs.size()));
  for (std::size_t i = 0; i < signs.size(); ++i)
    g.signs(static_cast<Index>(i)) = static_cast<double>(signs[i]);
  g.selected_rows = j.at("selected_rows").get<std::vector<Index>>();
  detail::validate_factor(g);
  return g;
}

// --------------------------------------------------------------------------
// Memory buffer checkpoint

inline json buffer_to_json(const MemoryBuffer<double>& buffer) {
  json j;
  j["kind"] = "memory-buffer";
  j["io_version"] = kIoVersion;
  j["capacity"] = buffer.capacity();
  j["dim"] = buffer.dim();
  j["total_pushed"] = buffer.total_pushed();
  json entries = json::array();
  for (const auto& e : buffer.entries()) {
    json entry;
    entry["step"] = e.source_step;
    entry["sample"] = e.source_sample;
    entry["data"] = std::vector<double>(e.data.data(), e.data.data() + e.data.size());
    entries.push_back(std::move(entry));
  }
  j["entries"] = std::move(entries);
  return j;
}

inline MemoryBuffer<double> buffer_from_json(const json& j) {
  if (j.value("kind", "") != "memory-buffer")
    throw std::invalid_argument("buffer_from_json: not a memory-buffer record");
  MemoryBuffer<double> buffer(j.at("capacity").get<Index>(), j.at("dim").get<Index>());
  std::vector<Embedding<double>> entries;
  for (const auto& entry : j.at("entries")) {
    Embedding<double> e;
    e.source_step = entry.at("step").get<std::int64_t>();
    e.source_sample = entry.at("sample").get<std::int64_t>();
    const auto data = entry.at("data").get<std::vector<double>>();
    e.data = Eigen::Map<const VectorX<double>>(data.data(),
                                               static_cast<Index>(data.size()));
    entries.push_back(std::move(e));
  }
  buffer.restore(std::move(entries), j.at("total_pushed").get<std::uint64_t>());
  return buffer;
}

inline void save_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_json: cannot open " + path);
  return json::parse(in);
}

// --------------------------------------------------------------------------
// Toy model checkpoint: little binary header plus raw parameter doubles.

namespace detail {
inline constexpr char kModelMagic[8] = {'U', 'D', 'S', 'T', 'O', 'Y', 'L', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;
}  // namespace detail

inline void save_model(const ToyModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out.write(detail::kModelMagic, sizeof(detail::kModelMagic));
  auto write_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto write_i32 = [&](std::int32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  write_u32(detail::kModelVersion);
  write_i32(model.config().arch == ToyArch::LinearSoftmax ? 0 : 1);
  write_i32(model.config().vocab);
  write_i32(model.config().context);
  write_i32(model.config().embed_dim);
  write_i32(model.config().hidden_dim);
  const std::int64_t n = model.param_count();
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(model.params().data()),
            static_cast<std::streamsize>(n) * 8);
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

inline ToyModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kModelMagic, 8) != 0)
    throw std::runtime_error("load_model: bad magic in " + path);
  auto read_u32 = [&] {
    std::uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto read_i32 = [&] {
    std::int32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  if (read_u32() != detail::kModelVersion)
    throw std::runtime_error("load_model: unsupported version in " + path);
  ToyModelConfig cfg;
  cfg.arch = read_i32() == 0 ? ToyArch::LinearSoftmax : ToyArch::TinyMLP;
  cfg.vocab = read_i32();
  cfg.context = read_i32();
  cfg.embed_dim = read_i32();
  cfg.hidden_dim = read_i32();
  std::int64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), 8);
  ToyModel model(cfg, 0);
  if (n != model.param_count())
    throw std::runtime_error("load_model: parameter count mismatch in " + path);
  in.read(reinterpret_cast<char*>(model.params().data()),
          static_cast<std::streamsize>(n) * 8);
  if (!in) throw std::runtime_error("load_model: truncated file " + path);
  return model;
}

// --------------------------------------------------------------------------
// Corpus record: seed + spec fully determine the corpus, so that is what is
// stored; the loader regenerates.

inline json corpus_spec_to_json(const CorpusSpec& s, std::uint64_t seed) {
  json j;
  j["kind"] = "corpus-spec";
  j["io_version"] = kIoVersion;
  j["seed"] = seed;
  j["num_clusters"] = s.num_clusters;
  j["duplication"] = s.duplication;
  j["num_distinct"] = s.num_distinct;
  j["num_repetitive"] = s.num_repetitive;
  j["eval_samples"] = s.eval_samples;
  j["sample_len"] = s.sample_len;
  j["prompt_len"] = s.prompt_len;
  j["vocab"] = s.vocab;
  j["dup_noise"] = s.dup_noise;
  j["chain_noise"] = s.chain_noise;
  return j;
}

inline SyntheticCorpus corpus_from_json(const json& j) {
  if (j.value("kind", "") != "corpus-spec")
    throw std::invalid_argument("corpus_from_json: not a corpus-spec record");
  CorpusSpec s;
  s.num_clusters = j.at("num_clusters").get<int>();
  s.duplication = j.at("duplication").get<int>();
  s.num_distinct = j.at("num_distinct").get<int>();
  s.num_repetitive = j.at("num_repetitive").get<int>();
  s.eval_samples = j.at("eval_samples").get<int>();
  s.sample_len = j.at("sample_len").get<int>();
  s.prompt_len = j.at("prompt_len").get<int>();
  s.vocab = j.at("vocab").get<int>();
  s.dup_noise = j.at("dup_noise").get<double>();
  s.chain_noise = j.at("chain_noise").get<double>();
  return make_corpus(s, j.at("seed").get<std::uint64_t>());
}

// --------------------------------------------------------------------------
// Key-value config files: one "key = value" (or "key value") pair per line,
// '#' starts a comment.

inline std::map<std::string, std::string> parse_config_text(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  auto trim = [](std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    const auto last = s.find_last_not_of(" \t\r");
    if (first == std::string::npos) return std::string();
    return s.substr(first, last - first + 1);
  };
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::string key, value;
    const auto eq = line.find('=');
    if (eq != std::string::npos) {
      key = trim(line.substr(0, eq));
      value = trim(line.substr(eq + 1));
    } else {
      const auto sp = line.find_first_of(" \t");
      if (sp == std::string::npos)
        throw std::invalid_argument("config: malformed line '" + line + "'");
      key = trim(line.substr(0, sp));
      value = trim(line.substr(sp + 1));
    }
    if (key.empty() || value.empty())
      throw std::invalid_argument("config: malformed line '" + line + "'");
    kv[key] = value;
  }
  return kv;
}

inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  return parse_config_text(in);
}

}  // namespace uds
