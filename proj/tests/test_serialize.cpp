#include <doctest.h>

#include <cstdio>
#include <sstream>

#include "oracles.hpp"
#include "uds/serialize.hpp"

using namespace uds;

TEST_CASE("projection factors round-trip bit-exact through JSON") {
  const auto [g1, g2] = build_projection<double>(37, 19, 11, 7, 12345);
  for (const auto& g : {g1, g2}) {
    const json j = factor_to_json(g);
    const std::string text = j.dump();
    const auto back = factor_from_json(json::parse(text));
    CHECK(back.version == g.version);
    CHECK(back.input_dim == g.input_dim);
    CHECK(back.output_dim == g.output_dim);
    CHECK(back.seed == g.seed);
    CHECK(back.scale == g.scale);
    CHECK(back.signs == g.signs);
    CHECK(back.selected_rows == g.selected_rows);
  }
}

TEST_CASE("corrupted factor records are rejected on load") {
  const auto [g1, g2] = build_projection<double>(16, 8, 4, 2, 5);
  json j = factor_to_json(g1);
  j["selected_rows"] = std::vector<Index>{3, 3, 5, 7};
  CHECK_THROWS_AS(factor_from_json(j), std::invalid_argument);
  json k = factor_to_json(g1);
  k["kind"] = "something-else";
  CHECK_THROWS_AS(factor_from_json(k), std::invalid_argument);
}

TEST_CASE("memory buffer checkpoints restore entries and counters exactly") {
  Rng rng(700);
  MemoryBuffer<double> buffer(6, 4);
  std::vector<Embedding<double>> batch;
  for (int i = 0; i < 8; ++i) {
    Embedding<double> e;
    e.data = oracles::random_matrix(4, 1, rng);
    e.source_step = i / 2;
    e.source_sample = i;
    batch.push_back(e);
    if (batch.size() == 2) {
      push_selected(buffer, batch);
      batch.clear();
    }
  }
  const json j = buffer_to_json(buffer);
  const auto back = buffer_from_json(json::parse(j.dump()));
  CHECK(back.capacity() == buffer.capacity());
  CHECK(back.dim() == buffer.dim());
  CHECK(back.total_pushed() == buffer.total_pushed());
  REQUIRE(back.size() == buffer.size());
  for (Index i = 0; i < buffer.size(); ++i) {
    const auto& a = buffer.entries()[static_cast<std::size_t>(i)];
    const auto& b = back.entries()[static_cast<std::size_t>(i)];
    CHECK(a.data == b.data);
    CHECK(a.source_step == b.source_step);
    CHECK(a.source_sample == b.source_sample);
  }
}

TEST_CASE("model checkpoints restore parameters exactly") {
  ToyModelConfig cfg;
  cfg.arch = ToyArch::TinyMLP;
  cfg.vocab = 24;
  cfg.context = 10;
  cfg.embed_dim = 5;
  cfg.hidden_dim = 7;
  ToyModel model(cfg, 404);
  const std::string path = "test_model_ckpt.bin";
  save_model(model, path);
  const ToyModel back = load_model(path);
  std::remove(path.c_str());
  CHECK(back.config().arch == cfg.arch);
  CHECK(back.config().vocab == cfg.vocab);
  CHECK(back.param_count() == model.param_count());
  CHECK(back.params() == model.params());
}

TEST_CASE("corpus records regenerate the identical corpus") {
  CorpusSpec spec;
  spec.num_clusters = 4;
  spec.duplication = 3;
  spec.num_distinct = 5;
  spec.eval_samples = 4;
  spec.sample_len = 16;
  spec.vocab = 32;
  const auto original = make_corpus(spec, 777);
  const json j = corpus_spec_to_json(spec, 777);
  const auto back = corpus_from_json(json::parse(j.dump()));
  REQUIRE(back.train.size() == original.train.size());
  for (std::size_t i = 0; i < back.train.size(); ++i)
    CHECK(back.train[i].tokens == original.train[i].tokens);
  REQUIRE(back.eval.size() == original.eval.size());
  for (std::size_t i = 0; i < back.eval.size(); ++i)
    CHECK(back.eval[i].tokens == original.eval[i].tokens);
}

TEST_CASE("key-value config text accepts both separators and comments") {
  std::istringstream in(
      "# run setup\n"
      "alpha = 0.003\n"
      "policy uds\n"
      "steps=250   # inline comment\n"
      "\n"
      "out_dir = runs/exp1\n");
  const auto kv = parse_config_text(in);
  CHECK(kv.at("alpha") == "0.003");
  CHECK(kv.at("policy") == "uds");
  CHECK(kv.at("steps") == "250");
  CHECK(kv.at("out_dir") == "runs/exp1");

  std::istringstream bad("justakeyword\n");
  CHECK_THROWS_AS(parse_config_text(bad), std::invalid_argument);
}
