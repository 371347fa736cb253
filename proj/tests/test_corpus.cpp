// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "lgdea/corpus.hpp"
#include "lgdea/errors.hpp"
#include "lgdea/evidence.hpp"

using namespace lgdea;

namespace {
GenConfig small_config() {
  GenConfig cfg;
  cfg.n_images = 40;
  cfg.pairing_ratio = 0.25;
  cfg.n_concepts = 4;
  cfg.d_pix = 8;
  cfg.patches = 16;
  cfg.tokens_per_concept = 10;
  cfg.background_tokens = 30;
  return cfg;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}
}  // namespace

TEST_CASE("generate_corpus: pairing split and determinism") {
  GenConfig cfg = small_config();

  SUBCASE("full pairing") {
    cfg.pairing_ratio = 1.0;
    Corpus corpus = generate_corpus(cfg, 7);
    CHECK(corpus.paired.size() == 40);
    CHECK(corpus.unpaired_images.empty());
    CHECK(corpus.unpaired_reports.empty());
  }

  SUBCASE("10% pairing") {
    cfg.n_images = 1000;
    cfg.pairing_ratio = 0.10;
    Corpus corpus = generate_corpus(cfg, 7);
    CHECK(std::abs(static_cast<int>(corpus.paired.size()) - 100) <= 1);
    CHECK(corpus.unpaired_images.size() == 1000 - corpus.paired.size());
    CHECK(corpus.unpaired_reports.size() == corpus.unpaired_images.size());
  }

  SUBCASE("same seed twice is bit-identical") {
    Corpus a = generate_corpus(cfg, 99);
    Corpus b = generate_corpus(cfg, 99);
    CHECK(a == b);
    Corpus c = generate_corpus(cfg, 100);
    CHECK(a != c);
  }

  SUBCASE("invalid configs rejected") {
    GenConfig bad = cfg;
    bad.pairing_ratio = 0.0;
    CHECK_THROWS_AS(generate_corpus(bad, 1), ConfigError);
    bad = cfg;
    bad.n_concepts = 1;
    CHECK_THROWS_AS(generate_corpus(bad, 1), ConfigError);
    bad = cfg;
    bad.patches = 15;  // not a square
    CHECK_THROWS_AS(generate_corpus(bad, 1), ConfigError);
  }
}

TEST_CASE("corpus invariants: concepts, masks, vocabulary structure") {
  GenConfig cfg = small_config();
  Corpus corpus = generate_corpus(cfg, 3);

  for (const auto& [img, rep] : corpus.paired) {
    CHECK(img.true_concepts == rep.true_concepts);
    for (int c : img.true_concepts) {
      REQUIRE(img.lesion_mask.contains(c));
      CHECK(!img.lesion_mask.at(c).empty());
      CHECK(img.lesion_mask.at(c).size() <= 4);
    }
    // Masks for distinct concepts are disjoint.
    std::set<int> seen;
    for (const auto& [c, patch_list] : img.lesion_mask)
      for (int p : patch_list) CHECK(seen.insert(p).second);
    // Every sentence holds tokens of exactly one concept plus background.
    for (const auto& sentence : rep.sentences) {
      std::set<int> concepts_in_sentence;
      for (int tok : sentence) {
        const int c = corpus.world.concept_of_token(tok);
        if (c >= 0) concepts_in_sentence.insert(c);
      }
      CHECK(concepts_in_sentence.size() == 1);
    }
  }

  // Signatures pairwise separated.
  Matrix cos = cosine_rows(corpus.world.lesion_signatures, corpus.world.lesion_signatures);
  for (std::size_t i = 0; i < cos.rows(); ++i)
    for (std::size_t j = 0; j < cos.cols(); ++j)
      if (i != j) CHECK(std::abs(cos.at(i, j)) < 0.5);
}

TEST_CASE("cross-domain flag shifts unpaired image backgrounds") {
  GenConfig cfg = small_config();
  cfg.cross_domain = true;
  cfg.cross_domain_shift = 2.0;
  Corpus corpus = generate_corpus(cfg, 5);
  auto patch_mean = [](const ImageSample& img) {
    double sum = 0.0;
    for (std::size_t i = 0; i < img.patches.size(); ++i) sum += img.patches[i];
    return sum / static_cast<double>(img.patches.size());
  };
  double paired_mean = 0.0, unpaired_mean = 0.0;
  for (const auto& [img, rep] : corpus.paired) paired_mean += patch_mean(img);
  for (const auto& img : corpus.unpaired_images) unpaired_mean += patch_mean(img);
  paired_mean /= static_cast<double>(corpus.paired.size());
  unpaired_mean /= static_cast<double>(corpus.unpaired_images.size());
  CHECK(unpaired_mean - paired_mean > 1.0);
}

TEST_CASE("save/load: bit-exact round trip, truncation, empty collections") {
  GenConfig cfg = small_config();
  Corpus corpus = generate_corpus(cfg, 11);
  const auto path = temp_file("lgdea_corpus_roundtrip.jsonl");
  save_corpus(corpus, path.string());
  Corpus loaded = load_corpus(path.string());
  CHECK(loaded == corpus);

  SUBCASE("truncated file rejected") {
    std::ifstream in(path);
    std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::trunc);
    out << contents.substr(0, contents.size() * 2 / 3);
    out.close();
    CHECK_THROWS_AS(load_corpus(path.string()), FormatError);
  }

  SUBCASE("zero unpaired reports load as empty list") {
    cfg.pairing_ratio = 1.0;
    Corpus full = generate_corpus(cfg, 2);
    save_corpus(full, path.string());
    Corpus back = load_corpus(path.string());
    CHECK(back.unpaired_reports.empty());
    CHECK(back.unpaired_images.empty());
    CHECK(back == full);
  }

  SUBCASE("wrong kind rejected") {
    std::ofstream out(path, std::ios::trunc);
    out << "{\"schema_version\":1,\"kind\":\"other\"}\n";
    out.close();
    CHECK_THROWS_AS(load_corpus(path.string()), FormatError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("ground-truth extractor: generator round trip") {
  GenConfig cfg = small_config();
  Corpus corpus = generate_corpus(cfg, 23);
  for (const auto& [img, rep] : corpus.paired) {
    auto phrases = extract_ground_truth(rep, corpus.world);
    CHECK(phrases.size() == rep.sentences.size());
    // Mapping phrases back through vocab membership recovers true_concepts.
    std::set<int> recovered;
    for (const auto& ph : phrases) {
      CHECK(ph.source_report == rep.id);
      for (int tok : ph.tokens) {
        const int c = corpus.world.concept_of_token(tok);
        if (c >= 0) recovered.insert(c);
      }
    }
    CHECK(recovered == rep.true_concepts);
  }
}

TEST_CASE("rule extractor: drops background-only sentences") {
  GenConfig cfg = small_config();
  Corpus corpus = generate_corpus(cfg, 29);
  const ConceptWorld& world = corpus.world;

  Report rep;
  rep.id = 77;
  rep.sentences = {{0, 1, 2}, {world.first_concept_token(1), 3}};  // background-only, then concept
  auto phrases = extract_rule_based(rep, world);
  REQUIRE(phrases.size() == 1);
  CHECK(phrases[0].tokens == rep.sentences[1]);

  Report background_only;
  background_only.id = 78;
  background_only.sentences = {{0, 1}, {2, 3}};
  CHECK(extract_rule_based(background_only, world).empty());

  Report empty;
  CHECK_THROWS_AS(extract_rule_based(empty, world), InputError);
}

TEST_CASE("llm extractor: mock endpoint, ordering, caching, errors") {
  GenConfig cfg = small_config();
  Corpus corpus = generate_corpus(cfg, 31);
  const Report& rep = corpus.paired[0].second;

  httplib::Server server;
  int hits = 0;
  server.Post("/v1/complete", [&](const httplib::Request& req, httplib::Response& res) {
    CHECK(req.body.find("t") != std::string::npos);  // rendered report present
    ++hits;
    res.set_content("t201 t202 t0\nt215 t3\n", "text/plain");
  });
  server.Post("/v1/broken", [&](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("backend exploded", "text/plain");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  LlmBackendConfig llm_cfg;
  llm_cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/complete";
  llm_cfg.prompt_template = LlmExtractor::default_prompt_template();

  SUBCASE("two lines come back as two phrases in order") {
    LlmExtractor extractor(llm_cfg);
    auto phrases = extractor.extract(rep);
    REQUIRE(phrases.size() == 2);
    CHECK(phrases[0].tokens == std::vector<int>{201, 202, 0});
    CHECK(phrases[1].tokens == std::vector<int>{215, 3});
    CHECK(phrases[0].source_report == rep.id);
  }

  SUBCASE("disk cache makes the second call offline") {
    auto cache_dir = std::filesystem::temp_directory_path() / "lgdea_llm_cache_test";
    std::filesystem::remove_all(cache_dir);
    llm_cfg.cache_dir = cache_dir.string();
    LlmExtractor extractor(llm_cfg);
    auto first = extractor.extract(rep);
    const int hits_after_first = hits;
    auto second = extractor.extract(rep);
    CHECK(hits == hits_after_first);  // served from cache
    CHECK(first.size() == second.size());
    std::filesystem::remove_all(cache_dir);
  }

  SUBCASE("http failure carries the raw response") {
    llm_cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/broken";
    LlmExtractor extractor(llm_cfg);
    try {
      extractor.extract(rep);
      FAIL("expected ExtractionError");
    } catch (const ExtractionError& e) {
      CHECK(e.raw_response() == "backend exploded");
    }
  }

  SUBCASE("template must hold the placeholder") {
    llm_cfg.prompt_template = "no placeholder";
    CHECK_THROWS_AS(LlmExtractor{llm_cfg}, ConfigError);
  }

  server.stop();
  listener.join();
}

TEST_CASE("llm line parsing tolerates prose around tokens") {
  CHECK(LlmExtractor::parse_phrase_line("t12 t7 t300") == std::vector<int>{12, 7, 300});
  CHECK(LlmExtractor::parse_phrase_line("finding: 12 7") == std::vector<int>{12, 7});
  CHECK(LlmExtractor::parse_phrase_line("no tokens here").empty());
  CHECK(LlmExtractor::parse_phrase_line("").empty());
}
