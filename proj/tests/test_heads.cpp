#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <set>

#include "e3/decision.hpp"
#include "e3/encoder.hpp"
#include "e3/entailment.hpp"
#include "e3/extraction.hpp"
#include "gradcheck_suite.hpp"
#include "oracles.hpp"

using namespace e3;
using Catch::Approx;

namespace {

encoder_config small_encoder(std::size_t vocab = 20, std::size_t d = 16) {
  encoder_config c;
  c.vocab_size = vocab;
  c.d_model = d;
  c.layers = 2;
  c.heads = 2;
  c.feedforward = 2 * d;
  c.max_position = 32;
  return c;
}

std::vector<int> iota_ids(std::size_t n, int from = 0) {
  std::vector<int> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = from + static_cast<int>(i);
  return v;
}

template <class T>
basic_tensor<T> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<T> v(rows * cols);
  for (auto& x : v) x = static_cast<T>(d(rng));
  return basic_tensor<T>::from_values({rows, cols}, std::move(v), grad);
}

void zero(basic_tensor<float>& t) {
  for (auto& x : t.mutable_data()) x = 0.0f;
}

}  // namespace

// ---------------------------------------------------------------- encoder

TEST_CASE("encoder output has one vector per token", "[encoder]") {
  rng_t rng(1);
  auto cfg = small_encoder(20, 128);
  cfg.heads = 4;
  cfg.feedforward = 256;
  encoder<float> enc(cfg, rng);
  auto u = enc.encode(iota_ids(7, 6), std::vector<int>(7, 0), iota_ids(7), false, rng);
  CHECK(u.shape() == shape_t{7, 128});
}

TEST_CASE("encoder is deterministic without dropout", "[encoder]") {
  rng_t rng(2);
  encoder<float> enc(small_encoder(), rng);
  rng_t a(5), b(6);
  auto u1 = enc.encode(iota_ids(5, 6), std::vector<int>(5, 0), iota_ids(5), false, a);
  auto u2 = enc.encode(iota_ids(5, 6), std::vector<int>(5, 0), iota_ids(5), false, b);
  CHECK(u1.values() == u2.values());
  rng_t c(5), d(6);
  auto t1 = enc.encode(iota_ids(5, 6), std::vector<int>(5, 0), iota_ids(5), true, c);
  auto t2 = enc.encode(iota_ids(5, 6), std::vector<int>(5, 0), iota_ids(5), true, d);
  CHECK(t1.values() != t2.values());
}

TEST_CASE("swapping two positions changes the encoding", "[encoder]") {
  rng_t rng(3);
  encoder<float> enc(small_encoder(), rng);
  auto pos = iota_ids(5);
  auto u1 = enc.encode(iota_ids(5, 6), std::vector<int>(5, 0), pos, false, rng);
  std::swap(pos[1], pos[3]);
  auto u2 = enc.encode(iota_ids(5, 6), std::vector<int>(5, 0), pos, false, rng);
  double diff = 0;
  for (std::size_t i = 0; i < u1.size(); ++i) diff += std::abs(u1[i] - u2[i]);
  CHECK(diff > 1e-3);
}

TEST_CASE("encoder attention rows sum to one", "[encoder]") {
  rng_t rng(4);
  encoder<float> enc(small_encoder(), rng);
  std::vector<tensor> attention;
  enc.encode(iota_ids(6, 6), std::vector<int>(6, 0), iota_ids(6), false, rng, &attention);
  REQUIRE(attention.size() == 4);  // 2 layers x 2 heads
  for (const auto& a : attention) {
    REQUIRE(a.shape() == shape_t{6, 6});
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 6; ++j) s += a[i * 6 + j];
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("gradients reach every encoder parameter", "[encoder]") {
  rng_t rng(5);
  encoder<float> enc(small_encoder(), rng);
  std::vector<int> seg{0, 0, 1, 1, 2, 2};
  auto u = enc.encode(iota_ids(6, 6), seg, iota_ids(6), true, rng);
  auto w = random_matrix<float>(6, 16, 9);
  sum(mul(u, w)).backward();
  for (const auto& [name, t] : enc.parameters()) {
    double g = 0;
    for (auto x : t.grad()) g += std::abs(x);
    INFO(name);
    CHECK(g > 0);
  }
}

TEST_CASE("encoder rejects over-length input", "[encoder]") {
  rng_t rng(6);
  encoder<float> enc(small_encoder(), rng);
  CHECK_THROWS_AS(enc.encode(std::vector<int>(33, 6), std::vector<int>(33, 0), iota_ids(33), false, rng),
                  input_error);
}

// ---------------------------------------------------------------- extraction

TEST_CASE("pair_spans examples", "[extraction]") {
  auto s = pair_spans({0.9, 0.2, 0.6, 0.1}, {0.1, 0.7, 0.2, 0.8}, 0.5);
  CHECK(s == std::vector<rule_span>{{0, 1}, {2, 3}});
  CHECK(pair_spans({0.1, 0.5, 0.3}, {0.9, 0.9, 0.9}, 0.5).empty());
  CHECK(pair_spans({0.9}, {0.9}, 0.5) == std::vector<rule_span>{{0, 0}});
  CHECK(pair_spans({0.9, 0.9}, {0.1, 0.1}, 0.5).empty());
  CHECK(pair_spans({0.9, 0.9, 0.1}, {0.1, 0.1, 0.9}, 0.5) == std::vector<rule_span>{{0, 2}, {1, 2}});
  CHECK_THROWS_AS(pair_spans({0.9}, {0.9, 0.1}, 0.5), std::invalid_argument);
}

TEST_CASE("pair_spans matches the brute-force scan", "[extraction][oracle]") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  std::size_t mismatches = 0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = len(rng);
    std::vector<double> a(n), b(n);
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng);
    const double tau = 0.2 + 0.6 * u(rng);
    auto got = pair_spans(a, b, tau);
    auto want = testing::brute_pair_spans(a, b, tau);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i)
      same = got[i].start == want[i].first && got[i].end == want[i].second;
    for (const auto& s : got) same = same && s.start <= s.end;
    mismatches += !same;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("boundary scores with zero weights are one half", "[extraction]") {
  rng_t rng(1);
  span_extractor<float> ex(4, rng);
  for (auto& [_, t] : ex.parameters()) zero(t);
  auto s = ex.score(random_matrix<float>(5, 4, 1));
  REQUIRE(s.size() == 5);
  for (double a : s.alpha()) CHECK(a == Approx(0.5));
  for (double b : s.beta()) CHECK(b == Approx(0.5));
}

TEST_CASE("span pooling", "[extraction]") {
  rng_t rng(2);
  span_extractor<float> ex(4, rng);
  auto u = random_matrix<float>(6, 4, 2);
  SECTION("single token span returns that row") {
    auto p = ex.pool(u, {3, 3});
    for (std::size_t k = 0; k < 4; ++k) CHECK(p[k] == u[3 * 4 + k]);
  }
  SECTION("attention sums to one and output lies in the hull") {
    auto g = ex.span_attention(u, {1, 4});
    double s = 0;
    for (auto x : g.values()) s += x;
    CHECK(std::abs(s - 1.0) < 1e-6);
    auto p = ex.pool(u, {1, 4});
    for (std::size_t k = 0; k < 4; ++k) {
      float lo = 1e9f, hi = -1e9f;
      for (std::size_t i = 1; i <= 4; ++i) {
        lo = std::min(lo, u[i * 4 + k]);
        hi = std::max(hi, u[i * 4 + k]);
      }
      CHECK(p[k] >= lo - 1e-6f);
      CHECK(p[k] <= hi + 1e-6f);
    }
  }
  SECTION("zero gamma weights give the mean") {
    zero(ex.parameters().get("extract/w_gamma"));
    auto p = ex.pool(u, {0, 2});
    for (std::size_t k = 0; k < 4; ++k) CHECK(p[k] == Approx((u[k] + u[4 + k] + u[8 + k]) / 3.0));
  }
  CHECK_THROWS_AS(ex.pool(u, {4, 6}), std::out_of_range);
}

TEST_CASE("extraction loss values", "[extraction]") {
  boundary_scores<float> s{tensor::vector({0.0f, 0.0f}, true), tensor::vector({0.0f, 0.0f}, true)};
  // start and end terms are both 2 log 2
  CHECK(extraction_loss(s, {{0, 0}}).item() == Approx(4 * std::log(2.0)));
  boundary_scores<float> sat{tensor::vector({30.0f, -30.0f}), tensor::vector({-30.0f, 30.0f})};
  CHECK(extraction_loss(sat, {{0, 1}}).item() < 1e-6);
  CHECK(extraction_loss(sat, {{0, 1}}).item() >= 0);
  CHECK_THROWS_AS(extraction_loss(s, {{1, 2}}), std::out_of_range);

  boundary_scores<float> r{tensor::vector({0.3f, -1.0f, 0.7f, 0.2f}), tensor::vector({-0.4f, 0.9f, 0.1f, 1.1f})};
  const std::vector<rule_span> two{{0, 1}, {2, 3}};
  const double sum_single = extraction_loss(r, {two[0]}, extraction_loss_mode::per_rule).item() +
                            extraction_loss(r, {two[1]}, extraction_loss_mode::per_rule).item();
  CHECK(extraction_loss(r, two, extraction_loss_mode::per_rule).item() == Approx(sum_single));
}

// ---------------------------------------------------------------- entailment

TEST_CASE("overlap_f1 values", "[entailment]") {
  CHECK(overlap_f1({"uk", "resident"}, {"uk", "resident"}) == 1.0);
  CHECK(overlap_f1({"uk", "resident"}, {"france"}) == 0.0);
  CHECK(overlap_f1({}, {"x"}) == 0.0);
  CHECK(overlap_f1({"uk", "resident"}, {"are", "you", "a", "uk", "resident"}) == Approx(0.5714).margin(1e-4));
}

TEST_CASE("entailment scores", "[entailment]") {
  auto s = entail_scores({"uk", "resident"}, {}, {});
  CHECK(s.g == 0.0);
  CHECK(s.h == 0.0);
  CHECK(entail_scores({"uk", "resident"}, {}, {{"uk", "resident"}}).h == 1.0);
  auto civil = tokenize("UK civil service pensions").tokens;
  auto scenario = tokenize("I am 60 years old and I live in the UK with my family.").tokens;
  CHECK(entail_scores(civil, scenario, {}).g < 0.2);
  auto resident = tokenize("UK resident").tokens;
  CHECK(entail_scores(resident, {}, {tokenize("Are you a UK resident?").tokens}).h ==
        Approx(0.5714).margin(1e-3));
}

TEST_CASE("overlap_f1 properties on random token sets", "[entailment]") {
  std::mt19937_64 rng(23);
  const std::vector<std::string> pool{"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1), len(0, 8);
  auto draw = [&] {
    std::vector<std::string> v(len(rng));
    for (auto& t : v) t = pool[pick(rng)];
    return v;
  };
  for (int c = 0; c < 1000; ++c) {
    auto a = draw(), b = draw();
    const double f = overlap_f1(a, b);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
    CHECK(f == overlap_f1(b, a));
    auto shuffled = b;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (!b.empty()) shuffled.push_back(b.front());
    CHECK(f == overlap_f1(a, shuffled));
    std::vector<std::vector<std::string>> hist;
    double prev = 0.0;
    for (int k = 0; k < 4; ++k) {
      hist.push_back(draw());
      const double h = entail_scores(a, {}, hist).h;
      CHECK(h >= prev);
      prev = h;
    }
  }
}

TEST_CASE("enrich appends the two scores", "[entailment]") {
  auto pooled = tensor::vector({0.5f, -1.0f, 2.0f});
  auto a = enrich(pooled, {0.25, 0.75});
  CHECK(a.values() == std::vector<float>{0.5f, -1.0f, 2.0f, 0.25f, 0.75f});
  auto z = enrich(tensor::zeros({128}), {});
  CHECK(z.size() == 130);
  CHECK(z[128] == 0.0f);
  CHECK(z[129] == 0.0f);
  CHECK_THROWS_AS(enrich(tensor{}, {}), std::invalid_argument);
}

TEST_CASE("entailment scores carry no gradient", "[entailment]") {
  auto pooled = tensor::vector({1.0f, 2.0f}, true);
  auto a = enrich(pooled, {0.4, 0.6});
  sum(mul(a, a)).backward();
  CHECK(pooled.grad()[0] == Approx(2.0));
  CHECK(pooled.grad()[1] == Approx(4.0));
}

// ---------------------------------------------------------------- decision

TEST_CASE("summary attention", "[decision]") {
  rng_t rng(1);
  decision_head<float> head(4, rng);
  auto u = random_matrix<float>(5, 4, 5);
  auto phi = head.summary_attention(u);
  double s = 0;
  for (auto x : phi.values()) s += x;
  CHECK(std::abs(s - 1.0) < 1e-6);
  auto one = random_matrix<float>(1, 4, 6);
  auto c1 = head.summarize(one);
  for (std::size_t k = 0; k < 4; ++k) CHECK(c1[k] == one[k]);
  zero(head.parameters().get("decide/w_phi"));
  auto c = head.summarize(u);
  for (std::size_t k = 0; k < 4; ++k) {
    double m = 0;
    for (std::size_t i = 0; i < 5; ++i) m += u[i * 4 + k];
    CHECK(c[k] == Approx(m / 5));
  }
}

TEST_CASE("decision scores and loss", "[decision]") {
  rng_t rng(2);
  decision_head<float> head(4, rng);
  zero(head.parameters().get("decide/w_class"));
  auto c = tensor::vector({1.0f, 2.0f, 3.0f, 4.0f});
  auto a = tensor::vector({0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.0f});
  auto out = head.score(c, {a, a});
  for (std::size_t k = 0; k < 4; ++k) CHECK(out.z[k] == 0.0f);
  REQUIRE(out.rule_count() == 2);
  CHECK(out.r[0] == out.r[1]);
  CHECK(head.score(c, {}).rule_count() == 0);

  CHECK(decision_loss(out, decision::yes, std::nullopt).loss.item() == Approx(std::log(4.0)));
  auto inq = decision_loss(out, decision::inquire, 0);
  CHECK(inq.loss.item() == Approx(std::log(4.0) + std::log(2.0)));
  CHECK_FALSE(inq.flagged);
  auto flagged = decision_loss(head.score(c, {}), decision::inquire, std::nullopt);
  CHECK(flagged.flagged);
  CHECK(flagged.loss.item() == Approx(std::log(4.0)));
  CHECK_THROWS_AS(decision_loss(out, decision::inquire, 2), std::out_of_range);

  decision_output<float> confident{c, tensor::vector({40.0f, 0.0f, 0.0f, 0.0f}), {}};
  CHECK(decision_loss(confident, decision::yes, std::nullopt).loss.item() < 1e-6);
}

TEST_CASE("inference rule", "[decision]") {
  CHECK(infer_move({2, 0, 0, 0}, {}).label == decision::yes);
  auto m = infer_move({0, 0, 0, 2}, {0.3, 1.2});
  CHECK(m.label == decision::inquire);
  CHECK(m.rule_index == 1u);
  CHECK(infer_move({1, 1, 0, 0}, {}).label == decision::yes);
  CHECK(infer_move({0, 0, 0, 2}, {0.5, 0.5}).rule_index == 0u);
  auto fallback = infer_move({0, 1, 0, 2}, {});
  CHECK(fallback.label == decision::no);
  CHECK_FALSE(fallback.rule_index);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  for (int c = 0; c < 200; ++c) {
    std::vector<double> z{n(rng), n(rng), n(rng), n(rng)}, r{n(rng), n(rng)};
    auto shifted = z;
    const double k = 10 * n(rng);
    for (auto& x : shifted) x += k;
    CHECK(infer_move(z, r).label == infer_move(shifted, r).label);
  }
}


// ---------------------------------------------------------------- composite gradients

TEST_CASE("composite heads match finite differences", "[gradcheck]") {
  for (const auto& c : testing::head_gradient_checks(3)) {
    INFO(c.name << " err32=" << c.worst.err32 << " err64=" << c.worst.err64);
    CHECK(c.worst.err32 < 1e-3);
    CHECK(c.worst.err64 < 1e-5);
  }
}
