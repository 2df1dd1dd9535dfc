#include <doctest.h>

#include <cmath>
#include <numeric>

#include "uprec/objectives.hpp"

using namespace uprec;

namespace {

AttributeSchema one_numeric_one_discrete(int cardinality) {
  AttributeSchema s;
  s.numeric_names = {"num"};
  s.discrete_names = {"disc"};
  s.discrete_cardinalities = {cardinality};
  s.discrete_labels = {std::vector<std::string>(cardinality, "x")};
  for (int i = 0; i < cardinality; ++i) s.discrete_labels[0][i] = "c" + std::to_string(i);
  return s;
}

Standardizer identity_standardizer(size_t n_numeric) {
  Standardizer st;
  st.mean = Vec::Zero(n_numeric);
  st.stddev = Vec::Ones(n_numeric);
  return st;
}

UapHead zero_uap_head(const AttributeSchema& schema, int d) {
  UapHead h;
  for (size_t a = 0; a < schema.numeric_names.size(); ++a) {
    h.num_w.push_back(Vec::Zero(d));
    h.num_b.push_back(0.0);
  }
  for (size_t a = 0; a < schema.discrete_names.size(); ++a) {
    h.disc_w.push_back(Mat::Zero(schema.discrete_cardinalities[a], d));
    h.disc_b.push_back(Vec::Zero(schema.discrete_cardinalities[a]));
  }
  return h;
}

}  // namespace

TEST_CASE("wrap_with_specials adds CLS/SEP and truncates to recent items") {
  TokenBatch b = wrap_with_specials({{4, 5, 6}, {7}}, 10);
  CHECK(b.rows == 2);
  CHECK(b.lengths[0] == 5);
  CHECK(b.token(0, 0) == kClsId);
  CHECK(b.token(0, 4) == kSepId);
  CHECK(b.token(1, 0) == kClsId);
  CHECK(b.token(1, 1) == 7);
  CHECK(b.token(1, 2) == kSepId);

  TokenBatch t = wrap_with_specials({{4, 5, 6, 7, 8, 9}}, 5);
  CHECK(t.lengths[0] == 5);
  CHECK(t.token(0, 1) == 7);  // oldest three dropped
  CHECK(t.token(0, 3) == 9);
  CHECK_THROWS_AS(wrap_with_specials({{}}, 5), DataError);
}

TEST_CASE("make_masked_batch") {
  SUBCASE("high p masks nearly everything") {
    Rng rng(1);
    std::vector<std::vector<int32_t>> seqs(10, std::vector<int32_t>(20, 5));
    MaskedBatch b = make_masked_batch(seqs, {}, 0.999, 30, rng);
    CHECK(b.total_masked() >= 190);
  }

  SUBCASE("empirical mask rate concentrates at p") {
    Rng rng(2);
    std::vector<std::vector<int32_t>> seqs(10000, std::vector<int32_t>(20, 4));
    MaskedBatch b = make_masked_batch(seqs, {}, 0.2, 30, rng);
    double rate = static_cast<double>(b.total_masked()) / (10000.0 * 20.0);
    CHECK(rate > 0.19);
    CHECK(rate < 0.21);
  }

  SUBCASE("length-1 sequence gets the forced mask") {
    Rng rng(3);
    MaskedBatch b = make_masked_batch({{9}}, {}, 0.2, 30, rng);
    REQUIRE(b.masked_pos[0].size() == 1);
    CHECK(b.masked_pos[0][0] == 1);
    CHECK(b.labels[0][0] == 9);
    CHECK(b.tokens.token(0, 1) == kMaskId);
  }

  SUBCASE("structure invariants") {
    Rng rng(4);
    std::vector<std::vector<int32_t>> seqs;
    for (int i = 0; i < 200; ++i) seqs.push_back({4, 5, 6, 7, 8, 9, 10, 11});
    MaskedBatch b = make_masked_batch(seqs, {}, 0.2, 30, rng);
    for (int r = 0; r < b.tokens.rows; ++r) {
      CHECK(b.masked_pos[r].size() >= 1);
      CHECK(b.tokens.token(r, 0) == kClsId);
      CHECK(b.tokens.token(r, b.tokens.lengths[r] - 1) == kSepId);
      for (size_t j = 0; j < b.masked_pos[r].size(); ++j) {
        CHECK(b.tokens.token(r, b.masked_pos[r][j]) == kMaskId);
        CHECK(!is_special_token(b.labels[r][j]));
      }
    }
  }

  SUBCASE("truncation keeps the most recent items") {
    Rng rng(5);
    MaskedBatch b = make_masked_batch({{4, 5, 6, 7, 8, 9}}, {}, 0.2, 6, rng);
    CHECK(b.tokens.lengths[0] == 6);
    bool has_old = false;
    for (int t = 0; t < 6; ++t) has_old = has_old || b.tokens.token(0, t) == 4 || b.tokens.token(0, t) == 5;
    // items 4,5 dropped unless masked tokens hide them; labels reveal origin
    for (const auto& lab : b.labels[0]) CHECK(lab >= 6);
    CHECK(!has_old);
  }

  SUBCASE("errors") {
    Rng rng(6);
    CHECK_THROWS_AS(make_masked_batch({{}}, {}, 0.2, 30, rng), DataError);
    CHECK_THROWS_AS(make_masked_batch({{4}}, {}, 0.0, 30, rng), DataError);
    CHECK_THROWS_AS(make_masked_batch({{4}}, {}, 1.0, 30, rng), DataError);
  }
}

TEST_CASE("finetune_target_mask builds CLS prefix MASK SEP") {
  MaskedBatch b = finetune_target_mask({{4, 5, 6}}, {7}, {}, 30);
  CHECK(b.tokens.lengths[0] == 6);
  CHECK(b.tokens.token(0, 0) == kClsId);
  CHECK(b.tokens.token(0, 1) == 4);
  CHECK(b.tokens.token(0, 3) == 6);
  CHECK(b.tokens.token(0, 4) == kMaskId);
  CHECK(b.tokens.token(0, 5) == kSepId);
  CHECK(b.masked_pos[0] == std::vector<int32_t>{4});
  CHECK(b.labels[0] == std::vector<int32_t>{7});

  MaskedBatch t = finetune_target_mask({{4, 5, 6, 7, 8}}, {9}, {}, 6);
  CHECK(t.tokens.lengths[0] == 6);
  CHECK(t.tokens.token(0, 1) == 6);  // only the 3 most recent survive
  CHECK_THROWS_AS(finetune_target_mask({{}}, {4}, {}, 30), DataError);
}

TEST_CASE("mip_loss") {
  const int V = 10, d = 4;
  Rng rng(7);
  Mat item_emb(V, d);
  for (int i = 0; i < item_emb.size(); ++i) item_emb.data()[i] = normal01(rng);
  MipHead head;
  head.tied = true;
  head.bias = Vec::Zero(V);

  MaskedBatch b = finetune_target_mask({{4, 5}}, {6}, {}, 30);

  SUBCASE("zero hidden states give the uniform-vocabulary identity") {
    Mat hidden = Mat::Zero(b.tokens.rows * b.tokens.width, d);
    double loss = mip_loss(hidden, b, head, item_emb, nullptr);
    CHECK(loss == doctest::Approx(std::log(double(V - kNumSpecialTokens))).epsilon(1e-5));
  }

  SUBCASE("saturated true logit drives loss to zero") {
    Mat hidden = Mat::Zero(b.tokens.rows * b.tokens.width, d);
    MipHead sat = head;
    sat.bias(6) = 60.0;
    double loss = mip_loss(hidden, b, sat, item_emb, nullptr);
    CHECK(loss < 1e-6);
  }

  SUBCASE("special tokens receive zero probability") {
    Mat hidden = Mat::Random(b.tokens.rows * b.tokens.width, d);
    Mat probs;
    mip_loss(hidden, b, head, item_emb, &probs);
    for (int i = 0; i < kNumSpecialTokens; ++i) CHECK(probs(0, i) == 0.0);
    CHECK(probs.row(0).sum() == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("hand-computed V=6 oracle") {
    // Untied head with identity-like rows so logits equal hidden coords.
    const int v6 = 6, d2 = 2;
    MipHead h6;
    h6.tied = false;
    h6.w_untied = Mat::Zero(v6, d2);
    h6.w_untied(4, 0) = 1.0;  // logit_4 = h0
    h6.w_untied(5, 1) = 1.0;  // logit_5 = h1
    h6.bias = Vec::Zero(v6);
    h6.bias(5) = 0.3;
    MaskedBatch mb = finetune_target_mask({{4}}, {5}, {}, 30);
    Mat hidden = Mat::Zero(mb.tokens.rows * mb.tokens.width, d2);
    hidden(2, 0) = 1.1;  // MASK is at position 2
    hidden(2, 1) = -0.4;
    double l0 = 1.1, l1 = -0.4 + 0.3;
    double want = -std::log(std::exp(l1) / (std::exp(l0) + std::exp(l1)));
    double loss = mip_loss(hidden, mb, h6, item_emb /*unused*/, nullptr);
    CHECK(loss == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("no masked positions is an error") {
    MaskedBatch empty;
    empty.tokens = wrap_with_specials({{4}}, 30);
    empty.masked_pos = {{}};
    empty.labels = {{}};
    empty.users = {-1};
    Mat hidden = Mat::Zero(3, d);
    CHECK_THROWS_AS(mip_loss(hidden, empty, head, item_emb, nullptr), DataError);
  }

  SUBCASE("gradients match finite differences") {
    Rng rng2(8);
    MaskedBatch mb = make_masked_batch({{4, 5, 6, 7}, {8, 9, 4}}, {}, 0.4, 30, rng2);
    Mat hidden(mb.tokens.rows * mb.tokens.width, d);
    for (int i = 0; i < hidden.size(); ++i) hidden.data()[i] = normal01(rng2);
    MipHead h = head;
    h.bias = Vec::Zero(V);
    for (int i = 0; i < V; ++i) h.bias(i) = 0.1 * normal01(rng2);

    Mat probs;
    mip_loss(hidden, mb, h, item_emb, &probs);
    Mat d_hidden = Mat::Zero(hidden.rows(), hidden.cols());
    Vec d_bias = Vec::Zero(V);
    Mat d_w = Mat::Zero(V, d);
    mip_backward(hidden, mb, h, item_emb, probs, 1.0, d_hidden, d_bias, d_w);

    const double eps = 1e-6;
    auto fd_mat = [&](Mat& m, const Mat& g) {
      double worst = 0;
      for (int i = 0; i < m.size(); ++i) {
        double s = m.data()[i];
        m.data()[i] = s + eps;
        double up = mip_loss(hidden, mb, h, item_emb, nullptr);
        m.data()[i] = s - eps;
        double dn = mip_loss(hidden, mb, h, item_emb, nullptr);
        m.data()[i] = s;
        double fd = (up - dn) / (2 * eps);
        worst = std::max(worst, std::abs(fd - g.data()[i]) / std::max({std::abs(fd), std::abs(g.data()[i]), 1e-6}));
      }
      return worst;
    };
    CHECK(fd_mat(hidden, d_hidden) < 1e-5);
    CHECK(fd_mat(item_emb, d_w) < 1e-5);  // tied head: projection gradient only
    Mat bias_as_mat = h.bias;
    double worst = 0;
    for (int i = 0; i < V; ++i) {
      double s = h.bias(i);
      h.bias(i) = s + eps;
      double up = mip_loss(hidden, mb, h, item_emb, nullptr);
      h.bias(i) = s - eps;
      double dn = mip_loss(hidden, mb, h, item_emb, nullptr);
      h.bias(i) = s;
      double fd = (up - dn) / (2 * eps);
      worst = std::max(worst, std::abs(fd - d_bias(i)) / std::max({std::abs(fd), std::abs(d_bias(i)), 1e-6}));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("max pooling user representation") {
  SUBCASE("coordinate-wise max over valid positions") {
    TokenBatch b = TokenBatch::from_rows({{4, 5}});
    Mat hidden(2, 2);
    hidden << 1, -2, 0, 3;
    Mat repr = max_pool_user_repr(hidden, b, nullptr);
    CHECK(repr(0, 0) == 1.0);
    CHECK(repr(0, 1) == 3.0);
  }

  SUBCASE("single position returns that vector") {
    TokenBatch b = TokenBatch::from_rows({{7}});
    Mat hidden(1, 3);
    hidden << 4, -1, 0.5;
    Mat repr = max_pool_user_repr(hidden, b, nullptr);
    CHECK((repr.row(0) - hidden.row(0)).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("PAD rows are excluded") {
    TokenBatch b = TokenBatch::from_rows({{4, 5}, {4, 5, 6, 7}});
    Mat hidden = Mat::Zero(8, 2);
    hidden.row(0) << 1, 1;
    hidden.row(1) << 2, 0;
    hidden.row(2) << 99, 99;  // PAD position for row 0, must be ignored
    hidden.row(3) << 99, 99;
    Mat repr = max_pool_user_repr(hidden, b, nullptr);
    CHECK(repr(0, 0) == 2.0);
    CHECK(repr(0, 1) == 1.0);
  }

  SUBCASE("backward scatters to argmax positions") {
    Rng rng(9);
    TokenBatch b = TokenBatch::from_rows({{4, 5, 6}, {7, 8}});
    Mat hidden(6, 3);
    for (int i = 0; i < hidden.size(); ++i) hidden.data()[i] = normal01(rng);
    Eigen::MatrixXi argmax;
    Mat repr = max_pool_user_repr(hidden, b, &argmax);
    Mat w(2, 3);
    for (int i = 0; i < w.size(); ++i) w.data()[i] = normal01(rng);
    auto loss = [&]() { return max_pool_user_repr(hidden, b, nullptr).cwiseProduct(w).sum(); };
    Mat d_hidden = Mat::Zero(6, 3);
    max_pool_backward(w, argmax, b, d_hidden);
    const double eps = 1e-6;
    for (int i = 0; i < hidden.size(); ++i) {
      double s = hidden.data()[i];
      hidden.data()[i] = s + eps;
      double up = loss();
      hidden.data()[i] = s - eps;
      double dn = loss();
      hidden.data()[i] = s;
      CHECK(std::abs((up - dn) / (2 * eps) - d_hidden.data()[i]) < 1e-8);
    }
  }
}

TEST_CASE("cls_repr returns position zero") {
  TokenBatch b = TokenBatch::from_rows({{4, 5, 6}, {7, 8}});
  Mat hidden(6, 2);
  hidden << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
  Mat repr = cls_repr(hidden, b);
  CHECK(repr(0, 0) == 1.0);
  CHECK(repr(1, 0) == 7.0);
  Mat pooled = max_pool_user_repr(hidden, b, nullptr);
  CHECK((repr - pooled).cwiseAbs().maxCoeff() > 0.0);
  Mat d_hidden = Mat::Zero(6, 2);
  Mat d_repr(2, 2);
  d_repr << 1, 1, 2, 2;
  cls_repr_backward(d_repr, b, d_hidden);
  CHECK(d_hidden(0, 0) == 1.0);
  CHECK(d_hidden(3, 0) == 2.0);
  CHECK(d_hidden(1, 0) == 0.0);
}

TEST_CASE("huber values and smoothness") {
  CHECK(huber(3.0, 3.0) == 0.0);
  CHECK(huber(3.5, 3.0) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(huber(5.0, 3.0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(huber(4.0, 3.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(huber(2.0, 3.0) == doctest::Approx(0.5).epsilon(1e-12));
  // C1 at the branch point: derivative 1 from both sides.
  CHECK(huber_grad(3.999999, 3.0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(huber_grad(4.000001, 3.0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(huber_grad(2.5, 3.0) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("uap_loss") {
  AttributeSchema schema = one_numeric_one_discrete(3);
  AttributeTable attrs;
  attrs.resize(2, schema);
  attrs.numeric_values[0][0] = 0.0;
  attrs.numeric_present[0][0] = 1;
  attrs.numeric_values[1][0] = 0.0;
  attrs.numeric_present[1][0] = 1;
  attrs.discrete_values[0][0] = 1;
  attrs.discrete_present[0][0] = 1;
  Standardizer st = identity_standardizer(1);
  const int d = 2;
  Mat reprs(2, d);
  reprs << 1, 0, 0, 1;
  std::vector<int32_t> users = {0, 1};

  SUBCASE("perfect predictions give zero loss") {
    UapHead h = zero_uap_head(schema, d);
    // numeric: pred = 0 = target; discrete: logits put all mass on class 1
    h.disc_b[0](1) = 400.0;
    double loss = uap_loss(reprs, users, attrs, schema, st, h, nullptr);
    CHECK(loss < 1e-9);
  }

  SUBCASE("two numeric diffs 0.5 and 2 average to 0.8125") {
    AttributeSchema ns;
    ns.numeric_names = {"num"};
    AttributeTable at;
    at.resize(2, ns);
    at.numeric_values[0][0] = 0.0;
    at.numeric_present[0][0] = 1;
    at.numeric_values[1][0] = 0.0;
    at.numeric_present[1][0] = 1;
    UapHead h = zero_uap_head(ns, d);
    h.num_w[0] << 0.5, 2.0;  // errors 0.5 and 2 given one-hot reprs
    double loss = uap_loss(reprs, users, at, ns, identity_standardizer(1), h, nullptr);
    CHECK(loss == doctest::Approx(0.8125).epsilon(1e-12));
  }

  SUBCASE("uniform discrete logits give ln cardinality") {
    AttributeSchema ds;
    ds.discrete_names = {"disc"};
    ds.discrete_cardinalities = {3};
    ds.discrete_labels = {{"a", "b", "c"}};
    AttributeTable at;
    at.resize(2, ds);
    at.discrete_values[0][0] = 2;
    at.discrete_present[0][0] = 1;
    UapHead h = zero_uap_head(ds, d);
    double loss = uap_loss(reprs, users, at, ds, identity_standardizer(0), h, nullptr);
    CHECK(loss == doctest::Approx(std::log(3.0)).epsilon(1e-9));
  }

  SUBCASE("missing values are excluded, not imputed") {
    UapHead h = zero_uap_head(schema, d);
    h.num_w[0] << 3.0, 3.0;  // would add loss if user 1 were imputed
    AttributeTable sparse = attrs;
    sparse.numeric_present[1][0] = 0;
    double loss_n = uap_loss(reprs, users, sparse, schema, st, h, nullptr);
    // only user 0 contributes to numeric: huber(3,0) = 2.5; discrete: user 0 only, ln3
    CHECK(loss_n == doctest::Approx(2.5 + std::log(3.0)).epsilon(1e-9));
  }

  SUBCASE("schema mismatch is an error") {
    UapHead h = zero_uap_head(one_numeric_one_discrete(3), d);
    h.num_w.clear();
    CHECK_THROWS_AS(uap_loss(reprs, users, attrs, schema, st, h, nullptr), DataError);
  }

  SUBCASE("gradients match finite differences") {
    Rng rng(11);
    AttributeTable at;
    at.resize(3, schema);
    for (int u = 0; u < 3; ++u) {
      at.numeric_values[u][0] = normal01(rng);
      at.numeric_present[u][0] = u != 1;
      at.discrete_values[u][0] = u % 3;
      at.discrete_present[u][0] = u != 2;
    }
    Mat r3(3, d);
    for (int i = 0; i < r3.size(); ++i) r3.data()[i] = normal01(rng);
    std::vector<int32_t> us = {0, 1, 2};
    UapHead h = zero_uap_head(schema, d);
    for (int i = 0; i < d; ++i) h.num_w[0](i) = 0.5 * normal01(rng);
    h.num_b[0] = 0.2;
    for (int i = 0; i < h.disc_w[0].size(); ++i) h.disc_w[0].data()[i] = 0.5 * normal01(rng);
    for (int i = 0; i < 3; ++i) h.disc_b[0](i) = 0.2 * normal01(rng);

    UapCache cache;
    uap_loss(r3, us, at, schema, st, h, &cache);
    Mat d_reprs = Mat::Zero(3, d);
    UapGrads g = zero_uap_head(schema, d);
    uap_backward(r3, us, h, cache, 1.0, d_reprs, g);

    auto loss_now = [&]() { return uap_loss(r3, us, at, schema, st, h, nullptr); };
    const double eps = 1e-6;
    double worst = 0;
    auto fd_span = [&](double* ptr, const double* gp, int n) {
      for (int i = 0; i < n; ++i) {
        double s = ptr[i];
        ptr[i] = s + eps;
        double up = loss_now();
        ptr[i] = s - eps;
        double dn = loss_now();
        ptr[i] = s;
        double fd = (up - dn) / (2 * eps);
        worst = std::max(worst, std::abs(fd - gp[i]) / std::max({std::abs(fd), std::abs(gp[i]), 1e-6}));
      }
    };
    fd_span(r3.data(), d_reprs.data(), static_cast<int>(r3.size()));
    fd_span(h.num_w[0].data(), g.num_w[0].data(), d);
    fd_span(&h.num_b[0], &g.num_b[0], 1);
    fd_span(h.disc_w[0].data(), g.disc_w[0].data(), static_cast<int>(h.disc_w[0].size()));
    fd_span(h.disc_b[0].data(), g.disc_b[0].data(), 3);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("srd_similarity") {
  SrdHead head;
  head.w = Vec::Ones(2);
  head.b = 0.0;
  Vec a(2), b(2);
  a << 1, 0;
  b << 0, 2;

  SUBCASE("equal inputs give minus bias") {
    SrdHead hb = head;
    hb.b = 0.7;
    CHECK(srd_similarity(a, a, hb) == doctest::Approx(-0.7).epsilon(1e-12));
  }
  SUBCASE("unit weights give negative squared distance") {
    CHECK(srd_similarity(a, b, head) == doctest::Approx(-5.0).epsilon(1e-12));
  }
  SUBCASE("weighted hand computation") {
    SrdHead hw;
    hw.w = Vec(2);
    hw.w << 0.5, 0.25;
    hw.b = 1.0;
    CHECK(srd_similarity(a, b, hw) == doctest::Approx(-2.5).epsilon(1e-12));
  }
  SUBCASE("symmetry") {
    Rng rng(12);
    SrdHead hr;
    hr.w = Vec(2);
    hr.w << 0.3, 1.7;
    hr.b = -0.2;
    for (int trial = 0; trial < 20; ++trial) {
      Vec x(2), y(2);
      x << normal01(rng), normal01(rng);
      y << normal01(rng), normal01(rng);
      CHECK(srd_similarity(x, y, hr) == srd_similarity(y, x, hr));
    }
  }
}

TEST_CASE("srd_loss") {
  auto full_mask = [](int B) {
    std::vector<std::vector<uint8_t>> m(B, std::vector<uint8_t>(B, 1));
    for (int j = 0; j < B; ++j) m[j][j] = 0;
    return m;
  };
  SrdHead head;
  head.w = Vec::Ones(2);
  head.b = 0.0;

  SUBCASE("equal similarities give ln B") {
    const int B = 5;
    Mat q = Mat::Zero(B, 2), c = Mat::Zero(B, 2);
    double loss = srd_loss(q, c, full_mask(B), head, nullptr, nullptr);
    CHECK(loss == doctest::Approx(std::log(double(B))).epsilon(1e-9));
  }

  SUBCASE("dominant positive drives loss to zero") {
    Mat q(2, 2), c(2, 2);
    q << 0, 0, 10, 10;
    c << 0, 0, 10, 10;  // positives identical, negatives far away
    double loss = srd_loss(q, c, full_mask(2), head, nullptr, nullptr);
    CHECK(loss < 1e-6);
  }

  SUBCASE("hand-computed 3x3 oracle with one masked negative") {
    Mat q(3, 1), c(3, 1);
    q << 0.0, 1.0, -1.0;
    c << 0.5, 0.8, -0.6;
    SrdHead h1;
    h1.w = Vec::Ones(1);
    h1.b = 0.2;
    auto mask = full_mask(3);
    mask[0][2] = 0;  // candidate 2 disallowed for query 0
    auto sim = [&](double x, double y) { return -((x - y) * (x - y) + 0.2); };
    double l0 = -std::log(std::exp(sim(0.0, 0.5)) / (std::exp(sim(0.0, 0.5)) + std::exp(sim(0.0, 0.8))));
    double l1 = -std::log(std::exp(sim(1.0, 0.8)) /
                          (std::exp(sim(1.0, 0.8)) + std::exp(sim(1.0, 0.5)) + std::exp(sim(1.0, -0.6))));
    double l2 = -std::log(std::exp(sim(-1.0, -0.6)) /
                          (std::exp(sim(-1.0, -0.6)) + std::exp(sim(-1.0, 0.5)) + std::exp(sim(-1.0, 0.8))));
    double want = (l0 + l1 + l2) / 3.0;
    double loss = srd_loss(q, c, mask, h1, nullptr, nullptr);
    CHECK(loss == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("pair permutation leaves the loss unchanged") {
    Rng rng(13);
    const int B = 6;
    Mat q(B, 3), c(B, 3);
    for (int i = 0; i < q.size(); ++i) {
      q.data()[i] = normal01(rng);
      c.data()[i] = normal01(rng);
    }
    SrdHead h;
    h.w = Vec(3);
    h.w << 1.0, 0.5, 2.0;
    h.b = 0.1;
    double base = srd_loss(q, c, full_mask(B), h, nullptr, nullptr);
    std::vector<int> perm = {3, 0, 5, 1, 4, 2};
    Mat qp(B, 3), cp(B, 3);
    for (int j = 0; j < B; ++j) {
      qp.row(j) = q.row(perm[j]);
      cp.row(j) = c.row(perm[j]);
    }
    double permuted = srd_loss(qp, cp, full_mask(B), h, nullptr, nullptr);
    CHECK(permuted == doctest::Approx(base).epsilon(1e-6));
  }

  SUBCASE("skipped queries are counted and excluded") {
    Mat q(3, 1), c(3, 1);
    q << 0, 1, 2;
    c << 0, 1, 2;
    auto mask = full_mask(3);
    mask[1][0] = mask[1][2] = 0;  // query 1 has no negatives
    uint64_t skipped = 0;
    double loss = srd_loss(q, c, mask, head, &skipped, nullptr);
    CHECK(skipped == 1);
    CHECK(std::isfinite(loss));

    std::vector<std::vector<uint8_t>> none(3, std::vector<uint8_t>(3, 0));
    CHECK_THROWS_AS(srd_loss(q, c, none, head, nullptr, nullptr), DataError);
  }

  SUBCASE("B below 2 is an error") {
    Mat q(1, 1), c(1, 1);
    q << 0;
    c << 0;
    CHECK_THROWS_AS(srd_loss(q, c, {{0}}, head, nullptr, nullptr), DataError);
  }

  SUBCASE("gradients match finite differences") {
    Rng rng(14);
    const int B = 4;
    Mat q(B, 3), c(B, 3);
    for (int i = 0; i < q.size(); ++i) {
      q.data()[i] = normal01(rng);
      c.data()[i] = normal01(rng);
    }
    SrdHead h;
    h.w = Vec(3);
    h.w << 0.8, 1.2, 0.5;
    h.b = -0.1;
    auto mask = full_mask(B);
    mask[2][0] = 0;

    SrdCache cache;
    srd_loss(q, c, mask, h, nullptr, &cache);
    Mat dq = Mat::Zero(B, 3), dc = Mat::Zero(B, 3);
    SrdGrads g;
    g.w = Vec::Zero(3);
    g.b = 0.0;
    srd_backward(q, c, h, cache, 1.0, dq, dc, g);

    auto loss_now = [&]() { return srd_loss(q, c, mask, h, nullptr, nullptr); };
    const double eps = 1e-6;
    double worst = 0;
    auto fd_span = [&](double* ptr, const double* gp, int n) {
      for (int i = 0; i < n; ++i) {
        double s = ptr[i];
        ptr[i] = s + eps;
        double up = loss_now();
        ptr[i] = s - eps;
        double dn = loss_now();
        ptr[i] = s;
        double fd = (up - dn) / (2 * eps);
        worst = std::max(worst, std::abs(fd - gp[i]) / std::max({std::abs(fd), std::abs(gp[i]), 1e-6}));
      }
    };
    fd_span(q.data(), dq.data(), static_cast<int>(q.size()));
    fd_span(c.data(), dc.data(), static_cast<int>(c.size()));
    fd_span(h.w.data(), g.w.data(), 3);
    fd_span(&h.b, &g.b, 1);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("profiles_similar and the SRD negative mask") {
  AttributeSchema schema = one_numeric_one_discrete(2);
  AttributeTable attrs;
  attrs.resize(4, schema);
  // users 0,1: same class, numeric within 5% of range [0,10]
  attrs.discrete_values[0][0] = 1;
  attrs.discrete_present[0][0] = 1;
  attrs.discrete_values[1][0] = 1;
  attrs.discrete_present[1][0] = 1;
  attrs.numeric_values[0][0] = 5.0;
  attrs.numeric_present[0][0] = 1;
  attrs.numeric_values[1][0] = 5.3;
  attrs.numeric_present[1][0] = 1;
  // user 2: different class
  attrs.discrete_values[2][0] = 0;
  attrs.discrete_present[2][0] = 1;
  attrs.numeric_values[2][0] = 0.0;
  attrs.numeric_present[2][0] = 1;
  attrs.numeric_values[3][0] = 10.0;
  attrs.numeric_present[3][0] = 1;
  auto range = numeric_ranges(attrs, schema);
  REQUIRE(range[0] == 10.0);

  CHECK(profiles_similar(0, 1, attrs, schema, range, 0.05));
  CHECK(!profiles_similar(0, 2, attrs, schema, range, 0.05));   // class differs
  CHECK(!profiles_similar(0, 3, attrs, schema, range, 0.05));   // numeric far
  // user 3 has no discrete value; only numeric is shared with 0
  attrs.numeric_values[3][0] = 5.1;
  CHECK(profiles_similar(0, 3, attrs, schema, range, 0.05));

  AttributeTable empty;
  empty.resize(2, schema);
  auto r2 = numeric_ranges(empty, schema);
  CHECK(!profiles_similar(0, 1, empty, schema, r2, 0.05));  // nothing shared

  SocialGraph g;
  g.resize(5);
  g.add_edge(0, 1);
  g.add_edge(1, 2);  // 2 is two-hop from 0
  std::vector<int32_t> queries = {0, 3};
  std::vector<int32_t> cands = {4, 2};
  attrs.resize(5, schema);
  auto mask = build_srd_negative_mask(queries, cands, g, attrs, schema, range, 0.05);
  CHECK(mask[0][0] == 0);  // diagonal
  CHECK(mask[0][1] == 0);  // cand 2 is two-hop from query 0
  CHECK(mask[1][0] == 1);  // user 4 unrelated to query 3
  CHECK(mask[1][1] == 0);  // diagonal is the positive pair

  // candidate equal to the query user is excluded
  std::vector<int32_t> q2 = {0, 1};
  std::vector<int32_t> c2 = {1, 0};
  auto m2 = build_srd_negative_mask(q2, c2, g, attrs, schema, range, 0.05);
  CHECK(m2[0][1] == 0);  // candidate user 0 == query user 0
}

TEST_CASE("joint_loss arithmetic") {
  CHECK(joint_loss(1.0, 1.0, 1.0, 1.0, 0.3, 0.5) == doctest::Approx(1.8).epsilon(1e-12));
  CHECK(joint_loss(2.0, 5.0, 7.0, 1.0, 0.0, 0.0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(joint_loss(1.5, 2.5, 3.5, 2.0, 0.6, 1.0) ==
        doctest::Approx(2.0 * joint_loss(1.5, 2.5, 3.5, 1.0, 0.3, 0.5)).epsilon(1e-12));
  CHECK_THROWS_AS(joint_loss(1, 1, 1, -0.1, 0.3, 0.5), DataError);
}
