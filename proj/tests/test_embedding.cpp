#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "hke/dataset/blobs.hpp"
#include "hke/dataset/shapes.hpp"
#include "hke/embedding/losses.hpp"
#include "hke/embedding/model.hpp"
#include "hke/embedding/train.hpp"
#include "oracles.hpp"

using namespace hke;

namespace {

Eigen::Vector2d v(double x, double y) { return {x, y}; }

Dataset small_random_dataset(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Item> items(n);
  for (std::size_t i = 0; i < n; ++i) {
    items[i].id = static_cast<ItemId>(i);
    items[i].label_path = {i % 2 ? "odd" : "even"};
    for (std::size_t d = 0; d < dim; ++d) items[i].features.push_back(g(rng));
  }
  return Dataset("random", dim, std::move(items));
}

std::map<ItemId, std::vector<double>> feature_map(const Dataset& data) {
  std::map<ItemId, std::vector<double>> out;
  for (const auto& item : data.items()) out[item.id] = item.features;
  return out;
}

}  // namespace

TEST(TripletLoss, InactiveHinge) { EXPECT_NEAR(triplet_loss(v(0, 0), v(0, 1), v(3, 0), 0.4), 0.0, 1e-9); }

TEST(TripletLoss, CoincidentPointsLeaveMargin) {
  EXPECT_NEAR(triplet_loss(v(1, 2), v(1, 2), v(1, 2), 0.4), 0.4, 1e-9);
}

TEST(TripletLoss, HandEvaluated) { EXPECT_NEAR(triplet_loss(v(0, 0), v(2, 0), v(1, 0), 0.5), 3.5, 1e-9); }

TEST(DualTripletLoss, InactiveBothTerms) {
  EXPECT_NEAR(dual_triplet_loss(v(0, 0), v(0, 1), v(3, 0), 0.4), 0.0, 1e-9);
}

TEST(DualTripletLoss, CoincidentPoints) {
  EXPECT_NEAR(dual_triplet_loss(v(0, 0), v(0, 0), v(0, 0), 0.4), 0.8, 1e-9);
}

TEST(DualTripletLoss, HandEvaluated) { EXPECT_NEAR(dual_triplet_loss(v(0, 0), v(2, 0), v(1, 0), 0.5), 7.0, 1e-9); }

TEST(DualTripletLoss, DimensionMismatchRejected) {
  Eigen::VectorXd two = Eigen::VectorXd::Zero(2), three = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(dual_triplet_loss(two, three, two, 0.4), ValidationError);
}

TEST(DualTripletLoss, NonNegativeAndSymmetricInPositives) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d a(g(rng), g(rng), g(rng)), b(g(rng), g(rng), g(rng)), n(g(rng), g(rng), g(rng));
    const double m = std::abs(g(rng));
    EXPECT_GE(dual_triplet_loss(a, b, n, m), 0.0);
    EXPECT_NEAR(dual_triplet_loss(a, b, n, m), dual_triplet_loss(b, a, n, m), 1e-12);
  }
}

TEST(Hinge, PassesNaNThrough) { EXPECT_TRUE(std::isnan(hinge(std::numeric_limits<double>::quiet_NaN()))); }

TEST(AdaptiveMargin, ZeroGainKeepsBase) {
  for (double d : {0.0, 1.0, 100.0}) EXPECT_NEAR(adaptive_margin(0.2, 0.0, d), 0.2, 1e-9);
}

TEST(AdaptiveMargin, Arithmetic) { EXPECT_NEAR(adaptive_margin(0.2, 0.05, 4.0), 0.4, 1e-9); }

TEST(AdaptiveMargin, LeafKeepsBaseAndStaysPositive) {
  EXPECT_NEAR(adaptive_margin(0.3, 2.0, 0.0), 0.3, 1e-9);
  EXPECT_THROW(adaptive_margin(0.0, 1.0, 1.0), ValidationError);
  EXPECT_THROW(adaptive_margin(0.2, -1.0, 1.0), ValidationError);
}

TEST(Model, ZeroWeightsGiveOutputBias) {
  auto model = EmbeddingModel::zeros({4, 3, 2});
  model.layers().back().bias << 0.5, -1.5;
  RowMatrix x = RowMatrix::Random(5, 4);
  auto e = model.forward(x);
  for (Eigen::Index r = 0; r < e.rows(); ++r) {
    EXPECT_DOUBLE_EQ(e(r, 0), 0.5);
    EXPECT_DOUBLE_EQ(e(r, 1), -1.5);
  }
}

TEST(Model, IdentityLayerPassesInputThrough) {
  auto model = EmbeddingModel::from_layers({{Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3)}});
  RowMatrix x = RowMatrix::Random(4, 3);
  EXPECT_EQ(model.forward(x), x);
}

TEST(Model, SeededInitIsDeterministic) {
  EmbeddingModel a({6, 5, 3}, 9), b({6, 5, 3}, 9), c({6, 5, 3}, 10);
  RowMatrix x = RowMatrix::Random(3, 6);
  EXPECT_EQ(a.forward(x), b.forward(x));
  EXPECT_NE(a.forward(x), c.forward(x));
}

TEST(Model, HeUniformBounds) {
  EmbeddingModel m({50, 20, 4}, 1);
  EXPECT_LE(m.layers()[0].weights.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 50));
  EXPECT_LE(m.layers()[1].weights.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 20));
  EXPECT_EQ(m.layers()[0].bias.norm(), 0.0);
  EXPECT_EQ(m.parameter_count(), 50u * 20 + 20 + 20 * 4 + 4);
}

TEST(Model, ForwardMatchesLoopOracle) {
  EmbeddingModel m({5, 7, 3}, 4);
  RowMatrix x = RowMatrix::Random(6, 5);
  auto e = m.forward(x);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::vector<double> row(x.row(r).data(), x.row(r).data() + 5);
    auto ref = oracle::forward(m, row);
    for (Eigen::Index c = 0; c < 3; ++c) EXPECT_NEAR(e(r, c), ref[static_cast<std::size_t>(c)], 1e-12);
  }
}

TEST(Model, WrongInputWidthRejected) {
  EmbeddingModel m({5, 3}, 1);
  EXPECT_THROW(m.forward(RowMatrix::Zero(2, 4)), ValidationError);
  EXPECT_THROW(EmbeddingModel({5, 1}, 1), ValidationError);
}

TEST(Model, CheckpointRoundTrip) {
  auto path = std::filesystem::temp_directory_path() / "hke_model_roundtrip.json";
  EmbeddingModel m({8, 6, 2}, 12);
  save_model(m, path);
  auto back = load_model(path);
  ASSERT_EQ(back.widths(), m.widths());
  for (std::size_t l = 0; l < m.layers().size(); ++l) EXPECT_TRUE(back.layers()[l] == m.layers()[l]);
}

TEST(Gradient, SatisfiedTripletLeavesParametersUnchanged) {
  // Identity model: item 0 and 1 close together, item 2 far away.
  std::vector<Item> items(3);
  items[0] = {0, {0.0, 0.0}, {"a"}, {}};
  items[1] = {1, {0.0, 0.1}, {"a"}, {}};
  items[2] = {2, {5.0, 0.0}, {"b"}, {}};
  Dataset data("tiny", 2, items);
  auto model = EmbeddingModel::from_layers({{Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2)}});
  std::vector<AnsweredTriplet> triplets{{0, 1, 2, 0.4}};

  Gradient g = Gradient::zeros_like(model);
  EXPECT_DOUBLE_EQ(loss_and_gradient(model, triplets, FeatureTable(data), g), 0.0);
  EXPECT_DOUBLE_EQ(g.max_abs(), 0.0);

  TrainConfig cfg;
  cfg.epochs = 3;
  auto result = train(model, triplets, data, cfg);
  EXPECT_TRUE(result.model.layers()[0] == model.layers()[0]);
}

TEST(Gradient, MatchesCentralDifferences) {
  auto data = small_random_dataset(12, 6, 21);
  auto features = feature_map(data);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    EmbeddingModel model({6, 8, 3}, 100 + trial);
    std::vector<AnsweredTriplet> triplets;
    for (int t = 0; t < 5; ++t) {
      std::vector<ItemId> ids{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
      std::shuffle(ids.begin(), ids.end(), rng);
      triplets.push_back({ids[0], ids[1], ids[2], 0.5 + 0.5 * t});
    }
    Gradient g = Gradient::zeros_like(model);
    const double loss = loss_and_gradient(model, triplets, FeatureTable(data), g);
    EXPECT_NEAR(loss, oracle::dual_loss(model, triplets, features), 1e-9 * std::max(1.0, loss));
    auto cmp = oracle::central_differences(model, g, triplets, features, 1e-4);
    EXPECT_LT(cmp.max_relative_error(), 1e-4) << "trial " << trial;
    EXPECT_LT(cmp.max_zero_error(), 1e-8) << "trial " << trial;
  }
}

TEST(Train, LossDecreasesOnSeparableBlobs) {
  ConceptNode root{"root", {{"left", {}}, {"right", {}}}};
  auto data = generate_blobs(LatentHierarchy(root), 20, 4, 8);
  auto labels = data.leaf_labels();
  std::vector<ItemId> left, right;
  for (const auto& [id, l] : labels) (l == "left" ? left : right).push_back(id);

  std::mt19937_64 rng(2);
  std::vector<AnsweredTriplet> triplets;
  for (int i = 0; i < 50; ++i) {
    auto& same = i % 2 ? left : right;
    auto& other = i % 2 ? right : left;
    std::shuffle(same.begin(), same.end(), rng);
    triplets.push_back({same[0], same[1], other[rng() % other.size()], 0.4});
  }
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 8;
  auto result = train(EmbeddingModel({4, 16, 2}, 3), triplets, data, cfg);
  ASSERT_EQ(result.epoch_loss.size(), 10u);
  EXPECT_LT(result.epoch_loss.back(), result.epoch_loss.front());
}

TEST(Train, SameSeedSameModel) {
  auto data = small_random_dataset(20, 5, 3);
  std::vector<AnsweredTriplet> triplets;
  for (ItemId i = 0; i + 2 < 20; ++i) triplets.push_back({i, i + 1, i + 2, 0.4});
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.seed = 17;
  auto a = train(EmbeddingModel({5, 4, 2}, 1), triplets, data, cfg);
  auto b = train(EmbeddingModel({5, 4, 2}, 1), triplets, data, cfg);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  EXPECT_TRUE(a.model.layers()[0] == b.model.layers()[0]);
}

TEST(Train, DivergenceRaisesTrainingError) {
  auto data = small_random_dataset(20, 5, 3);
  std::vector<AnsweredTriplet> triplets;
  for (ItemId i = 0; i + 2 < 20; ++i) triplets.push_back({i, i + 2, i + 1, 50.0});
  TrainConfig cfg;
  cfg.learning_rate = 1e3;
  cfg.epochs = 50;
  EXPECT_THROW(train(EmbeddingModel({5, 4, 2}, 1), triplets, data, cfg), TrainingError);
}

TEST(Train, InvalidInputsRejected) {
  auto data = small_random_dataset(10, 3, 1);
  EmbeddingModel model({3, 2}, 1);
  TrainConfig cfg;
  EXPECT_THROW(train(model, std::vector<AnsweredTriplet>{}, data, cfg), ValidationError);
  EXPECT_THROW(train(model, std::vector<AnsweredTriplet>{{1, 1, 2, 0.4}}, data, cfg), ValidationError);
  EXPECT_THROW(train(model, std::vector<AnsweredTriplet>{{1, 2, 99, 0.4}}, data, cfg), NotFoundError);
  EXPECT_THROW(train(EmbeddingModel({4, 2}, 1), std::vector<AnsweredTriplet>{{1, 2, 3, 0.4}}, data, cfg),
               ValidationError);
  cfg.momentum = 1.0;
  EXPECT_THROW(train(model, std::vector<AnsweredTriplet>{{1, 2, 3, 0.4}}, data, cfg), ValidationError);
}

TEST(EmbedAll, ShapeDatasetGivesOneRowPerItem) {
  auto data = generate_shapes(7).dataset;
  EmbeddingModel model({data.dim(), 64, 8}, 1);
  auto e = embed_all(model, data);
  EXPECT_EQ(e.values.rows(), 135);
  EXPECT_EQ(e.values.cols(), 8);
  EXPECT_TRUE(e == embed_all(model, data));
}

TEST(EmbedAll, IdentityModelReturnsFeatures) {
  auto data = small_random_dataset(7, 3, 4);
  auto model = EmbeddingModel::from_layers({{Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3)}});
  auto e = embed_all(model, data);
  EXPECT_EQ(e.values, data.feature_matrix());
  EXPECT_EQ(e.ids, data.ids());
}
