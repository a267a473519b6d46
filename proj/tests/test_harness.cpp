#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <taccl/taccl.hpp>

using namespace taccl;

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Dataset tiny_dataset(std::uint64_t seed) {
    GeneratorConfig g;
    g.classes = 6;
    g.per_class = 6;
    return generate(g, seed, false);
}

TrainConfig tiny_config() {
    TrainConfig c;
    c.d = 8;
    c.classes_per_batch = 2;
    c.epochs = 3;
    c.steps_per_epoch = 2;
    c.recluster_every = 2;
    return c;
}

Matrix unit_rows(std::vector<std::vector<double>> rows) {
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    return m;
}

/// Recall@K straight from the definition with a plain double loop.
double recall_oracle(const Matrix& e, const std::vector<int>& labels, int k) {
    int hits = 0, queries = 0;
    for (std::size_t q = 0; q < e.rows; ++q) {
        int same = 0;
        for (std::size_t j = 0; j < e.rows; ++j) same += j != q && labels[j] == labels[q];
        if (same == 0) continue;
        ++queries;
        // Rank of each candidate = number of others strictly better, ties to the lower index.
        bool hit = false;
        for (std::size_t j = 0; j < e.rows; ++j) {
            if (j == q || labels[j] != labels[q]) continue;
            const double sj = cosine(e.row(q), e.row(j));
            int rank = 0;
            for (std::size_t o = 0; o < e.rows; ++o) {
                if (o == q || o == j) continue;
                const double so = cosine(e.row(q), e.row(o));
                if (so > sj || (so == sj && o < j)) ++rank;
            }
            if (rank < k) hit = true;
        }
        hits += hit;
    }
    return static_cast<double>(hits) / queries;
}

}  // namespace

// ---------------------------------------------------------------------------
// Batch sampling

TEST(SampleBatch, FivePerClass) {
    std::vector<int> labels;
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < 8; ++i) labels.push_back(c);
    const auto batch = sample_batch(labels, 2, 3);
    ASSERT_EQ(batch.size(), 10u);
    std::map<int, std::set<int>> per_class;
    for (int id : batch) per_class[labels[id]].insert(id);
    ASSERT_EQ(per_class.size(), 2u);
    for (const auto& [c, ids] : per_class) EXPECT_EQ(ids.size(), 5u);
    EXPECT_EQ(sample_batch(labels, 2, 3), batch);
}

TEST(SampleBatch, SmallClassUsesReplacement) {
    const std::vector<int> labels{0, 0, 0};
    const auto batch = sample_batch(labels, 1, 1);
    ASSERT_EQ(batch.size(), 5u);
    EXPECT_EQ(std::set<int>(batch.begin(), batch.end()), (std::set<int>{0, 1, 2}));
}

TEST(SampleBatch, ClassesAreDrawnUniformly) {
    std::vector<int> labels;
    for (int c = 0; c < 5; ++c)
        for (int i = 0; i < 5; ++i) labels.push_back(c);
    std::map<int, int> count;
    for (std::uint64_t s = 0; s < 2000; ++s) ++count[labels[sample_batch(labels, 1, s)[0]]];
    for (const auto& [c, n] : count) EXPECT_NEAR(n, 400, 80);
}

TEST(SampleBatch, TooFewClasses) {
    try {
        sample_batch(std::vector<int>{0, 0, 1}, 3, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::TooFewClasses);
    }
}

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, FirstStepFromZero) {
    ModelParams p = zero_params(2);
    ParamGrads g = zeros_like(p);
    for (auto& t : g.tensors) std::fill(t.values.begin(), t.values.end(), 1.0);
    AdamState s = AdamState::zeros_for(p);
    adam_step(p, g, s, AdamOptions{.lr = 0.01});
    EXPECT_EQ(s.t, 1);
    for (const auto& t : p.tensors)
        for (double v : t.values) EXPECT_NEAR(v, -0.01 / (1 + 1e-8), 1e-18);
}

TEST(Adam, ZeroGradientLeavesParams) {
    const ModelParams p0 = init_params(4, 2);
    ModelParams p = p0;
    AdamState s = AdamState::zeros_for(p);
    for (int i = 0; i < 5; ++i) adam_step(p, zeros_like(p), s, AdamOptions{});
    EXPECT_EQ(p, p0);
}

TEST(Adam, StepIsLinearInLearningRate) {
    Rng rng(3);
    const ModelParams p0 = zero_params(4);
    ParamGrads g = zeros_like(p0);
    for (auto& t : g.tensors)
        for (double& v : t.values) v = normal(rng);
    ModelParams a = p0, b = p0;
    AdamState sa = AdamState::zeros_for(p0), sb = AdamState::zeros_for(p0);
    adam_step(a, g, sa, AdamOptions{.lr = 0.125});
    adam_step(b, g, sb, AdamOptions{.lr = 0.25});
    for (int i = 0; i < kParamCount; ++i)
        for (std::size_t k = 0; k < p0.tensors[i].values.size(); ++k)
            EXPECT_EQ(b.tensors[i].values[k], 2 * a.tensors[i].values[k]);
}

TEST(Adam, CoupledWeightDecay) {
    ModelParams p = zero_params(2);
    for (auto& t : p.tensors) std::fill(t.values.begin(), t.values.end(), 2.0);
    AdamState s = AdamState::zeros_for(p);
    // g = 0 + wd * theta = 1, so the first step is the unit Adam step.
    adam_step(p, zeros_like(p), s, AdamOptions{.lr = 0.01, .weight_decay = 0.5});
    EXPECT_NEAR(p.tensors[0].values[0], 2 - 0.01 / (1 + 1e-8), 1e-15);
}

TEST(Adam, ShapeMismatch) {
    ModelParams p = zero_params(2);
    AdamState s = AdamState::zeros_for(p);
    try {
        adam_step(p, zero_params(3), s, AdamOptions{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
    }
}

// ---------------------------------------------------------------------------
// Retrieval metrics

TEST(Recall, Examples) {
    const std::vector<int> ks{1};
    EXPECT_EQ(recall_at_k(unit_rows({{1, 0}, {1, 0}}), std::vector<int>{0, 0}, ks).recall_at.at(1), 1.0);

    Rng rng(4);
    Matrix e(6, 3);
    for (double& v : e.data) v = normal(rng);
    const std::vector<int> labels{0, 0, 1, 1, 2, 2};
    const std::vector<int> big{5};
    EXPECT_EQ(recall_at_k(e, labels, big).recall_at.at(5), 1.0);
}

TEST(Recall, MatchesBruteForceOracle) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix e(6, 2);
        for (double& v : e.data) v = normal(rng);
        std::vector<int> labels(6);
        for (int& l : labels) l = static_cast<int>(uniform_index(rng, 2));
        if (std::count(labels.begin(), labels.end(), 0) < 2 && std::count(labels.begin(), labels.end(), 1) < 2) continue;
        const std::vector<int> ks{1, 2, 3, 5};
        const EvalReport r = recall_at_k(e, labels, ks);
        for (int k : ks) EXPECT_EQ(r.recall_at.at(k), recall_oracle(e, labels, k));
    }
}

TEST(Recall, TiesGoToLowerIndex) {
    // Query 0 sees rows 1 and 2 at equal similarity; row 1 is the wrong class.
    const Matrix e = unit_rows({{1, 0}, {0, 1}, {0, 1}, {-1, 0}});
    const std::vector<int> ks{1};
    const EvalReport r = recall_at_k(e, std::vector<int>{0, 1, 0, 1}, ks);
    EXPECT_EQ(r.num_queries, 4);
    // 0 -> 1 (miss), 1 -> 2 (miss), 2 -> 1 (miss), 3 -> 1 (hit).
    EXPECT_DOUBLE_EQ(r.recall_at.at(1), 0.25);
}

TEST(Recall, MonotoneInK) {
    Rng rng(6);
    Matrix e(30, 4);
    for (double& v : e.data) v = normal(rng);
    std::vector<int> labels(30);
    for (int i = 0; i < 30; ++i) labels[i] = i % 6;
    const std::vector<int> ks{1, 2, 4, 8, 16};
    const EvalReport r = recall_at_k(e, labels, ks);
    for (std::size_t i = 1; i < ks.size(); ++i) EXPECT_LE(r.recall_at.at(ks[i - 1]), r.recall_at.at(ks[i]));
}

TEST(Recall, SingletonsAreExcluded) {
    const std::vector<int> ks{1};
    const EvalReport r = recall_at_k(unit_rows({{1, 0}, {1, 0}, {0, 1}}), std::vector<int>{0, 0, 1}, ks);
    EXPECT_EQ(r.num_queries, 2);
    try {
        recall_at_k(unit_rows({{1, 0}, {0, 1}}), std::vector<int>{0, 1}, ks);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::AllSingletons);
    }
}

TEST(Evaluate, DeterministicWithShapedExport) {
    const Dataset ds = tiny_dataset(7);
    const ModelParams p = init_params(8, 1);
    const EvalResult a = evaluate(p, ds), b = evaluate(p, ds);
    EXPECT_EQ(a.report, b.report);
    EXPECT_EQ(a.embeddings.rows, ds.manifest.test_ids.size());
    EXPECT_EQ(a.embeddings.cols, 8u);
    const auto dir = std::filesystem::temp_directory_path() / "taccl_eval";
    std::filesystem::remove_all(dir);
    write_evaluation(dir, a);
    const TensorFile t = load_tensor(dir / "embeddings.tact");
    EXPECT_EQ(t.dims, (std::vector<std::uint32_t>{static_cast<std::uint32_t>(ds.manifest.test_ids.size()), 8}));
    EXPECT_GE(a.report.mean_contrastive_ratio, 0.0);
}

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, PaperSettings) {
    const TrainConfig c;
    const auto j = to_json(c);
    EXPECT_EQ(j.at("samples_per_class"), 5);
    EXPECT_EQ(j.at("weight_decay"), 5e-4);
    EXPECT_EQ(j.at("recluster_every"), 20);
    EXPECT_EQ(j.at("d"), 32);
    EXPECT_EQ(TrainConfig::paper().d, 512);
    EXPECT_EQ(to_json(TrainConfig::paper()).at("d"), 512);
    EXPECT_EQ(train_config_from_json({{"preset", "paper"}}).d, 512);
    EXPECT_EQ(train_config_from_json({{"preset", "reference"}}).weights.lambda_f, 0.0);
    EXPECT_EQ(train_config_from_json({{"preset", "reference"}, {"loss", {{"lambda_f", 0.5}}}}).weights.lambda_f, 0.5);
    EXPECT_EQ(c.lr, 1e-3);
}

TEST(Config, JsonRoundTrip) {
    TrainConfig c;
    c.d = 16;
    c.weights.lambda_tac = 0.5;
    c.weights.ccl_anchor_label = false;
    c.supervision = SupervisionMode::Mixed;
    c.mixed_matched_steps = 3;
    c.family.rotate_max = 0.2;
    c.pairs.tau = 0.9;
    c.seed = 99;
    EXPECT_EQ(to_json(train_config_from_json(to_json(c))), to_json(c));
}

TEST(Config, Validation) {
    for (const char* bad : {R"({"lr": -1})", R"({"recluster_every": 0})", R"({"preset": "huge"})",
                            R"({"loss": {"ccl_anchor": "sideways"}})", R"({"supervision": "telepathy"})"}) {
        try {
            train_config_from_json(nlohmann::json::parse(bad));
            FAIL() << bad;
        } catch (const Error& e) {
            EXPECT_TRUE(is_validation_error(e.kind())) << bad;
        }
    }
    try {
        train_config_from_json({{"d", "wide"}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    }
}

// ---------------------------------------------------------------------------
// Gradient checks

TEST(Gradcheck, CentralDifferenceIsExactOnQuadratics) {
    const auto fd = central_difference([](const std::vector<double>& x) { return x[0] * x[0]; }, {3.0}, 1e-3);
    EXPECT_NEAR(fd[0], 6.0, 1e-9);
    EXPECT_LT(gradcheck("quadratic", 5, 1e-3).max_relative_error, 1e-9);
}

TEST(Gradcheck, LossesAndEncoder) {
    for (const auto& name : gradcheck_targets()) {
        const GradcheckReport r = gradcheck(name, 20, 1e-6, 3);
        EXPECT_LT(r.max_relative_error, 1e-4) << name;
        EXPECT_EQ(r.trials, 20);
    }
}

TEST(Gradcheck, UnknownLoss) {
    try {
        gradcheck("hinge", 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UnknownLoss);
    }
}

// ---------------------------------------------------------------------------
// Training

TEST(Train, ZeroEpochsKeepsInitialization) {
    TrainConfig c = tiny_config();
    c.epochs = 0;
    const TrainResult r = train(c, tiny_dataset(1));
    EXPECT_EQ(r.params, r.initial);
    EXPECT_EQ(r.params, init_params(8, derive_seed(c.seed, 1)));
    EXPECT_EQ(r.steps, 0);
}

TEST(Train, ZeroWeightsLeaveParamsUnchanged) {
    TrainConfig c = tiny_config();
    c.weights.use_ms = false;
    c.weights.lambda_tac = c.weights.lambda_cc = c.weights.lambda_f = 0;
    c.weight_decay = 0;
    c.lr = 0.5;
    const TrainResult r = train(c, tiny_dataset(2));
    EXPECT_EQ(r.steps, 6);
    EXPECT_EQ(r.params, r.initial);
}

TEST(Train, ReclusterScheduleInLog) {
    TrainConfig c = tiny_config();
    c.epochs = 5;
    c.steps_per_epoch = 1;
    const auto dir = std::filesystem::temp_directory_path() / "taccl_train_log";
    std::filesystem::remove_all(dir);
    train(c, tiny_dataset(3), dir);
    std::ifstream f(dir / "metrics.jsonl");
    std::string line;
    std::vector<int> epochs;
    long loss_lines = 0;
    while (std::getline(f, line)) {
        const auto j = nlohmann::json::parse(line);
        if (j.contains("event")) {
            epochs.push_back(j.at("epoch"));
            EXPECT_EQ(j.at("step"), j.at("epoch"));
        } else {
            EXPECT_EQ(j.at("step"), loss_lines++);
            for (const char* key : {"total", "ms", "tac", "cc", "f"}) EXPECT_TRUE(j.contains(key)) << key;
        }
    }
    EXPECT_EQ(epochs, (std::vector<int>{0, 2, 4}));
    EXPECT_EQ(loss_lines, 5);
    for (const char* sub : {"epoch_0000", "epoch_0002", "epoch_0004"})
        EXPECT_TRUE(std::filesystem::exists(dir / "checkpoints" / sub / "model.json")) << sub;
    EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint" / "model.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "clusters" / "clusters.json"));
}

TEST(Train, BitwiseDeterministic) {
    const Dataset ds = tiny_dataset(4);
    TrainConfig c = tiny_config();
    c.weights.lambda_f = 1;
    const auto a = std::filesystem::temp_directory_path() / "taccl_det_a";
    const auto b = std::filesystem::temp_directory_path() / "taccl_det_b";
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
    const TrainResult ra = train(c, ds, a), rb = train(c, ds, b);
    EXPECT_EQ(ra.params, rb.params);
    EXPECT_NE(ra.params, ra.initial);
    EXPECT_EQ(read_file(a / "metrics.jsonl"), read_file(b / "metrics.jsonl"));
    for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(e.path(), a);
        EXPECT_EQ(read_file(e.path()), read_file(b / rel)) << rel;
    }
}

TEST(Train, MixedSupervisionRuns) {
    GeneratorConfig g;
    g.classes = 4;
    g.per_class = 6;
    g.noise_sigma = 0.02;
    const Dataset ds = generate(g, 5, false);
    TrainConfig c = tiny_config();
    c.supervision = SupervisionMode::Mixed;
    c.weights.lambda_tac = 1;
    const TrainResult r = train(c, ds);
    EXPECT_GT(r.matched_pairs, 0u);
    EXPECT_NE(r.params, r.initial);
    for (double l : r.epoch_mean_loss) EXPECT_TRUE(std::isfinite(l));
}

TEST(Train, InvalidConfigs) {
    TrainConfig c = tiny_config();
    c.k_clusters = 500;
    EXPECT_THROW(train(c, tiny_dataset(6)), Error);
    c = tiny_config();
    c.crop = 64;
    EXPECT_THROW(train(c, tiny_dataset(6)), Error);
}

// Desk configuration: 10 train and 10 test classes of 50 images, d=32, 30 epochs.
TEST(Train, DeskRunsLowerTheLoss) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        TrainConfig c;
        c.seed = seed;
        const TrainResult r = train(c, generate(GeneratorConfig{}, 100 + seed));
        ASSERT_EQ(r.epoch_mean_loss.size(), 30u);
        EXPECT_LT(r.epoch_mean_loss.back(), r.epoch_mean_loss.front()) << "seed " << seed;
    }
}

TEST(Train, TrainedCheckpointBeatsInitialization) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const Dataset ds = generate(GeneratorConfig{}, 100 + seed);
        TrainConfig c = TrainConfig::reference();
        c.seed = seed;
        const TrainResult r = train(c, ds);
        const double before = evaluate(r.initial, ds).report.recall_at.at(1);
        const double after = evaluate(r.params, ds).report.recall_at.at(1);
        EXPECT_GT(after, before) << "seed " << seed;
    }
}
