#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "dcs/checkpoint.hpp"
#include "dcs/errors.hpp"
#include "dcs/harness.hpp"
#include "support/gradcheck.hpp"

using namespace dcs;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "dcs_harness_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

DistillationConfig small_config() {
    DistillationConfig c;
    c.task.kind = TaskKind::GaussianMixture;
    c.task.n_train = 80;
    c.task.n_dev = 150;
    c.task.n_features = 3;
    c.task.separation = 2.0;
    c.task.label_noise_rate = 0.2;
    c.task.seed = 5;
    c.architecture = ArchitectureDescriptor::mlp(3, {8}, 2);
    c.epochs = 4;
    c.teacher_epochs = 2;
    c.learning_rate = 5e-3;
    c.seeds = {1, 2, 3};
    return c;
}

// Covariance form of the multi-class MCC over one-hot indicators; shares no
// code with the library's confusion-matrix formula.
double mcc_by_covariance(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t k) {
    const double n = static_cast<double>(truth.size());
    auto cov = [&](const std::vector<int>& a, const std::vector<int>& b) {
        double total = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            double ma = 0.0, mb = 0.0;
            for (std::size_t i = 0; i < truth.size(); ++i) {
                ma += a[i] == static_cast<int>(c);
                mb += b[i] == static_cast<int>(c);
            }
            ma /= n;
            mb /= n;
            for (std::size_t i = 0; i < truth.size(); ++i) {
                total += ((a[i] == static_cast<int>(c)) - ma) * ((b[i] == static_cast<int>(c)) - mb);
            }
        }
        return total;
    };
    const double denom = std::sqrt(cov(truth, truth) * cov(pred, pred));
    return denom == 0.0 ? 0.0 : cov(truth, pred) / denom;
}

DistillationConfig random_config(Rng& rng) {
    DistillationConfig c;
    c.task.kind = rng.bernoulli(0.5) ? TaskKind::GaussianMixture : TaskKind::XorMoons;
    c.task.n_train = 10 + rng.below(500);
    c.task.n_dev = 10 + rng.below(500);
    c.task.n_classes = c.task.kind == TaskKind::XorMoons ? 2 : 2 + rng.below(4);
    c.task.n_features = 2 + rng.below(10);
    c.task.separation = rng.uniform(0.5, 8.0);
    c.task.label_noise_rate = rng.uniform(0.0, 0.45);
    c.task.seed = rng.next_u64();
    c.architecture = rng.bernoulli(0.5)
                         ? ArchitectureDescriptor::linear(c.task.n_features, c.task.n_classes)
                         : ArchitectureDescriptor::mlp(c.task.n_features, {1 + rng.below(64)}, c.task.n_classes);
    c.strategy = static_cast<WeightingStrategy>(rng.below(6));
    c.alpha = rng.uniform();
    c.lambda = rng.uniform(1.01, 10.0);
    c.temperature = rng.uniform(0.1, 10.0);
    c.epochs = 1 + static_cast<int>(rng.below(50));
    c.teacher_epochs = 1 + static_cast<int>(rng.below(5));
    c.batch_size = 1 + rng.below(64);
    c.learning_rate = rng.uniform(1e-6, 1e-1);
    c.optimizer = rng.bernoulli(0.5) ? OptimizerKind::Adam : OptimizerKind::Sgd;
    c.seeds.clear();
    for (std::uint64_t i = 0, n = 1 + rng.below(5); i < n; ++i) {
        c.seeds.push_back(rng.next_u64());
    }
    c.teacher_seed = rng.next_u64();
    c.workers = 1 + rng.below(4);
    c.output_dir = "out" + std::to_string(rng.below(1000));
    return c;
}

}  // namespace

TEST_CASE("config serialisation is a fixed point") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const DistillationConfig c = random_config(rng);
        c.validate();
        const std::string once = serialize_config(c);
        const DistillationConfig parsed = parse_config(once);
        CHECK(parsed == c);
        CHECK(serialize_config(parsed) == once);
    }
}

TEST_CASE("config parsing rejects unknown keys and bad values") {
    const std::string base = serialize_config(small_config());
    auto with = [&](const std::string& key, const nlohmann::json& value) {
        auto j = nlohmann::json::parse(base);
        j[key] = value;
        return j.dump();
    };
    CHECK_THROWS_AS(parse_config(with("colour", "red")), ConfigError);
    CHECK_THROWS_AS(parse_config(with("alpha", 1.5)), ConfigError);
    CHECK_THROWS_AS(parse_config(with("lambda", 1.0)), ConfigError);
    CHECK_THROWS_AS(parse_config(with("temperature", 0.0)), ConfigError);
    CHECK_THROWS_AS(parse_config(with("strategy", "boost")), ConfigError);
    CHECK_THROWS_AS(parse_config(with("seeds", nlohmann::json::array({1, 1}))), ConfigError);
    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
    auto nested = nlohmann::json::parse(base);
    nested["task"]["extra"] = 1;
    CHECK_THROWS_AS(parse_config(nested.dump()), ConfigError);
    // Width mismatch between task and architecture.
    auto wide = nlohmann::json::parse(base);
    wide["architecture"]["input_dim"] = 9;
    CHECK_THROWS_AS(parse_config(wide.dump()), ConfigError);
}

TEST_CASE("MCC against hand-built confusion matrices") {
    // Binary textbook formula.
    const ConfusionMatrix binary{{50, 10}, {5, 35}};  // [true][pred]
    const double tn = 50, fp = 10, fn = 5, tp = 35;
    const double expected = (tp * tn - fp * fn) / std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    CHECK(matthews_correlation(binary) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(accuracy(binary) == doctest::Approx(0.85));

    CHECK(matthews_correlation({{10, 0}, {0, 10}}) == doctest::Approx(1.0));
    CHECK(matthews_correlation({{0, 10}, {10, 0}}) == doctest::Approx(-1.0));
    // Everything predicted as one class: zero denominator.
    CHECK(matthews_correlation({{7, 0}, {3, 0}}) == 0.0);
    CHECK(matthews_correlation({{10, 0}, {0, 0}}) == 0.0);
    CHECK(matthews_correlation({{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}) == 0.0);
}

TEST_CASE("multi-class MCC matches the covariance formulation") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 2 + rng.below(4);
        const std::size_t n = 1 + rng.below(60);
        std::vector<int> truth(n), pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            truth[i] = static_cast<int>(rng.below(k));
            pred[i] = rng.bernoulli(0.6) ? truth[i] : static_cast<int>(rng.below(k));
        }
        const double got = matthews_correlation(confusion_matrix(truth, pred, k));
        CHECK(std::abs(got - mcc_by_covariance(truth, pred, k)) < 1e-12);
        CHECK(got >= -1.0);
        CHECK(got <= 1.0);
    }
}

TEST_CASE("aggregate uses the sample standard deviation") {
    const std::vector<double> v{0.7, 0.8, 0.9};
    const auto a = aggregate(v);
    CHECK(a.n == 3);
    CHECK(a.mean == doctest::Approx(0.8));
    CHECK(a.stdev == doctest::Approx(0.1));
    const std::vector<double> one{0.5};
    CHECK(aggregate(one).stdev == 0.0);
}

TEST_CASE("checkpoint round trip preserves predictions bitwise") {
    Rng rng(3);
    const fs::path dir = scratch("checkpoint");
    for (const auto& desc : {ArchitectureDescriptor::linear(5, 3), ArchitectureDescriptor::mlp(5, {9, 4}, 2)}) {
        const auto model = build_model(desc, 17);
        save_checkpoint(dir / "m.json", model, {3, 17, "task"});
        const auto loaded = load_checkpoint(dir / "m.json");
        CHECK(loaded.metadata == CheckpointMetadata{3, 17, "task"});
        CHECK(parameter_hash(loaded.model) == parameter_hash(model));
        const Tensor x = dcs::testing::random_tensor({1000, 5}, rng, -5.0, 5.0);
        const Tensor a = model.forward(x);
        const Tensor b = loaded.model.forward(x);
        CHECK(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0);
        CHECK(predict(model, x) == predict(loaded.model, x));
    }
}

TEST_CASE("checkpoint errors") {
    const fs::path dir = scratch("checkpoint_errors");
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), PersistenceError);
    std::ofstream(dir / "garbage.json") << "{\"format_version\": 1}";
    CHECK_THROWS_AS(load_checkpoint(dir / "garbage.json"), DataError);
    auto doc = checkpoint_to_json(build_model(ArchitectureDescriptor::linear(2, 2), 1), {});
    doc["format_version"] = 99;
    CHECK_THROWS_AS(checkpoint_from_json(doc), DataError);
}

TEST_CASE("teacher training is reproducible and reaches a separable task") {
    DistillationConfig config = small_config();
    config.task.label_noise_rate = 0.0;
    config.task.separation = 6.0;
    config.architecture = ArchitectureDescriptor::linear(3, 2);
    config.learning_rate = 0.05;
    const Workspace ws = prepare_workspace(config);
    const fs::path a = scratch("teacher_a");
    const fs::path b = scratch("teacher_b");
    const auto ta = train_teacher(config, ws, a);
    train_teacher(config, ws, b);
    CHECK(slurp(a / "teacher.json") == slurp(b / "teacher.json"));
    CHECK(ta.metrics.epochs.size() == 2);
    CHECK(ta.metrics.epochs.back().dev_accuracy >= 0.95);

    const auto loaded = load_teacher(a / "teacher.json", config);
    CHECK(parameter_hash(*loaded.model) == parameter_hash(*ta.model));
    auto other = config;
    other.teacher_seed = 9;
    CHECK_THROWS_AS(load_teacher(a / "teacher.json", other), ConfigError);
    other = config;
    other.task.seed = 99;
    CHECK_THROWS_AS(load_teacher(a / "teacher.json", other), ConfigError);
    CHECK_THROWS_AS(load_teacher(a / "nothing.json", config), ConfigError);
}

TEST_CASE("distilling strategies refuse to run without a teacher") {
    const auto config = small_config();
    const Workspace ws = prepare_workspace(config);
    try {
        run_experiment(config, WeightingStrategy::Dcs, ws, nullptr);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("train-teacher") != std::string::npos);
    }
    CHECK_NOTHROW(run_experiment(config, WeightingStrategy::VanillaFt, ws, nullptr));
}

TEST_CASE("compare writes five strategies with consistent aggregates") {
    const auto config = small_config();
    const Workspace ws = prepare_workspace(config);
    const auto teacher = train_teacher(config, ws).model;
    const fs::path dir = scratch("compare");
    const auto results = compare_strategies(config, ws, teacher, {dir});
    REQUIRE(results.size() == 5);

    const CsvTable summary = read_csv(dir / "summary.csv");
    CHECK(summary.rows.size() == 5);
    CHECK(summary.header == std::vector<std::string>{"strategy", "param", "param_value", "n_seeds",
                                                     "dev_accuracy_mean", "dev_accuracy_stdev", "dev_mcc_mean",
                                                     "dev_mcc_stdev"});
    std::set<std::string> names;
    for (const auto& row : summary.rows) {
        names.insert(row[0]);
    }
    CHECK(names == std::set<std::string>{"vanilla", "kd", "dcs", "dcs-reverse", "dcs-random"});

    // Aggregates recomputed from the per-seed rows.
    const CsvTable seeds = read_csv(dir / "seeds.csv");
    CHECK(seeds.rows.size() == 15);
    for (const auto& row : summary.rows) {
        std::vector<double> acc, mcc;
        for (const auto& s : seeds.rows) {
            if (s[seeds.column("strategy")] == row[0]) {
                acc.push_back(std::stod(s[seeds.column("dev_accuracy")]));
                mcc.push_back(std::stod(s[seeds.column("dev_mcc")]));
            }
        }
        const auto a = aggregate(acc);
        const auto m = aggregate(mcc);
        CHECK(std::stod(row[summary.column("dev_accuracy_mean")]) == a.mean);
        CHECK(std::stod(row[summary.column("dev_accuracy_stdev")]) == a.stdev);
        CHECK(std::stod(row[summary.column("dev_mcc_mean")]) == m.mean);
        CHECK(std::stod(row[summary.column("dev_mcc_stdev")]) == m.stdev);
        CHECK(std::stoul(row[summary.column("n_seeds")]) == 3);
    }

    // Best-epoch rows in metrics.csv agree with seeds.csv.
    const CsvTable metrics = read_csv(dir / "metrics.csv");
    CHECK(metrics.rows.size() == 5 * 3 * 4);
    for (const auto& s : seeds.rows) {
        bool found = false;
        for (const auto& m : metrics.rows) {
            if (m[0] == s[0] && m[metrics.column("seed")] == s[seeds.column("seed")] &&
                m[metrics.column("epoch")] == s[seeds.column("best_epoch")]) {
                CHECK(m[metrics.column("dev_accuracy")] == s[seeds.column("dev_accuracy")]);
                found = true;
            }
        }
        CHECK(found);
    }

    // Dcs and PureKd differ only through their logged weight vectors.
    for (std::uint64_t seed : config.seeds) {
        const std::string sd = "seed" + std::to_string(seed);
        CHECK(slurp(dir / "dcs" / sd / "weights_epoch0.csv") == slurp(dir / "kd" / sd / "weights_epoch0.csv"));
        bool differs = false;
        for (int e = 1; e < config.epochs; ++e) {
            const std::string f = "weights_epoch" + std::to_string(e) + ".csv";
            differs = differs || slurp(dir / "dcs" / sd / f) != slurp(dir / "kd" / sd / f);
        }
        CHECK(differs);
    }
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["csv_schema_version"] == kCsvSchemaVersion);
}

TEST_CASE("vanilla row equals a standalone alpha=1 run") {
    const auto config = small_config();
    const Workspace ws = prepare_workspace(config);
    const auto teacher = train_teacher(config, ws).model;
    const auto results = compare_strategies(config, ws, teacher);
    auto standalone_config = config;
    standalone_config.alpha = 1.0;
    const auto standalone = run_experiment(standalone_config, WeightingStrategy::VanillaFt, ws, nullptr);
    CHECK(results[0].strategy == WeightingStrategy::VanillaFt);
    CHECK(results[0].dev_accuracy.mean == standalone.dev_accuracy.mean);
    CHECK(results[0].dev_mcc.stdev == standalone.dev_mcc.stdev);
    for (std::size_t i = 0; i < standalone.runs.size(); ++i) {
        CHECK(results[0].runs[i].student_hash == standalone.runs[i].student_hash);
    }
}

TEST_CASE("parallel seeds merge deterministically") {
    auto config = small_config();
    config.seeds = {4, 1, 3, 2};
    const Workspace ws = prepare_workspace(config);
    const auto teacher = train_teacher(config, ws).model;
    const fs::path serial = scratch("serial");
    const fs::path parallel = scratch("parallel");
    run_experiment(config, WeightingStrategy::DcsRandom, ws, teacher, {serial});
    config.workers = 3;
    run_experiment(config, WeightingStrategy::DcsRandom, ws, teacher, {parallel});
    CHECK(slurp(serial / "metrics.csv") == slurp(parallel / "metrics.csv"));
    CHECK(slurp(serial / "seeds.csv") == slurp(parallel / "seeds.csv"));
}

TEST_CASE("sweeps emit one curve row per grid value") {
    const auto config = small_config();
    const Workspace ws = prepare_workspace(config);
    const auto teacher = train_teacher(config, ws).model;
    const fs::path dir = scratch("sweep");
    const std::vector<double> grid{2, 3, 4};
    const auto result = sweep(config, SweepParam::Lambda, grid, ws, teacher, {dir, false, false});
    CHECK(result.curve.size() == 3);
    const CsvTable curve = read_csv(dir / "curve.csv");
    CHECK(curve.header == std::vector<std::string>{"param_value", "mean", "stdev", "n_seeds"});
    REQUIRE(curve.rows.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::stod(curve.rows[i][0]) == grid[i]);
        CHECK(std::stoul(curve.rows[i][3]) == 3);
    }
    CHECK_FALSE(fs::exists(dir / "dcs"));
    const std::string text = report(dir);
    CHECK(text.find("Sensitivity curve") != std::string::npos);
    CHECK(fs::exists(dir / "curve.dat"));
    CHECK(fs::exists(dir / "epochs.dat"));
    CHECK_THROWS_AS(parse_sweep_param("beta"), ConfigError);
    CHECK_THROWS_AS(report(dir / "nope"), PersistenceError);
}

TEST_CASE("source pre-training seeds both teacher and students") {
    auto config = small_config();
    config.pretrain_epochs = 2;
    config.source_n_train = 300;
    const Workspace ws = prepare_workspace(config);
    REQUIRE(ws.pretrained.has_value());
    const auto a = initial_student(ws, config, 1);
    const auto b = initial_student(ws, config, 2);
    CHECK(parameter_hash(a) == parameter_hash(b));
    CHECK(parameter_hash(a) == parameter_hash(*ws.pretrained));
    CHECK(parameter_hash(a) != parameter_hash(build_model(config.architecture, config.teacher_seed)));
}

TEST_CASE("csv helpers") {
    CHECK(split_csv_line("a,b,,c\r") == std::vector<std::string>{"a", "b", "", "c"});
    CHECK(std::stod(format_number(0.1)) == 0.1);
    CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
    SampleWeightVector w = SampleWeightVector::ones(3);
    w.weights[1] = 2.0;
    CHECK(weights_csv(w) == "sample_id,weight\n0,1\n1,2\n2,1\n");
}
