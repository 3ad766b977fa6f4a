#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "levelscope/experiment.hpp"

using namespace levelscope;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("levelscope_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string tiny_experiment_config(const std::string& out_dir) {
    return
        "experiment.datasets = tiny\n"
        "dataset.tiny.kind = synth\n"
        "dataset.tiny.days = 3\n"
        "dataset.tiny.events_per_day = 60\n"
        "dataset.tiny.informative_levels = 1\n"
        "dataset.tiny.signal_strength = 0.8\n"
        "dataset.tiny.seed = 5\n"
        "experiment.window_length = 5\n"
        "experiment.horizons = 2,3\n"
        "experiment.backbones = convolutional\n"
        "experiment.methods = baseline,be,bpso\n"
        "experiment.repetitions = 2\n"
        "experiment.root_seed = 42\n"
        "experiment.alpha = 0.001\n"
        "experiment.train_days = 2\n"
        "experiment.test_days = 1\n"
        "experiment.validation_fraction = 0.25\n"
        "train.learning_rate = 0.05\n"
        "train.batch_size = 32\n"
        "train.max_epochs = 2\n"
        "train.patience = 2\n"
        "bpso.swarm_size = 4\n"
        "bpso.iterations = 3\n"
        "output.dir = " + out_dir + "\n";
}

}  // namespace

TEST(KeyValueConfig, ParsesTrimsAndRejects) {
    auto kv = KeyValueConfig::from_string("# comment\n  a.b = 3 \n\nname = hello world\n");
    EXPECT_EQ(kv.get_int("a.b"), 3);
    EXPECT_EQ(kv.get_string("name"), "hello world");
    EXPECT_EQ(kv.get_int("missing", 7), 7);
    kv.reject_unconsumed();

    EXPECT_THROW(KeyValueConfig::from_string("a=1\na=2\n"), ConfigError);
    EXPECT_THROW(KeyValueConfig::from_string("just a line\n"), ConfigError);
    auto bad = KeyValueConfig::from_string("x = notanumber\n");
    EXPECT_THROW(bad.get_int("x"), ConfigError);
    auto extra = KeyValueConfig::from_string("unknown.key = 1\n");
    EXPECT_THROW(extra.reject_unconsumed(), ConfigError);
}

TEST(KeyValueConfig, ListsAndDoubles) {
    auto kv = KeyValueConfig::from_string("hs = 10, 20,50\nlr = 0.05\n");
    const auto list = kv.get_list("hs");
    ASSERT_EQ(list.size(), 3u);
    EXPECT_EQ(list[2], "50");
    EXPECT_DOUBLE_EQ(kv.get_double("lr"), 0.05);
}

TEST(ExperimentConfig, ParsesFullGrid) {
    auto kv = KeyValueConfig::from_string(tiny_experiment_config("outdir"));
    const ExperimentConfig cfg = parse_experiment_config(kv);
    ASSERT_EQ(cfg.datasets.size(), 1u);
    EXPECT_EQ(cfg.datasets[0].id, "tiny");
    EXPECT_TRUE(cfg.datasets[0].is_synth);
    EXPECT_EQ(cfg.datasets[0].synth.events_per_day, 60);
    EXPECT_EQ(cfg.horizons, (std::vector<int>{2, 3}));
    EXPECT_EQ(cfg.backbones, (std::vector<BackboneKind>{BackboneKind::Convolutional}));
    EXPECT_EQ(cfg.methods.size(), 3u);
    EXPECT_EQ(cfg.repetitions, 2);
    EXPECT_EQ(cfg.root_seed, 42u);
    EXPECT_EQ(cfg.output_dir, "outdir");
    EXPECT_EQ(cfg.train.max_epochs, 2);
    EXPECT_EQ(cfg.bpso.swarm_size, 4);
}

TEST(ExperimentConfig, RejectsBadValues) {
    {
        auto kv = KeyValueConfig::from_string("experiment.horizons = 10\n");
        EXPECT_THROW(parse_experiment_config(kv), ConfigError);  // missing datasets
    }
    {
        std::string text = tiny_experiment_config("o");
        text += "experiment.window_stride = 1\n";  // wrong section name
        auto kv = KeyValueConfig::from_string(text);
        EXPECT_THROW(parse_experiment_config(kv), ConfigError);
    }
    {
        std::string text = tiny_experiment_config("o");
        text.replace(text.find("validation_fraction = 0.25"), 26, "validation_fraction = 0.00");
        auto kv = KeyValueConfig::from_string(text);
        EXPECT_THROW(parse_experiment_config(kv), ConfigError);
    }
}

TEST(SeedDerivation, CollisionFreeAcrossTheGrid) {
    std::set<std::uint64_t> seeds;
    int cells = 0;
    for (const std::string& ds : {"us", "nordic"}) {
        for (BackboneKind bb : {BackboneKind::TemporalBilinear, BackboneKind::Convolutional}) {
            for (Method m : {Method::Baseline, Method::BE, Method::BPSO}) {
                for (int h : {10, 20, 50}) {
                    for (int rep = 0; rep < 20; ++rep) {
                        seeds.insert(derive_cell_seed(1234, ds, bb, m, h, rep));
                        ++cells;
                    }
                }
            }
        }
    }
    EXPECT_EQ(seeds.size(), static_cast<std::size_t>(cells));
    EXPECT_NE(derive_cell_seed(1, "a", BackboneKind::Convolutional, Method::BE, 10, 0),
              derive_cell_seed(2, "a", BackboneKind::Convolutional, Method::BE, 10, 0));
}

TEST(ThinTraining, KeepsEveryNth) {
    Dataset ds;
    ds.window_length = 3;
    for (int i = 0; i < 10; ++i) {
        SampleWindow w;
        w.matrix = Matrix(kInputRows, 3, static_cast<double>(i));
        w.origin_time_index = i;
        ds.train.push_back(w);
        if (i < 5) ds.validation.push_back(w);
        ds.test.push_back(w);
    }
    const Dataset thin = thin_training(ds, 3);
    ASSERT_EQ(thin.train.size(), 4u);  // indices 0,3,6,9
    EXPECT_EQ(thin.train[1].origin_time_index, 3);
    EXPECT_EQ(thin.validation.size(), 2u);
    EXPECT_EQ(thin.test.size(), 10u);
}

TEST(TrainedFitness, FullMaskEqualsIdenticallySeededBaselineTraining) {
    SynthConfig sc;
    sc.days = 3;
    sc.events_per_day = 70;
    sc.informative_levels = {1};
    sc.signal_strength = 0.8;
    sc.seed = 9;
    const Dataset ds = split_dataset(generate(sc), 2, 1, 0.25, 5, 2, 0.001);
    TrainConfig tc;
    tc.learning_rate = 0.05;
    tc.batch_size = 32;
    tc.max_epochs = 3;
    tc.seed = 77;
    const TrainedFitness fitness(ds, BackboneKind::Convolutional, tc);
    const double from_evaluator = fitness(LevelMask::all_ones());
    const TrainResult baseline = train(ds, LevelMask::all_ones(), BackboneKind::Convolutional, tc);
    EXPECT_DOUBLE_EQ(from_evaluator, TrainedFitness::best_validation_f1(baseline));
}

TEST(RunCell, EliminationRecordHoldsTheCardinalityChain) {
    SynthConfig sc;
    sc.days = 3;
    sc.events_per_day = 60;
    sc.informative_levels = {1};
    sc.signal_strength = 0.9;
    sc.seed = 4;
    auto ds = std::make_shared<Dataset>(split_dataset(generate(sc), 2, 1, 0.25, 5, 2, 0.001));
    CellSpec cell;
    cell.dataset = ds;
    cell.dataset_id = "tiny";
    cell.backbone = BackboneKind::Convolutional;
    cell.method = Method::BE;
    cell.horizon = 2;
    cell.repetition = 0;
    cell.seed = 11;
    TrainConfig tc;
    tc.learning_rate = 0.05;
    tc.batch_size = 32;
    tc.max_epochs = 2;
    tc.seed = 11;
    const RunRecord rec = run_cell(cell, tc, BpsoConfig{});
    ASSERT_EQ(rec.selected_masks.size(), 10u);
    for (int c = 0; c < 10; ++c)
        EXPECT_EQ(rec.selected_masks[static_cast<std::size_t>(c)].mask.popcount(), 10 - c);
    EXPECT_EQ(rec.evaluation_mask, rec.selected_masks.back().mask);
    EXPECT_EQ(rec.evaluation_mask.popcount(), 1);
    EXPECT_GT(rec.wall_clock_seconds, 0.0);
    EXPECT_GE(rec.test_f1.macro_f1, 0.0);
}

TEST(RunExperiment, SingleBaselineCellWritesOneRecord) {
    TempDir tmp("single");
    ExperimentConfig cfg;
    DatasetSpec spec;
    spec.id = "only";
    spec.synth.days = 3;
    spec.synth.events_per_day = 60;
    spec.synth.seed = 2;
    cfg.datasets = {spec};
    cfg.window_length = 5;
    cfg.horizons = {2};
    cfg.backbones = {BackboneKind::Convolutional};
    cfg.methods = {Method::Baseline};
    cfg.repetitions = 1;
    cfg.train_days = 2;
    cfg.test_days = 1;
    cfg.alpha = 0.001;
    cfg.train.max_epochs = 2;
    cfg.train.batch_size = 32;
    cfg.output_dir = (tmp.path / "out").string();
    const auto result = run_experiment(cfg, 1);
    EXPECT_EQ(result.record_files.size(), 1u);
    EXPECT_TRUE(fs::exists(fs::path(cfg.output_dir) / result.record_files[0]));
    EXPECT_TRUE(fs::exists(fs::path(cfg.output_dir) / "f1_comparison.csv"));
    EXPECT_TRUE(fs::exists(fs::path(cfg.output_dir) / "summary.txt"));
}

TEST(RunExperiment, GridIsDeterministicAndComplete) {
    TempDir tmp("grid");
    const std::string out1 = (tmp.path / "out1").string();
    const std::string out2 = (tmp.path / "out2").string();

    auto kv1 = KeyValueConfig::from_string(tiny_experiment_config(out1));
    const ExperimentConfig cfg1 = parse_experiment_config(kv1);
    const auto res1 = run_experiment(cfg1, 2);
    EXPECT_EQ(res1.record_files.size(), 12u);  // 1 ds x 1 backbone x 3 methods x 2 horizons x 2 reps

    auto kv2 = KeyValueConfig::from_string(tiny_experiment_config(out2));
    const ExperimentConfig cfg2 = parse_experiment_config(kv2);
    const auto res2 = run_experiment(cfg2, 1);  // different worker count, same content

    ASSERT_EQ(res1.record_files.size(), res2.record_files.size());
    for (std::size_t i = 0; i < res1.record_files.size(); ++i) {
        const std::string a = read_file(fs::path(out1) / res1.record_files[i]);
        const std::string b = read_file(fs::path(out2) / res2.record_files[i]);
        EXPECT_FALSE(a.empty());
        EXPECT_EQ(a, b) << res1.record_files[i];
    }
    for (const char* name : {"be_final_level_freq.csv", "be_pair_subset_freq.csv",
                             "be_pair_subset_freq_avg.csv", "bpso_final_mask_freq.csv",
                             "bpso_final_mask_freq_avg.csv", "f1_comparison.csv",
                             "be_subset_series.svg", "bpso_solution_series.svg", "summary.txt"}) {
        EXPECT_TRUE(fs::exists(fs::path(out1) / name)) << name;
        EXPECT_EQ(read_file(fs::path(out1) / name), read_file(fs::path(out2) / name)) << name;
    }

    // the report subcommand path reproduces the same artifacts from disk
    const auto records = load_records(out1);
    EXPECT_EQ(records.size(), 12u);
    const std::string out3 = (tmp.path / "out3").string();
    generate_reports(records, out3);
    EXPECT_EQ(read_file(fs::path(out1) / "f1_comparison.csv"), read_file(fs::path(out3) / "f1_comparison.csv"));
}

TEST(LoadRecords, EmptyDirectoryIsAnError) {
    TempDir tmp("empty");
    EXPECT_THROW(load_records(tmp.path.string()), std::runtime_error);
    EXPECT_THROW(load_records((tmp.path / "missing").string()), std::runtime_error);
}

TEST(WriteFileAtomic, ReplacesContent) {
    TempDir tmp("atomic");
    const fs::path p = tmp.path / "x.txt";
    write_file_atomic(p, "one");
    write_file_atomic(p, "two");
    EXPECT_EQ(read_file(p), "two");
    EXPECT_FALSE(fs::exists(tmp.path / "x.txt.tmp"));
}
