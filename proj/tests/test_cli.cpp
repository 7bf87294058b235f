#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "generators.hpp"
#include "mscmhmst/checkpoint.hpp"
#include "mscmhmst/cli.hpp"
#include "mscmhmst/errors.hpp"

using namespace mscmhmst;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Fresh scratch directory per test case.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("mscmhmst_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& leaf) const { return (dir / leaf).string(); }
};

constexpr const char* kSmallConfig =
    "# fast settings for tests\n"
    "variant = MSCMHMST_4\n"
    "msc_kernels = 3,5\n"
    "branch_channels = 2\n"
    "d_model = 4\n"
    "encoder_layers = 1\n"
    "encoder_heads = 2\n"
    "fc_hidden = 8\n"
    "history = 12\n"
    "horizon = 12\n"
    "epochs = 1\n"
    "batch_size = 64\n"
    "seed = 3\n";

ModelConfig ckpt_model() {
  ModelConfig c;
  c.variant = Variant::MSCMHMST;
  c.head_specs = {HeadSpec({1, 3}), HeadSpec({5})};
  c.branch_channels = 2;
  c.d_model = 4;
  c.encoder_layers = 1;
  c.fc_hidden = 8;
  return c;
}

}  // namespace

TEST_SUITE("config file") {
  TEST_CASE("parses keys, comments and defaults") {
    const ExperimentConfig c = ExperimentConfig::parse(kSmallConfig);
    CHECK(c.model.variant == Variant::MSCMHMST_4);
    CHECK(c.model.msc_kernels == std::vector<int>{3, 5});
    CHECK(c.model.seed == 3);
    CHECK(c.train.seed == 3);
    CHECK(c.train.batch_size == 64);
    CHECK(c.train.learning_rate == 0.001);
  }

  TEST_CASE("round trips through text") {
    ExperimentConfig c = ExperimentConfig::parse(kSmallConfig);
    c.set("head_specs", "1,3;3,5");
    c.set("learning_rate", "0.0025");
    c.set("loss", "mae");
    const ExperimentConfig back = ExperimentConfig::parse(c.to_text());
    CHECK(back.to_pairs() == c.to_pairs());
  }

  TEST_CASE("rejections") {
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse("learningrate = 0.1\n"), doctest::Contains("learningrate"),
                         ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("epochs = 2\nepochs = 3\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("epochs\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("epochs = two\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("epochs = 0\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("loss = huber\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("variant = LSTM\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("d_model = 7\n"), ConfigError);
  }

  TEST_CASE("every documented key is accepted") {
    const ExperimentConfig defaults;
    for (const auto& [key, value] : defaults.to_pairs()) {
      ExperimentConfig c;
      CHECK_NOTHROW(c.set(key, value));
    }
    CHECK(defaults.to_pairs().size() == config_keys().size());
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save load save is bitwise stable and forward is unchanged") {
    Scratch s("ckpt_roundtrip");
    const ModelConfig mc = ckpt_model();
    Model m = Model::build(mc);
    ExperimentConfig ec;
    ec.model = mc;
    const NormStats stats{Tensor::vector({1.5, 2}), Tensor::vector({3, 0.25})};
    save_checkpoint(s / "a.ckpt", m, ec, stats, "feed");
    const Checkpoint c = load_checkpoint(s / "a.ckpt");
    save_checkpoint(s / "b.ckpt", c.model, c.config, c.stats, c.manifest_hash);
    CHECK(slurp(s / "a.ckpt") == slurp(s / "b.ckpt"));
    CHECK(c.manifest_hash == "feed");
    CHECK(c.stats.mean == stats.mean);
    CHECK(c.stats.std == stats.std);
    gen::Source src(163);
    const Tensor x({3, 2, 12}, src.reals(72, -2, 2));
    CHECK(c.model.predict(x) == m.predict(x));
  }

  TEST_CASE("stored total matches the parameter count") {
    const Model m = Model::build(ckpt_model());
    ExperimentConfig ec;
    ec.model = ckpt_model();
    const std::string bytes = serialize_checkpoint(m, ec, {Tensor({2}, 0.0), Tensor({2}, 1.0)}, "h");
    const std::string needle = "\"total_parameters\":" + std::to_string(m.parameter_count());
    CHECK(bytes.find(needle) != std::string::npos);
    CHECK(bytes.rfind("MSCMHMST-CHECKPOINT\n", 0) == 0);
  }

  TEST_CASE("damaged files are rejected") {
    const Model m = Model::build(ckpt_model());
    ExperimentConfig ec;
    ec.model = ckpt_model();
    const std::string good = serialize_checkpoint(m, ec, {Tensor({2}, 0.0), Tensor({2}, 1.0)}, "h");
    CHECK_NOTHROW(deserialize_checkpoint(good));

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(bad_magic), CheckpointError);

    const std::size_t brace = good.find('{');
    std::string bad_header = good;
    bad_header[brace] = '[';
    CHECK_THROWS_AS(deserialize_checkpoint(bad_header), CheckpointError);

    CHECK_THROWS_AS(deserialize_checkpoint(good.substr(0, good.size() - 8)), CheckpointError);
    CHECK_THROWS_AS(deserialize_checkpoint(good + "extra"), CheckpointError);
    CHECK_THROWS_AS(deserialize_checkpoint(""), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.ckpt"), CheckpointError);
  }
}

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 2") {
    CHECK(cli({}).code == kExitConfig);
    CHECK(cli({"frobnicate"}).code == kExitConfig);
    CHECK(cli({"train", "--data", "x.csv"}).code == kExitConfig);
    CHECK(cli({"--version"}).code == kExitOk);
  }

  TEST_CASE("synth writes one day per 288 rows, deterministically") {
    Scratch s("synth");
    REQUIRE(cli({"synth", "--out", s / "a.csv", "--sensors", "2", "--days", "1", "--seed", "4"}).code == kExitOk);
    REQUIRE(cli({"synth", "--out", s / "b.csv", "--sensors", "2", "--days", "1", "--seed", "4"}).code == kExitOk);
    CHECK(slurp(s / "a.csv") == slurp(s / "b.csv"));
    const FlowSeries series = load_series(s / "a.csv");
    CHECK(series.values.shape() == Shape{2, 288});
    for (double v : series.values.data()) CHECK(v >= 0.0);
    CHECK(slurp(s / "a.csv").rfind("#", 0) == 0);
    CHECK(cli({"synth", "--out", "/nonexistent/dir/a.csv"}).code == kExitData);
    CHECK(cli({"synth", "--out", s / "c.csv", "--sensors", "0"}).code == kExitConfig);
  }

  TEST_CASE("train, eval and their failure modes") {
    Scratch s("train_eval");
    REQUIRE(cli({"synth", "--out", s / "data.csv", "--sensors", "2", "--days", "3", "--seed", "7"}).code == kExitOk);
    spit(s / "small.cfg", kSmallConfig);

    const Run train = cli({"train", "--config", s / "small.cfg", "--data", s / "data.csv", "--out", s / "run1"});
    REQUIRE_MESSAGE(train.code == kExitOk, train.err);
    for (const char* f : {"checkpoint.ckpt", "history.csv", "timing.csv", "manifest.json"})
      CHECK(fs::exists(s.dir / "run1" / f));

    REQUIRE(cli({"train", "--config", s / "small.cfg", "--data", s / "data.csv", "--out", s / "run2"}).code == kExitOk);
    CHECK(slurp(s.dir / "run1" / "history.csv") == slurp(s.dir / "run2" / "history.csv"));
    CHECK(slurp(s.dir / "run1" / "checkpoint.ckpt") == slurp(s.dir / "run2" / "checkpoint.ckpt"));
    CHECK(slurp(s.dir / "run1" / "manifest.json") == slurp(s.dir / "run2" / "manifest.json"));

    // every artifact references the manifest hash
    const std::string history = slurp(s.dir / "run1" / "history.csv");
    const std::string hash = history.substr(11, history.find('\n') - 11);
    CHECK(hash.size() == 16);
    CHECK(slurp(s.dir / "run1" / "checkpoint.ckpt").find(hash) != std::string::npos);
    CHECK(train.out.find(hash) != std::string::npos);

    const std::string ckpt = s / "run1/checkpoint.ckpt";
    const Run eval1 = cli({"eval", "--checkpoint", ckpt, "--data", s / "data.csv", "--out", s / "eval1"});
    REQUIRE_MESSAGE(eval1.code == kExitOk, eval1.err);
    REQUIRE(cli({"eval", "--checkpoint", ckpt, "--data", s / "data.csv", "--out", s / "eval2"}).code == kExitOk);
    const std::string report = slurp(s.dir / "eval1" / "report.csv");
    CHECK(report == slurp(s.dir / "eval2" / "report.csv"));
    CHECK(slurp(s.dir / "eval1" / "report.txt") == slurp(s.dir / "eval2" / "report.txt"));
    CHECK(report.find("# manifest=" + hash) == 0);
    for (const char* h : {",3,15,MAE,", ",6,30,RMSE,", ",12,60,MAPE,"}) CHECK(report.find(h) != std::string::npos);
    CHECK(report.find("naive_last_value") != std::string::npos);

    SUBCASE("unknown config key") {
      spit(s / "typo.cfg", "learningrate = 0.1\n");
      const Run r = cli({"train", "--config", s / "typo.cfg", "--data", s / "data.csv", "--out", s / "x"});
      CHECK(r.code == kExitConfig);
      CHECK(r.err.find("learningrate") != std::string::npos);
      CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
    }
    SUBCASE("unparseable data") {
      spit(s / "bad.csv", "a,b\n1,x\n");
      const Run r = cli({"train", "--data", s / "bad.csv", "--out", s / "x"});
      CHECK(r.code == kExitData);
      CHECK(r.err.find("row 1") != std::string::npos);
      CHECK(cli({"train", "--data", s / "missing.csv", "--out", s / "x"}).code == kExitData);
    }
    SUBCASE("corrupted checkpoint header") {
      std::string bytes = slurp(ckpt);
      bytes[bytes.find("\"format\"") + 1] = 'X';
      spit(s / "broken.ckpt", bytes);
      CHECK(cli({"eval", "--checkpoint", s / "broken.ckpt", "--data", s / "data.csv", "--out", s / "x"}).code ==
            kExitCheckpoint);
    }
    SUBCASE("checkpoint incompatible with the data") {
      REQUIRE(cli({"synth", "--out", s / "three.csv", "--sensors", "3", "--days", "3"}).code == kExitOk);
      CHECK(cli({"eval", "--checkpoint", ckpt, "--data", s / "three.csv", "--out", s / "x"}).code == kExitCheckpoint);
    }
    SUBCASE("short-horizon checkpoint") {
      spit(s / "short.cfg", "variant = MSC_Transformer\nhorizon = 6\nepochs = 1\nfc_hidden = 4\nd_model = 4\n");
      REQUIRE(cli({"train", "--config", s / "short.cfg", "--data", s / "data.csv", "--out", s / "short"}).code ==
              kExitOk);
      CHECK(cli({"eval", "--checkpoint", s / "short/checkpoint.ckpt", "--data", s / "data.csv", "--out", s / "x"})
                .code == kExitCheckpoint);
    }
  }

  TEST_CASE("ablate produces a per-variant table and is reproducible") {
    Scratch s("ablate");
    REQUIRE(cli({"synth", "--out", s / "data.csv", "--sensors", "2", "--days", "3", "--seed", "7"}).code == kExitOk);
    spit(s / "small.cfg", kSmallConfig);
    const std::vector<std::string> base{"ablate", "--config", s / "small.cfg", "--data", s / "data.csv",
                                        "--variants", "MSCMHMST_4,MSC_Transformer", "--runs", "3", "--out"};
    auto with_out = [&](const std::string& dir) {
      auto a = base;
      a.push_back(s / dir);
      return a;
    };
    const Run r1 = cli(with_out("a1"));
    REQUIRE_MESSAGE(r1.code == kExitOk, r1.err);
    REQUIRE(cli(with_out("a2")).code == kExitOk);
    for (const char* f : {"ablation.txt", "ablation.csv", "runs.csv", "curves.csv", "manifest.json"})
      CHECK(slurp(s.dir / "a1" / f) == slurp(s.dir / "a2" / f));
    const std::string csv = slurp(s.dir / "a1" / "ablation.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2 + 2 * 3 * 4);
    CHECK(r1.err.find("plain mean") != std::string::npos);
    CHECK(slurp(s.dir / "a1" / "manifest.json").find("\"seeds\"") != std::string::npos);

    auto bad = with_out("bad");
    bad[6] = "MSCMHMST_4,LSTM";
    CHECK(cli(bad).code == kExitConfig);
    auto few = with_out("few");
    few[8] = "2";
    CHECK(cli(few).code == kExitConfig);
  }

  TEST_CASE("ablate with ten runs uses trimming and records ten seeds") {
    Scratch s("ablate10");
    REQUIRE(cli({"synth", "--out", s / "data.csv", "--sensors", "1", "--days", "2", "--seed", "7"}).code == kExitOk);
    spit(s / "tiny.cfg",
         "variant = MSC_Transformer\nmsc_kernels = 3\nbranch_channels = 1\nd_model = 2\nencoder_layers = 0\n"
         "encoder_heads = 1\nfc_hidden = 4\nepochs = 1\nbatch_size = 128\nseed = 20\n");
    const Run r = cli({"ablate", "--config", s / "tiny.cfg", "--data", s / "data.csv", "--variants", "MSC_Transformer",
                       "--runs", "10", "--out", s / "out"});
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
    CHECK(r.err.find("plain mean") == std::string::npos);
    const std::string manifest = slurp(s.dir / "out" / "manifest.json");
    for (int seed = 20; seed < 30; ++seed) CHECK(manifest.find(std::to_string(seed)) != std::string::npos);
    const std::string runs = slurp(s.dir / "out" / "runs.csv");
    CHECK(std::count(runs.begin(), runs.end(), '\n') == 2 + 10 * 3 * 4);
  }

  TEST_CASE("gradcheck verdicts") {
    const Run ok = cli({"gradcheck"});
    CHECK(ok.code == kExitOk);
    CHECK(ok.out.find("PASS") != std::string::npos);
    CHECK(ok.out.find("max relative error") != std::string::npos);

    const Run broken = cli({"gradcheck", "--inject-fault"});
    CHECK(broken.code == kExitCheckFailed);
    CHECK(broken.out.find("FAIL") != std::string::npos);
    CHECK(broken.out.find(" at mhms.") != std::string::npos);

    Scratch s("gradcheck");
    spit(s / "big.cfg", "input_channels = 5\n");
    CHECK(cli({"gradcheck", "--config", s / "big.cfg"}).code == kExitConfig);
    spit(s / "long.cfg", "history = 17\n");
    CHECK(cli({"gradcheck", "--config", s / "long.cfg"}).code == kExitConfig);
  }
}
