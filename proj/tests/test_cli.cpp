#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CliEnv {
  fs::path binary;
  fs::path fixtures;
  fs::path work;

  CliEnv() {
    const char* bin = std::getenv("HULLFT_CLI_BIN");
    const char* fix = std::getenv("HULLFT_FIXTURES");
    REQUIRE(bin != nullptr);
    REQUIRE(fix != nullptr);
    binary = bin;
    fixtures = fix;
    work = fs::temp_directory_path() /
           ("hullft_cli_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(work);
  }
  ~CliEnv() { fs::remove_all(work); }

  int run(const std::string& args, std::string* output = nullptr) const {
    const fs::path capture = work / "capture.out";
    const std::string command =
        "\"" + binary.string() + "\" " + args + " > \"" + capture.string() + "\" 2>&1";
    const int status = std::system(command.c_str());
    if (output) {
      std::ifstream in(capture, std::ios::binary);
      std::ostringstream buffer;
      buffer << in.rdbuf();
      *output = buffer.str();
    }
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
  }

  std::string fixture(const std::string& name) const { return (fixtures / name).string(); }
  std::string out(const std::string& name) const { return (work / name).string(); }
};

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

}  // namespace

TEST_CASE("select on the committed midpoint fixture") {
  CliEnv env;
  std::string log;
  const int code = env.run("select --pool " + env.fixture("pool2.hft") + " --query " +
                               env.fixture("query_mid.hft") + " --budget 3 --out " + env.out("sel.json"),
                           &log);
  REQUIRE(code == 0);
  const nlohmann::json sel = load_json(env.out("sel.json"));
  CHECK(sel["query_id"] == "q0");
  CHECK(sel["support"][0]["count"] == 2);
  CHECK(sel["support"][1]["count"] == 1);
  CHECK(sel["metrics"]["integer_error"].get<double>() == Catch::Approx(1.0 / 18.0).margin(1e-12));
}

TEST_CASE("select with budget one emits a single support entry") {
  CliEnv env;
  const int code = env.run("select --pool " + env.fixture("pool2.hft") + " --query " +
                           env.fixture("query_mid.hft") + " --budget 1 --out " + env.out("sel.json"));
  REQUIRE(code == 0);
  const nlohmann::json sel = load_json(env.out("sel.json"));
  REQUIRE(sel["support"].size() == 1);
  CHECK(sel["support"][0]["count"] == 1);
}

TEST_CASE("select with integerizer none serializes weights without counts") {
  CliEnv env;
  std::string log;
  const int code = env.run("select --pool " + env.fixture("pool2.hft") + " --query " +
                               env.fixture("query_mid.hft") +
                               " --budget 3 --integerizer none --out " + env.out("sel.json"),
                           &log);
  REQUIRE(code == 0);
  const nlohmann::json sel = load_json(env.out("sel.json"));
  CHECK(sel["fractional_only"] == true);
  for (const auto& entry : sel["support"]) CHECK_FALSE(entry.contains("count"));
  CHECK_THAT(log, Catch::Matchers::ContainsSubstring("fractional"));
}

TEST_CASE("corpus preselection feeds the selector") {
  CliEnv env;
  const int code = env.run("select --corpus " + env.fixture("pool2.hft") + " --query " +
                           env.fixture("query_mid.hft") + " --budget 2 --k-pool 1 --out " +
                           env.out("sel.json"));
  REQUIRE(code == 0);
  const nlohmann::json sel = load_json(env.out("sel.json"));
  REQUIRE(sel["support"].size() == 1);
  CHECK(sel["support"][0]["id"] == "p0");  // tie on score, lower index wins
}

TEST_CASE("schedule from a selection matches the pass formula") {
  CliEnv env;
  REQUIRE(env.run("select --pool " + env.fixture("pool2.hft") + " --query " +
                  env.fixture("query_mid.hft") + " --budget 3 --out " + env.out("sel.json")) == 0);
  REQUIRE(env.run("schedule --selection " + env.out("sel.json") + " --refresh 2 --out " +
                  env.out("sch.json")) == 0);
  const nlohmann::json sch = load_json(env.out("sch.json"));
  CHECK(sch["stats"]["fb_passes"] == 2);
  CHECK(sch["stats"]["total_steps"] == 3);
  CHECK(sch["steps"][0]["id"] == "p0");
}

TEST_CASE("schedule transforms group sequences as specified") {
  CliEnv env;
  std::ofstream(env.out("seq.txt")) << "a\nb\na\nc\nb\n";

  SECTION("global dedup collapses to first-occurrence blocks") {
    REQUIRE(env.run("schedule --sequence " + env.out("seq.txt") + " --refresh 2 --transform "
                    "global-dedup --out " + env.out("sch.json")) == 0);
    const nlohmann::json sch = load_json(env.out("sch.json"));
    CHECK(sch["stats"]["fb_passes"] == 3);
    CHECK(sch["steps"].size() == 5);
    CHECK(sch["steps"][0]["id"] == "a");
    CHECK(sch["steps"][1]["action"] == "reuse");
  }
  SECTION("consecutive grouping merges adjacent duplicates only") {
    std::ofstream(env.out("seq2.txt")) << "a\na\nb\na\n";
    REQUIRE(env.run("schedule --sequence " + env.out("seq2.txt") + " --refresh 2 --transform "
                    "consecutive --out " + env.out("sch.json")) == 0);
    const nlohmann::json sch = load_json(env.out("sch.json"));
    CHECK(sch["stats"]["fb_passes"] == 3);
  }
  SECTION("no transform refreshes every step") {
    REQUIRE(env.run("schedule --sequence " + env.out("seq.txt") + " --refresh 2 --out " +
                    env.out("sch.json")) == 0);
    const nlohmann::json sch = load_json(env.out("sch.json"));
    CHECK(sch["stats"]["fb_passes"] == 5);
  }
  SECTION("refresh one means standard training") {
    REQUIRE(env.run("schedule --sequence " + env.out("seq.txt") + " --refresh 1 --transform "
                    "global-dedup --out " + env.out("sch.json")) == 0);
    const nlohmann::json sch = load_json(env.out("sch.json"));
    CHECK(sch["stats"]["fb_passes"] == sch["stats"]["total_steps"]);
  }
}

TEST_CASE("toytrain reports passes and is deterministic per seed") {
  CliEnv env;
  REQUIRE(env.run("select --pool " + env.fixture("pool2.hft") + " --query " +
                  env.fixture("query_mid.hft") + " --budget 3 --out " + env.out("sel.json")) == 0);
  REQUIRE(env.run("schedule --selection " + env.out("sel.json") + " --refresh 2 --out " +
                  env.out("sch.json")) == 0);

  REQUIRE(env.run("toytrain --schedule " + env.out("sch.json") + " --targets " +
                  env.fixture("targets.txt") + " --seed 9 --out " + env.out("tt1.json")) == 0);
  REQUIRE(env.run("toytrain --schedule " + env.out("sch.json") + " --targets " +
                  env.fixture("targets.txt") + " --seed 9 --out " + env.out("tt2.json")) == 0);

  std::ifstream a(env.out("tt1.json")), b(env.out("tt2.json"));
  std::ostringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());

  const nlohmann::json tt = load_json(env.out("tt1.json"));
  CHECK(tt["fb_passes"] == 2);
  CHECK(tt["total_steps"] == 3);
  CHECK(tt["loss_trace"].size() == 2);
}

TEST_CASE("exit codes distinguish usage, format, and data problems") {
  CliEnv env;
  SECTION("missing required flag is usage") {
    CHECK(env.run("select --pool " + env.fixture("pool2.hft")) == 2);
  }
  SECTION("unparseable pool file is a format error") {
    std::ofstream(env.out("garbage.hft"), std::ios::binary) << "not a pool";
    CHECK(env.run("select --pool " + env.out("garbage.hft") + " --query " +
                  env.fixture("query_mid.hft") + " --budget 3") == 3);
  }
  SECTION("query with more than one row is a format error") {
    CHECK(env.run("select --pool " + env.fixture("pool2.hft") + " --query " +
                  env.fixture("pool2.hft") + " --budget 3") == 3);
  }
  SECTION("zero refresh is usage") {
    std::ofstream(env.out("seq.txt")) << "a\n";
    CHECK(env.run("schedule --sequence " + env.out("seq.txt") + " --refresh 0") == 2);
  }
  SECTION("missing target for a scheduled id") {
    std::ofstream(env.out("seq.txt")) << "unknown_id\n";
    REQUIRE(env.run("schedule --sequence " + env.out("seq.txt") + " --refresh 1 --out " +
                    env.out("sch.json")) == 0);
    CHECK(env.run("toytrain --schedule " + env.out("sch.json") + " --targets " +
                  env.fixture("targets.txt") + " --seed 1") == 3);
  }
  SECTION("unknown selector is usage") {
    CHECK(env.run("select --pool " + env.fixture("pool2.hft") + " --query " +
                  env.fixture("query_mid.hft") + " --budget 3 --selector nope") == 2);
  }
  SECTION("help exits zero") {
    CHECK(env.run("--help") == 0);
  }
}

TEST_CASE("bench emits one row per configuration and budget") {
  CliEnv env;
  std::string csv;
  const int code = env.run(
      "bench --synth-k 12 --synth-d 6 --seed 3 --n-min 1 --n-max 5 --selectors fw "
      "--integerizers geometric,pad-by-weights",
      &csv);
  REQUIRE(code == 0);
  std::istringstream lines(csv);
  std::string line;
  int rows = 0;
  while (std::getline(lines, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 1 + 2 * 5);  // header + 2 integerizers x 5 budgets
}

TEST_CASE("bench objective columns are reproducible under a fixed seed") {
  CliEnv env;
  const std::string args =
      "bench --synth-k 10 --synth-d 4 --seed 11 --n-min 2 --n-max 4 --selectors fw,caratheodory";
  std::string first, second;
  REQUIRE(env.run(args, &first) == 0);
  REQUIRE(env.run(args, &second) == 0);

  auto strip_timing = [](const std::string& csv) {
    std::istringstream lines(csv);
    std::string line, kept;
    while (std::getline(lines, line)) {
      // Timing lives in the last three columns.
      std::size_t cut = line.size();
      for (int c = 0; c < 3 && cut != std::string::npos; ++c) cut = line.rfind(',', cut - 1);
      kept += line.substr(0, cut) + "\n";
    }
    return kept;
  };
  CHECK(strip_timing(first) == strip_timing(second));
}
