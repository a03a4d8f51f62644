#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args, bool merge_stderr = false) {
    const std::string cmd = std::string(SECO_BIN_PATH) + " " + args +
                            (merge_stderr ? " 2>&1" : " 2>/dev/null");
    RunResult result;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (std::fgets(buf, sizeof(buf), pipe) != nullptr) result.output += buf;
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() / ("seco_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("usage errors exit with code 2") {
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("bogus-subcommand").exit_code == 2);
    CHECK(run_cli("train --no-such-flag", true).exit_code == 2);
    CHECK(run_cli("--help").exit_code == 0);
    CHECK(run_cli("train --help").exit_code == 0);
}

TEST_CASE("runtime errors exit with code 1 and one diagnostic line") {
    const RunResult r = run_cli("eval --ckpt /nonexistent.ckpt --data /nonexistent",
                                true);
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("error:") != std::string::npos);
}

TEST_CASE("full pipeline: generate, train, eval, predict") {
    Workspace ws;
    write_file(ws.dir / "planted.conf",
               "entities = 12\nrelations = 2\ncontexts = 2\ntimestamps = 20\n"
               "events_per_step = 6\nnoise = 0.0\nseed = 5\n");
    write_file(ws.dir / "train.conf",
               "embed_dim = 8\nrgcn_layers = 1\nhistory_len = 2\nlr = 0.003\n"
               "weight_decay = 0\nmax_epochs = 2\npatience = 2\nseed = 4\n"
               "conv_channels = 3\nconv_width = 3\n");

    const RunResult gen = run_cli("gen-synthetic --config " + ws.path("planted.conf") +
                                  " --out " + ws.path("data"));
    CHECK(gen.exit_code == 0);
    CHECK(gen.output.find("context_blind_bound") != std::string::npos);
    CHECK(fs::exists(ws.dir / "data" / "train.txt"));
    CHECK(fs::exists(ws.dir / "data" / "stat.txt"));

    const RunResult train = run_cli("train --data " + ws.path("data") + " --config " +
                                    ws.path("train.conf") + " --out " +
                                    ws.path("model.ckpt") + " --log " + ws.path("log.tsv"));
    CHECK(train.exit_code == 0);
    CHECK(fs::exists(ws.dir / "model.ckpt"));
    {
        // Epoch lines go to stdout and to the log file identically.
        std::ifstream log(ws.dir / "log.tsv");
        std::string file_text((std::istreambuf_iterator<char>(log)),
                              std::istreambuf_iterator<char>());
        CHECK(file_text == train.output);
        CHECK(std::count(file_text.begin(), file_text.end(), '\n') == 2);
    }

    const RunResult eval = run_cli("eval --ckpt " + ws.path("model.ckpt") + " --data " +
                                   ws.path("data") + " --split test");
    CHECK(eval.exit_code == 0);
    CHECK(eval.output.find("MRR") != std::string::npos);

    const RunResult eval_json = run_cli("eval --ckpt " + ws.path("model.ckpt") +
                                        " --data " + ws.path("data") +
                                        " --split test --json");
    CHECK(eval_json.exit_code == 0);
    CHECK(eval_json.output.rfind("{", 0) == 0);
    CHECK(eval_json.output.find("\"per_context\"") != std::string::npos);

    const std::string predict_args = "predict --ckpt " + ws.path("model.ckpt") +
                                     " --data " + ws.path("data") +
                                     " --subject 3 --relation 1 --context 0 --top 5";
    const RunResult predict = run_cli(predict_args);
    CHECK(predict.exit_code == 0);
    CHECK(std::count(predict.output.begin(), predict.output.end(), '\n') == 5);
    // Probabilities print in descending order.
    {
        std::istringstream in(predict.output);
        std::string line;
        double prev = 2.0;
        while (std::getline(in, line)) {
            const auto tab = line.rfind('\t');
            REQUIRE(tab != std::string::npos);
            const double p = std::stod(line.substr(tab + 1));
            CHECK(p <= prev);
            prev = p;
        }
    }
    // Entity names resolve to the same query as raw ids.
    const RunResult by_name = run_cli("predict --ckpt " + ws.path("model.ckpt") +
                                      " --data " + ws.path("data") +
                                      " --subject e3 --relation r1 --context c0 --top 5");
    CHECK(by_name.output == predict.output);

    // Identical invocations reproduce identical output.
    CHECK(run_cli(predict_args).output == predict.output);
}

TEST_CASE("checkpoint and dataset vocabularies must match") {
    Workspace ws;
    write_file(ws.dir / "planted.conf",
               "entities = 12\nrelations = 2\ncontexts = 2\ntimestamps = 20\n"
               "events_per_step = 6\nseed = 5\n");
    write_file(ws.dir / "other.conf",
               "entities = 12\nrelations = 2\ncontexts = 3\ntimestamps = 20\n"
               "events_per_step = 6\nseed = 5\n");
    write_file(ws.dir / "train.conf",
               "embed_dim = 8\nrgcn_layers = 1\nhistory_len = 2\nlr = 0.003\n"
               "max_epochs = 1\npatience = 1\nseed = 4\nconv_channels = 3\n");

    REQUIRE(run_cli("gen-synthetic --config " + ws.path("planted.conf") + " --out " +
                    ws.path("data"))
                .exit_code == 0);
    REQUIRE(run_cli("gen-synthetic --config " + ws.path("other.conf") + " --out " +
                    ws.path("other"))
                .exit_code == 0);
    REQUIRE(run_cli("train --data " + ws.path("data") + " --config " +
                    ws.path("train.conf") + " --out " + ws.path("model.ckpt"))
                .exit_code == 0);

    const RunResult mismatch = run_cli("eval --ckpt " + ws.path("model.ckpt") +
                                       " --data " + ws.path("other") + " --split test",
                                       true);
    CHECK(mismatch.exit_code == 1);
    CHECK(mismatch.output.find("incompatible") != std::string::npos);
}

TEST_CASE("gen-contexts clusters a corpus into a quintuple dataset") {
    Workspace ws;
    fs::create_directories(ws.dir / "quads");
    write_file(ws.dir / "quads" / "entity2id.txt", "cairo\t0\nriver\t1\nport\t2\n");
    write_file(ws.dir / "quads" / "relation2id.txt", "meets\t0\n");
    // Two timestamps per split boundary: train {0,1}, valid {2}, test {3}.
    write_file(ws.dir / "quads" / "train.txt",
               "0\t0\t1\t0\n1\t0\t2\t0\n0\t0\t2\t1\n2\t0\t0\t1\n");
    write_file(ws.dir / "quads" / "valid.txt", "1\t0\t0\t2\n");
    write_file(ws.dir / "quads" / "test.txt", "2\t0\t1\t3\n");
    // Two clearly separated topics.
    write_file(ws.dir / "corpus.txt",
               "flood river water rain\n"
               "water river flood\n"
               "trade port ship cargo\n"
               "cargo ship trade\n");
    write_file(ws.dir / "map.txt", "0\t0\n1\t1\n2\t2\n3\t3\n4\t0\n5\t2\n");

    const RunResult gen = run_cli("gen-contexts --data " + ws.path("quads") +
                                  " --corpus " + ws.path("corpus.txt") + " --map " +
                                  ws.path("map.txt") + " --k 2 --out " + ws.path("out") +
                                  " --seed 3");
    CHECK(gen.exit_code == 0);
    CHECK(fs::exists(ws.dir / "out" / "context2id.txt"));
    CHECK(fs::exists(ws.dir / "out" / "top_terms.txt"));
    {
        std::ifstream stat(ws.dir / "out" / "stat.txt");
        std::string line;
        std::getline(stat, line);
        CHECK(line == "3\t1\t2");
    }
    {
        // Events 0 and 1 share the flood topic, 2 and 3 the trade topic.
        std::ifstream train(ws.dir / "out" / "train.txt");
        std::string l1, l2, l3, l4;
        std::getline(train, l1);
        std::getline(train, l2);
        std::getline(train, l3);
        std::getline(train, l4);
        CHECK(l1.back() == l2.back());
        CHECK(l3.back() == l4.back());
        CHECK(l1.back() != l3.back());
    }

    // The emitted dataset is trainable as-is.
    write_file(ws.dir / "train.conf",
               "embed_dim = 8\nrgcn_layers = 1\nhistory_len = 2\nlr = 0.003\n"
               "max_epochs = 1\npatience = 1\nseed = 4\nconv_channels = 3\n");
    CHECK(run_cli("train --data " + ws.path("out") + " --config " +
                  ws.path("train.conf") + " --out " + ws.path("m.ckpt"))
              .exit_code == 0);
}

TEST_CASE("ablate prints one row per variant") {
    Workspace ws;
    write_file(ws.dir / "planted.conf",
               "entities = 10\nrelations = 2\ncontexts = 2\ntimestamps = 15\n"
               "events_per_step = 5\nseed = 9\n");
    write_file(ws.dir / "train.conf",
               "embed_dim = 6\nrgcn_layers = 1\nhistory_len = 1\nlr = 0.003\n"
               "max_epochs = 1\npatience = 1\nseed = 2\nconv_channels = 2\n");
    REQUIRE(run_cli("gen-synthetic --config " + ws.path("planted.conf") + " --out " +
                    ws.path("data"))
                .exit_code == 0);
    const RunResult ablate = run_cli("ablate --data " + ws.path("data") + " --config " +
                                     ws.path("train.conf") +
                                     " --variants full,no-hg,avr-context");
    CHECK(ablate.exit_code == 0);
    CHECK(ablate.output.find("full") != std::string::npos);
    CHECK(ablate.output.find("no-hg") != std::string::npos);
    CHECK(ablate.output.find("avr-context") != std::string::npos);

    const RunResult bad = run_cli("ablate --data " + ws.path("data") + " --config " +
                                  ws.path("train.conf") + " --variants no-everything",
                                  true);
    CHECK(bad.exit_code == 1);
}

TEST_SUITE_END();
