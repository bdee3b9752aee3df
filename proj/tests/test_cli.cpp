#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Result {
    int status = -1;
    std::string out;  // stdout and stderr
};

Result run(const std::string& args) {
    const std::string cmd = std::string(MANETL_CLI) + " " + args + " 2>&1";
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
    const int raw = pclose(p);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Last non-empty output line: the run directory.
fs::path run_dir(const Result& r) {
    std::istringstream in(r.out);
    std::string line, last;
    while (std::getline(in, line)) {
        if (!line.empty()) last = line;
    }
    return last;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("manetl_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const std::string kTiny =
    " --synthetic 4,10 --set input_size=16 --set stem_channels=4 --set branch_channels=8"
    " --set aux_conv_channels=4 --set aux_hidden=8 --set batch_size=8";

}  // namespace

TEST_CASE("macs prints both counts and their rounded forms") {
    const Result r = run("macs");
    CHECK(r.status == 0);
    CHECK(r.out.find("112896000") != std::string::npos);
    CHECK(r.out.find("112.9M") != std::string::npos);
    CHECK(r.out.find("5268480") != std::string::npos);
    CHECK(r.out.find("5.3M") != std::string::npos);
}

TEST_CASE("help documents the exit statuses") {
    const Result r = run("--help");
    CHECK(r.status == 0);
    CHECK(r.out.find("2 configuration error") != std::string::npos);
    CHECK(r.out.find("3 data error") != std::string::npos);
    CHECK(r.out.find("4 numerical abort") != std::string::npos);
    CHECK(run("train --help").out.find("Exit status") != std::string::npos);
}

TEST_CASE("gradcheck tiny passes within a minute") {
    const auto start = std::chrono::steady_clock::now();
    const Result r = run("gradcheck --scale tiny");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    MESSAGE("gradcheck tiny: " << secs << " s");
    CHECK(r.status == 0);
    CHECK(r.out.find("gradient suite passed") != std::string::npos);
    CHECK(secs < 60.0);
}

TEST_CASE("gradcheck with a corrupted backward rule fails naming the layer") {
    const Result r = run("gradcheck --corrupt conv2d --seeds 1");
    CHECK(r.status == 5);
    CHECK(r.out.find("FAIL conv2d") != std::string::npos);
    CHECK(r.out.find("max relative error") != std::string::npos);
}

TEST_CASE("distinct exit statuses for usage, config, data and numerical failures") {
    const fs::path dir = scratch("exit");
    CHECK(run("frobnicate").status == 1);
    CHECK(run("train --set learnig_rate=0.1").status == 2);
    const Result unknown = run("train --set learnig_rate=0.1");
    CHECK(unknown.out.find("learnig_rate") != std::string::npos);
    CHECK(run("train --dataset " + (dir / "missing").string()).status == 3);
    CHECK(run("evaluate --checkpoint " + (dir / "none.bin").string()).status == 3);
    const Result nan = run("train" + kTiny + " --set learning_rate=1e30 --epochs 1 --out " + dir.string());
    CHECK(nan.status == 4);
    CHECK(nan.out.find("batch") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("train writes a complete, reproducible run directory") {
    const fs::path out = scratch("train");
    const Result a = run("train" + kTiny + " --epochs 2 --out " + out.string());
    REQUIRE(a.status == 0);
    const Result b = run("train" + kTiny + " --epochs 2 --out " + out.string());
    REQUIRE(b.status == 0);
    const fs::path da = run_dir(a), db = run_dir(b);
    CHECK(da != db);  // never overwritten
    for (const char* f : {"config.txt", "metrics.csv", "timing.csv", "checkpoint.bin", "manifest.csv"}) {
        CHECK(fs::exists(da / f));
    }
    CHECK(slurp(da / "metrics.csv") == slurp(db / "metrics.csv"));
    CHECK(slurp(da / "checkpoint.bin") == slurp(db / "checkpoint.bin"));
    CHECK(slurp(da / "manifest.csv").find("# dataset_fingerprint=") != std::string::npos);
    CHECK(slurp(da / "config.txt").find("num_classes = 4") != std::string::npos);

    // The echoed config alone reproduces the run.
    const Result c = run("train --config " + (da / "config.txt").string() + " --out " + out.string());
    REQUIRE(c.status == 0);
    CHECK(slurp(run_dir(c) / "metrics.csv") == slurp(da / "metrics.csv"));
    fs::remove_all(out);
}

TEST_CASE("resume from a checkpoint matches the uninterrupted run") {
    const fs::path out = scratch("resume");
    const Result full = run("train" + kTiny + " --epochs 3 --out " + out.string());
    const Result part = run("train" + kTiny + " --epochs 2 --out " + out.string());
    REQUIRE(full.status == 0);
    REQUIRE(part.status == 0);
    const Result rest = run("train" + kTiny + " --epochs 3 --checkpoint " +
                            (run_dir(part) / "checkpoint.bin").string() + " --out " + out.string());
    REQUIRE(rest.status == 0);
    const std::string whole = slurp(run_dir(full) / "metrics.csv");
    const std::string joined = slurp(run_dir(part) / "metrics.csv") +
                               slurp(run_dir(rest) / "metrics.csv").substr(whole.find('\n') + 1);
    CHECK(joined == whole);
    // The checkpoints differ only in the echoed `checkpoint` key; the weights
    // must evaluate identically.
    auto eval_line = [&](const Result& r) {
        const Result e = run("evaluate --checkpoint " + (run_dir(r) / "checkpoint.bin").string() + " --out " +
                             out.string());
        REQUIRE(e.status == 0);
        return e.out.substr(0, e.out.find('\n'));
    };
    CHECK(eval_line(rest) == eval_line(full));
    fs::remove_all(out);
}

TEST_CASE("prepare writes a dataset that trains identically to the in-memory one") {
    const fs::path out = scratch("prepare");
    const Result p = run("prepare" + kTiny + " --out " + out.string());
    REQUIRE(p.status == 0);
    const fs::path data = run_dir(p);
    CHECK(fs::exists(data / "manifest.csv"));
    CHECK(fs::exists(data / "00" / "0000.bmp"));
    const Result direct = run("train" + kTiny + " --epochs 1 --out " + out.string());
    const Result from_disk =
        run("train" + kTiny + " --epochs 1 --dataset " + data.string() + " --out " + out.string());
    REQUIRE(direct.status == 0);
    REQUIRE(from_disk.status == 0);
    CHECK(slurp(run_dir(direct) / "metrics.csv") == slurp(run_dir(from_disk) / "metrics.csv"));

    const Result ev = run("evaluate --checkpoint " + (run_dir(direct) / "checkpoint.bin").string() + " --out " +
                          out.string());
    CHECK(ev.status == 0);
    CHECK(ev.out.find("test split: 8 samples") != std::string::npos);
    CHECK(fs::exists(run_dir(ev) / "eval.csv"));
    fs::remove_all(out);
}

TEST_CASE("--no-preprocess changes the fingerprint and still trains") {
    const fs::path out = scratch("raw");
    const Result r = run("train" + kTiny + " --epochs 1 --no-preprocess --out " + out.string());
    REQUIRE(r.status == 0);
    CHECK(slurp(run_dir(r) / "manifest.csv").find("# preprocess=enabled=0") != std::string::npos);
    CHECK(slurp(run_dir(r) / "config.txt").find("preprocess = false") != std::string::npos);
    fs::remove_all(out);
}
