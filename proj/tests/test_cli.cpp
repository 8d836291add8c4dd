#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lamino/io.hpp"

using namespace lamino;
namespace fs = std::filesystem;

namespace {

struct CliDir {
    fs::path path;
    CliDir() {
        path = fs::temp_directory_path() /
               ("lamino_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()));
        fs::create_directories(path);
    }
    ~CliDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int counter() {
        static int c = 0;
        return c++;
    }
    std::string file(const std::string& name) const {
        return (path / name).string();
    }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LAMINO_CLI_PATH) + " " + args +
                            " >/dev/null 2>/dev/null";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string run_cli_stderr(const CliDir& dir, const std::string& args) {
    const std::string err = dir.file("stderr.txt");
    const std::string cmd = std::string(LAMINO_CLI_PATH) + " " + args +
                            " >/dev/null 2>" + err;
    std::system(cmd.c_str());
    std::ifstream f(err);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

} // namespace

TEST_CASE("phantom -> project -> fbp -> eval -> slice pipeline") {
    CliDir dir;
    write_file(dir.file("run.cfg"), "[phantom]\n"
                                    "dims = 32,32,16\n"
                                    "n_layers = 4\n"
                                    "[geometry]\n"
                                    "n_angles = 60\n");
    const std::string cfg = " --config " + dir.file("run.cfg");

    REQUIRE(run_cli("phantom --seed 1 -o " + dir.file("p.lmv") + cfg) == 0);
    VolumeHeader hdr;
    const Volume phantom = read_volume(dir.file("p.lmv"), &hdr);
    CHECK(phantom.dims == Dims{32, 32, 16});
    CHECK(hdr.seed == 1);
    CHECK(fs::exists(dir.file("p.lmv.meta")));

    REQUIRE(run_cli("project " + dir.file("p.lmv") + " -o " +
                    dir.file("d.lms") + cfg) == 0);
    StackHeader shdr;
    read_stack(dir.file("d.lms"), &shdr);
    CHECK(shdr.n_angles == 60);
    CHECK(shdr.theta_deg == 61.0);
    CHECK(shdr.config_hash == hdr.config_hash);

    REQUIRE(run_cli("fbp " + dir.file("d.lms") + " -o " + dir.file("f.lmv") +
                    cfg) == 0);
    const Volume fbp_vol = read_volume(dir.file("f.lmv"));
    CHECK(fbp_vol.dims == phantom.dims);

    REQUIRE(run_cli("eval " + dir.file("f.lmv") + " --ref " +
                    dir.file("p.lmv") + " -o " + dir.file("m.csv") + cfg) ==
            0);
    {
        std::ifstream m(dir.file("m.csv"));
        std::string header, row;
        std::getline(m, header);
        std::getline(m, row);
        CHECK(header ==
              "name,ber_all,ber_fine,pcc,cone_energy_ratio,config_hash");
        CHECK(!row.empty());
    }
    CHECK(fs::exists(dir.file("m.csv.json")));

    REQUIRE(run_cli("slice " + dir.file("p.lmv") + " --axis z --index 4 -o " +
                    dir.file("layer.pgm")) == 0);
    std::ifstream img(dir.file("layer.pgm"), std::ios::binary);
    std::string magic;
    img >> magic;
    CHECK(magic == "P5");
}

TEST_CASE("phantom re-runs are byte-identical except the timestamp") {
    CliDir dir;
    REQUIRE(run_cli("phantom --seed 3 --dims 32,32,16 -o " +
                    dir.file("a.lmv")) == 0);
    REQUIRE(run_cli("phantom --seed 3 --dims 32,32,16 -o " +
                    dir.file("b.lmv")) == 0);
    std::ifstream fa(dir.file("a.lmv"), std::ios::binary);
    std::ifstream fb(dir.file("b.lmv"), std::ios::binary);
    std::string a((std::istreambuf_iterator<char>(fa)),
                  std::istreambuf_iterator<char>());
    std::string b((std::istreambuf_iterator<char>(fb)),
                  std::istreambuf_iterator<char>());
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (i >= kVolumeTimestampOffset && i < kVolumeTimestampOffset + 8)
            continue;
        CHECK(a[i] == b[i]);
    }
}

TEST_CASE("reconstruct runs a short fit and writes a trace") {
    CliDir dir;
    write_file(dir.file("run.cfg"), "[phantom]\n"
                                    "dims = 16,16,8\n"
                                    "n_layers = 3\n"
                                    "voxel_nm = 1.0\n"
                                    "[geometry]\n"
                                    "n_angles = 8\n"
                                    "[dipnet]\n"
                                    "channels = 4,8\n"
                                    "bottleneck = 8\n"
                                    "[solver]\n"
                                    "n_iters = 10\n"
                                    "snapshot_stride = 0\n");
    const std::string cfg = " --config " + dir.file("run.cfg");
    REQUIRE(run_cli("phantom -o " + dir.file("p.lmv") + cfg) == 0);
    REQUIRE(run_cli("project " + dir.file("p.lmv") + " -o " +
                    dir.file("d.lms") + cfg) == 0);
    REQUIRE(run_cli("reconstruct " + dir.file("d.lms") + " --angles 4 -o " +
                    dir.file("r.lmv") + cfg) == 0);
    const Volume recon = read_volume(dir.file("r.lmv"));
    CHECK(recon.dims == Dims{16, 16, 8});

    std::ifstream trace(dir.file("r.lmv.trace.csv"));
    REQUIRE(trace);
    std::string line;
    std::getline(trace, line);
    CHECK(line == "iteration,data_term,tv_term,total");
    int rows = 0;
    while (std::getline(trace, line))
        if (!line.empty())
            ++rows;
    CHECK(rows == 10);
}

TEST_CASE("malformed config yields a one-line machine-parsable error") {
    CliDir dir;
    write_file(dir.file("bad.cfg"), "[solver]\nn_iters = banana\n");
    const std::string err = run_cli_stderr(
        dir, "phantom -o " + dir.file("p.lmv") + " --config " +
                 dir.file("bad.cfg"));
    CHECK(run_cli("phantom -o " + dir.file("p.lmv") + " --config " +
                  dir.file("bad.cfg")) != 0);
    CHECK(err.rfind("error: ", 0) == 0);
    CHECK(err.find("solver.n_iters") != std::string::npos);
    CHECK(err.find("line 2") != std::string::npos);
    // single line
    CHECK(std::count(err.begin(), err.end(), '\n') == 1);
}

TEST_CASE("eval refuses mismatched geometry headers") {
    CliDir dir;
    REQUIRE(run_cli("phantom --seed 1 --dims 32,32,16 -o " +
                    dir.file("a.lmv")) == 0);
    REQUIRE(run_cli("phantom --seed 1 --dims 16,16,8 -o " +
                    dir.file("b.lmv")) == 0);
    const std::string err =
        run_cli_stderr(dir, "eval " + dir.file("a.lmv") + " --ref " +
                                dir.file("b.lmv") + " -o " + dir.file("m.csv"));
    CHECK(run_cli("eval " + dir.file("a.lmv") + " --ref " + dir.file("b.lmv") +
                  " -o " + dir.file("m2.csv")) != 0);
    CHECK(err.find("mismatch") != std::string::npos);
}

TEST_CASE("version-mismatched files are refused by the cli") {
    CliDir dir;
    REQUIRE(run_cli("phantom --seed 1 --dims 16,16,8 -o " +
                    dir.file("p.lmv")) == 0);
    // bump the tool_version byte
    std::string bytes;
    {
        std::ifstream f(dir.file("p.lmv"), std::ios::binary);
        bytes.assign((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    }
    bytes[48] = 9;
    {
        std::ofstream f(dir.file("v9.lmv"), std::ios::binary);
        f << bytes;
    }
    const std::string err =
        run_cli_stderr(dir, "slice " + dir.file("v9.lmv") +
                                " --axis z --index 0 -o " + dir.file("s.pgm"));
    CHECK(err.find("version") != std::string::npos);
    CHECK(err.find("9") != std::string::npos);
}
