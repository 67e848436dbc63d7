#pragma once
// Shared test helpers: fixture paths, temp directories, CLI invocation.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "adhom/common.hpp"

namespace testsupport {

inline std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

inline std::filesystem::path fixtures_dir() {
    return std::filesystem::absolute(env_or("ADHOM_FIXTURES", "tests/fixtures"));
}

inline std::filesystem::path golden_dir() {
    return std::filesystem::absolute(env_or("ADHOM_GOLDEN", "tests/golden"));
}

inline std::filesystem::path fixture_corpus() { return fixtures_dir() / "cmv_fixture.jsonl"; }

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw adhom::Error("test support: cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        dir_ = std::filesystem::temp_directory_path() /
               ("adhom_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }
    const std::filesystem::path& path() const { return dir_; }

private:
    std::filesystem::path dir_;
};

// Runs the CLI binary (path from ADHOM_CLI); returns the exit code.
// An optional working directory makes relative --out arguments reproducible.
inline int run_cli(const std::string& args, const std::filesystem::path& log,
                   const std::filesystem::path& workdir = {}) {
    const std::string bin = env_or("ADHOM_CLI", "");
    if (bin.empty()) throw adhom::Error("ADHOM_CLI is not set; run through ctest");
    std::string cmd;
    if (!workdir.empty()) cmd += "cd " + workdir.string() + " && ";
    cmd += bin + " " + args + " >" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    if (status < 0) return -1;
    return WEXITSTATUS(status);
}

}  // namespace testsupport
