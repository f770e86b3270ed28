#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "trove/corpus.hpp"

namespace testutil {

namespace fs = std::filesystem;

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        auto base = fs::temp_directory_path();
        std::mt19937_64 rng(std::random_device{}());
        for (int attempt = 0; attempt < 100; ++attempt) {
            fs::path candidate = base / ("trove_test_" + std::to_string(rng()));
            std::error_code ec;
            if (fs::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("cannot create temp directory");
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    fs::path path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct CommandResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

/// Runs a shell command, capturing stdout/stderr into temp files.
inline CommandResult run_command(const std::string& command, const TempDir& dir) {
    static int counter = 0;
    std::string out_path = dir.file("cmd_out_" + std::to_string(counter));
    std::string err_path = dir.file("cmd_err_" + std::to_string(counter));
    ++counter;
    std::string full = command + " > " + out_path + " 2> " + err_path;
    int status = std::system(full.c_str());
    CommandResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.out = read_file(out_path);
    result.err = read_file(err_path);
    return result;
}

/// Example with pre-segmented documents; language defaults to EN.
inline trove::Example make_example(const std::string& id,
                                   std::vector<std::vector<std::string>> docs,
                                   std::vector<std::string> targets,
                                   trove::Language lang = trove::Language::EN) {
    trove::Example ex;
    ex.id = id;
    ex.language = lang;
    ex.scenario = "test";
    for (auto& sentences : docs) {
        trove::Document doc;
        doc.language = lang;
        doc.sentences = std::move(sentences);
        std::string joined;
        for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
            if (i) joined += '\n';
            joined += doc.sentences[i];
        }
        doc.raw_text = std::move(joined);
        ex.documents.push_back(std::move(doc));
    }
    ex.targets = std::move(targets);
    std::tie(ex.length_bucket, ex.doc_class) = bucketize_example(ex);
    return ex;
}

}  // namespace testutil
