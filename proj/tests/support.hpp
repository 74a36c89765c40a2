#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "dxdialog/dialogue.hpp"
#include "dxdialog/knowledge_graph.hpp"

namespace testing_support {

inline std::filesystem::path data_path(const std::string& name) {
    return std::filesystem::path(DXDIALOG_DATA_DIR) / name;
}

inline std::filesystem::path test_data_path(const std::string& name) {
    return std::filesystem::path(DXDIALOG_TEST_DATA_DIR) / name;
}

inline std::shared_ptr<const dxdialog::KnowledgeGraph> fixture_graph() {
    static auto g = std::make_shared<const dxdialog::KnowledgeGraph>(
        dxdialog::load_graph_file(data_path("graph.json")));
    return g;
}

inline const dxdialog::KnowledgeGraph& small_graph() {
    static auto g = dxdialog::load_graph_file(test_data_path("small_graph.json"));
    return g;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("dxdialog-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testing_support
