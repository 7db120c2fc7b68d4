#pragma once

#include "conceptseg/core.hpp"
#include "conceptseg/rng.hpp"

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("conceptseg-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter++));
        std::filesystem::remove_all(path_);
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

inline conceptseg::BinaryMask random_mask(conceptseg::DeterministicRng& rng, int w, int h,
                                          double p = 0.5) {
    conceptseg::BinaryMask m(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            m.set(x, y, rng.uniform01() < p);
        }
    }
    return m;
}

inline conceptseg::BinaryMask mask_from_rows(std::initializer_list<const char*> rows) {
    const int h = static_cast<int>(rows.size());
    const int w = static_cast<int>(std::string(*rows.begin()).size());
    conceptseg::BinaryMask m(w, h);
    int y = 0;
    for (const char* row : rows) {
        for (int x = 0; x < w; ++x) {
            m.set(x, y, row[x] == '#');
        }
        ++y;
    }
    return m;
}

} // namespace testutil
