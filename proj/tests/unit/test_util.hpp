#pragma once

#include <gtest/gtest.h>

#include "longctx/tokenizer.hpp"

namespace longctx::test {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = info ? std::string(info->test_suite_name()) + "_" + info->name() : "scratch";
        path_ = fs::temp_directory_path() / ("longctx_" + name + "_" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& p) const { return path_ / p; }

private:
    fs::path path_;
};

inline const Tokenizer& bpe() {
    static const auto t = load_tokenizer({"bpe", ""});
    return *t;
}

inline const Tokenizer& ws() {
    static const WhitespaceTokenizer t;
    return t;
}

inline fs::path fixture(const std::string& name) { return fs::path(LONGCTX_TEST_FIXTURES) / name; }

}  // namespace longctx::test
