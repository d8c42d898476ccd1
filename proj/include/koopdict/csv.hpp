#pragma once

#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "koopdict/error.hpp"

namespace koopdict::csv {

/// Round-trippable scientific notation (17 significant digits).
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", v);
    return buf;
}

/// Line-oriented CSV writer. Throws on open failure.
class Writer {
public:
    Writer(const std::filesystem::path& path, std::string_view header) : out_(path) {
        if (!out_) throw Error("cannot open " + path.string() + " for writing");
        out_ << header << '\n';
    }

    Writer& field(std::string_view s) {
        sep();
        out_ << s;
        return *this;
    }
    Writer& field(double v) { return field(std::string_view(fmt(v))); }
    Writer& field(long long v) { return field(std::string_view(std::to_string(v))); }
    Writer& field(std::size_t v) { return field(std::string_view(std::to_string(v))); }
    Writer& field(int v) { return field(std::string_view(std::to_string(v))); }

    void end_row() {
        out_ << '\n';
        first_ = true;
    }

private:
    void sep() {
        if (!first_) out_ << ',';
        first_ = false;
    }

    std::ofstream out_;
    bool first_ = true;
};

}  // namespace koopdict::csv
