#pragma once

#include "freqlens/errors.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace freqlens {

// Shortest decimal form that round-trips; keeps file output byte-stable.
inline std::string format_double(double value) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view token, const std::string& context) {
    double value = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t' || *(last - 1) == '\r')) --last;
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last || first == last) {
        throw parse_error(context + ": not a number: '" + std::string(token) + "'");
    }
    return value;
}

inline long long parse_int(std::string_view token, const std::string& context) {
    long long value = 0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t' || *(last - 1) == '\r')) --last;
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last || first == last) {
        throw parse_error(context + ": not an integer: '" + std::string(token) + "'");
    }
    return value;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

// Writes content to <path>.tmp and renames into place, so a failed run never
// leaves a truncated file under the declared name.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw error("cannot open for writing: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            out.close();
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw error("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw error("cannot rename " + tmp.string() + " to " + path.string());
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open: " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

}  // namespace freqlens
