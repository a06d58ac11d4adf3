#pragma once

#include "lblm/common.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace lblm::io {

// Little-endian byte sink. The host is assumed little-endian (checked at compile time).
class ByteWriter {
public:
    template <typename T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    // u64 length prefix then raw bytes.
    void put_string(std::string_view s) {
        put<std::uint64_t>(s.size());
        put_bytes(s);
    }

    const std::vector<char>& bytes() const { return buf_; }
    std::size_t size() const { return buf_.size(); }

private:
    std::vector<char> buf_;
};

// Bounds-checked reader. Every failure throws FormatError with the offset of
// the field that could not be read.
class ByteReader {
public:
    explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

    template <typename T>
    T get(std::string_view what) {
        static_assert(std::is_trivially_copyable_v<T>);
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_bytes(std::size_t n, std::string_view what) {
        need(n, what);
        std::string s(data_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    std::string get_string(std::string_view what) {
        const auto at = pos_;
        const auto n = get<std::uint64_t>(what);
        if (n > remaining()) throw FormatError("truncated " + std::string(what), at);
        return get_bytes(static_cast<std::size_t>(n), what);
    }
    void read_floats(float* dst, std::size_t n, std::string_view what) {
        need(n * sizeof(float), what);
        std::memcpy(dst, data_.data() + pos_, n * sizeof(float));
        pos_ += n * sizeof(float);
    }

    std::uint64_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool at_end() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n, std::string_view what) const {
        if (n > remaining()) throw FormatError("truncated " + std::string(what), pos_);
    }

    std::vector<char> data_;
    std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);
// Writes to a sibling temp file and renames it over path, so readers never
// observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace lblm::io
