#pragma once

// Little-endian byte buffers shared by the dataset and checkpoint formats.

#include "tlss/common.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace tlss::binio {

class Writer {
public:
    template <typename UInt>
    void put(UInt v)
    {
        for (std::size_t b = 0; b < sizeof(UInt); ++b) {
            buf_.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
        }
    }

    void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
    void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
    void put_bytes(const char* p, std::size_t n) { buf_.append(p, n); }
    void reserve(std::size_t n) { buf_.reserve(n); }

    void write_to(const std::filesystem::path& path) const
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + path.string() + " for writing");
        }
        out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!out) {
            throw IoError("write failed: " + path.string());
        }
    }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : name_(path.string())
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw IoError("cannot open " + name_ + " for reading");
        }
        bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    template <typename UInt>
    UInt get(const char* what)
    {
        need(sizeof(UInt), what);
        UInt v = 0;
        for (std::size_t b = 0; b < sizeof(UInt); ++b) {
            v |= static_cast<UInt>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
        }
        pos_ += sizeof(UInt);
        return v;
    }

    float get_f32(const char* what) { return std::bit_cast<float>(get<std::uint32_t>(what)); }
    double get_f64(const char* what) { return std::bit_cast<double>(get<std::uint64_t>(what)); }

    void need(std::size_t n, const char* what) const
    {
        if (bytes_.size() - pos_ < n) {
            throw TruncationError(name_ + ": truncated while reading " + what);
        }
    }

    bool starts_with(const char* magic, std::size_t n) const
    {
        return bytes_.size() >= n && bytes_.compare(0, n, magic, n) == 0;
    }

    void skip(std::size_t n) { pos_ += n; }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    const std::string& name() const { return name_; }

private:
    std::string name_;
    std::string bytes_;
    std::size_t pos_ = 0;
};

}  // namespace tlss::binio
