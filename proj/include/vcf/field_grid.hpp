#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "vcf/error.hpp"

namespace vcf {

// Named-channel H x W x C float32 grid. Planes are stored channel-major,
// row-major within each plane; this is the carrier for every field family
// (heatmaps, offsets, embedding offsets, seed and sigma maps).
class FieldGrid {
public:
    FieldGrid() = default;

    FieldGrid(int height, int width, std::vector<std::string> channels, float fill = 0.0f)
        : height_(height), width_(width), channels_(std::move(channels)) {
        if (height_ <= 0 || width_ <= 0)
            throw schema_error("FieldGrid: dimensions must be positive");
        check_channel_names(channels_);
        data_.assign(std::size_t(height_) * std::size_t(width_) * channels_.size(), fill);
    }

    int height() const { return height_; }
    int width() const { return width_; }
    int channel_count() const { return int(channels_.size()); }
    const std::vector<std::string>& channel_names() const { return channels_; }

    // Index of the named channel, -1 when absent.
    int channel_index(std::string_view name) const {
        for (std::size_t i = 0; i < channels_.size(); ++i)
            if (channels_[i] == name) return int(i);
        return -1;
    }

    int require_channel(std::string_view name) const {
        const int idx = channel_index(name);
        if (idx < 0) throw schema_error("FieldGrid: missing channel '" + std::string(name) + "'");
        return idx;
    }

    float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    std::span<float> plane(int c) {
        return {data_.data() + std::size_t(c) * plane_size(), plane_size()};
    }
    std::span<const float> plane(int c) const {
        return {data_.data() + std::size_t(c) * plane_size(), plane_size()};
    }

    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

    std::size_t plane_size() const { return std::size_t(height_) * std::size_t(width_); }

    bool same_shape(const FieldGrid& o) const {
        return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(),
                           [](float v) { return std::isfinite(v); });
    }

    bool operator==(const FieldGrid& o) const {
        if (height_ != o.height_ || width_ != o.width_ || channels_ != o.channels_)
            return false;
        // Bit-exact: compare payloads byte-wise so -0.0 != +0.0.
        return data_.size() == o.data_.size() &&
               std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(float)) == 0;
    }

private:
    static void check_channel_names(const std::vector<std::string>& names) {
        std::unordered_set<std::string_view> seen;
        for (const auto& n : names) {
            if (n.empty()) throw schema_error("FieldGrid: empty channel name");
            if (!seen.insert(n).second)
                throw schema_error("FieldGrid: duplicate channel name '" + n + "'");
        }
    }

    std::size_t index(int c, int y, int x) const {
        return std::size_t(c) * plane_size() + std::size_t(y) * std::size_t(width_) + std::size_t(x);
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<std::string> channels_;
    std::vector<float> data_;
};

namespace detail {

inline void put_u16_le(std::string& out, std::uint16_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
}

inline void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
    out.push_back(char((v >> 16) & 0xff));
    out.push_back(char((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
           std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

inline std::uint16_t get_u16_le(const unsigned char* p) {
    return std::uint16_t(std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8);
}

} // namespace detail

inline constexpr char kFieldMagic[4] = {0x56, 0x43, 0x46, 0x31}; // "VCF1"

// Serializes a grid to the VCF1 container. Layout, all little-endian:
// magic "VCF1"; u32 height, width, channel count; per channel a u16 name
// length plus UTF-8 bytes; then the float32 payload, channel-major planes,
// row-major within each plane. Returns the byte count written.
inline std::size_t write_field_grid(const FieldGrid& grid, std::ostream& sink) {
    if (grid.height() <= 0 || grid.width() <= 0)
        throw schema_error("write_field_grid: empty grid");
    if (!grid.all_finite())
        throw schema_error("write_field_grid: grid contains non-finite values");

    std::string header;
    header.append(kFieldMagic, 4);
    detail::put_u32_le(header, std::uint32_t(grid.height()));
    detail::put_u32_le(header, std::uint32_t(grid.width()));
    detail::put_u32_le(header, std::uint32_t(grid.channel_count()));
    for (const auto& name : grid.channel_names()) {
        if (name.size() > 0xffff)
            throw schema_error("write_field_grid: channel name longer than 65535 bytes");
        detail::put_u16_le(header, std::uint16_t(name.size()));
        header.append(name);
    }

    std::size_t written = 0;
    sink.write(header.data(), std::streamsize(header.size()));
    if (!sink) throw io_error("write_field_grid: sink failed after " + std::to_string(written) + " bytes");
    written += header.size();

    // Payload in chunks; float bits are emitted LSB first regardless of host order.
    std::string buf;
    buf.reserve(1 << 16);
    for (float v : grid.data()) {
        detail::put_u32_le(buf, std::bit_cast<std::uint32_t>(v));
        if (buf.size() >= (1 << 16)) {
            sink.write(buf.data(), std::streamsize(buf.size()));
            if (!sink) throw io_error("write_field_grid: sink failed after " + std::to_string(written) + " bytes");
            written += buf.size();
            buf.clear();
        }
    }
    if (!buf.empty()) {
        sink.write(buf.data(), std::streamsize(buf.size()));
        if (!sink) throw io_error("write_field_grid: sink failed after " + std::to_string(written) + " bytes");
        written += buf.size();
    }
    sink.flush();
    if (!sink) throw io_error("write_field_grid: flush failed after " + std::to_string(written) + " bytes");
    return written;
}

// Parses a VCF1 stream back into a grid; exact inverse of write_field_grid.
inline FieldGrid read_field_grid(std::istream& source) {
    unsigned char head[16];
    source.read(reinterpret_cast<char*>(head), 16);
    if (source.gcount() < 16)
        throw length_error("read_field_grid: truncated header");
    if (std::memcmp(head, kFieldMagic, 4) != 0)
        throw format_error("read_field_grid: bad magic");

    const std::uint32_t height = detail::get_u32_le(head + 4);
    const std::uint32_t width = detail::get_u32_le(head + 8);
    const std::uint32_t channel_count = detail::get_u32_le(head + 12);
    if (height == 0 || width == 0)
        throw format_error("read_field_grid: zero dimension");
    constexpr std::uint64_t kMaxElements = 1ull << 31;
    if (std::uint64_t(height) * width * (channel_count ? channel_count : 1) > kMaxElements)
        throw length_error("read_field_grid: declared size implausibly large");

    std::vector<std::string> names(channel_count);
    for (auto& name : names) {
        unsigned char len_bytes[2];
        source.read(reinterpret_cast<char*>(len_bytes), 2);
        if (source.gcount() < 2) throw length_error("read_field_grid: truncated channel table");
        const std::uint16_t len = detail::get_u16_le(len_bytes);
        name.resize(len);
        if (len > 0) {
            source.read(name.data(), len);
            if (source.gcount() < std::streamsize(len))
                throw length_error("read_field_grid: truncated channel name");
        }
    }

    FieldGrid grid(int(height), int(width), std::move(names)); // throws schema_error on duplicates

    const std::size_t count = grid.data().size();
    std::vector<unsigned char> raw(count * 4);
    source.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (std::size_t(source.gcount()) < raw.size())
        throw length_error("read_field_grid: payload shorter than declared shape");

    float* out = grid.data().data();
    for (std::size_t i = 0; i < count; ++i)
        out[i] = std::bit_cast<float>(detail::get_u32_le(raw.data() + i * 4));
    return grid;
}

} // namespace vcf
