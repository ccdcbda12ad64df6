#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "vcf/error.hpp"

namespace vcf {

// Binary instance mask on a pixel canvas.
class Bitmap {
public:
    Bitmap() = default;
    Bitmap(int height, int width) : height_(height), width_(width) {
        if (height_ < 0 || width_ < 0) throw schema_error("Bitmap: negative dimension");
        bits_.assign(std::size_t(height_) * std::size_t(width_), 0);
    }

    int height() const { return height_; }
    int width() const { return width_; }

    bool at(int y, int x) const { return bits_[std::size_t(y) * width_ + x] != 0; }
    void set(int y, int x, bool v = true) { bits_[std::size_t(y) * width_ + x] = v ? 1 : 0; }

    bool contains(int y, int x) const {
        return y >= 0 && y < height_ && x >= 0 && x < width_ && at(y, x);
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto b : bits_) n += b;
        return n;
    }

    bool empty() const { return count() == 0; }

    bool same_canvas(const Bitmap& o) const {
        return height_ == o.height_ && width_ == o.width_;
    }

    bool operator==(const Bitmap& o) const {
        return height_ == o.height_ && width_ == o.width_ && bits_ == o.bits_;
    }

    const std::vector<std::uint8_t>& raw() const { return bits_; }
    std::vector<std::uint8_t>& raw() { return bits_; }

    // a := a \ b
    void subtract(const Bitmap& b) {
        for (std::size_t i = 0; i < bits_.size(); ++i)
            if (b.bits_[i]) bits_[i] = 0;
    }

    void unite(const Bitmap& b) {
        for (std::size_t i = 0; i < bits_.size(); ++i)
            if (b.bits_[i]) bits_[i] = 1;
    }

    // Run-length counts, row-major, alternating zero-run then one-run,
    // always starting with the zero count. Sums to width * height.
    std::vector<std::int64_t> to_rle() const {
        std::vector<std::int64_t> counts;
        std::int64_t run = 0;
        std::uint8_t cur = 0;
        for (auto b : bits_) {
            if (b != cur) {
                counts.push_back(run);
                run = 0;
                cur = b;
            }
            ++run;
        }
        counts.push_back(run);
        return counts;
    }

    static Bitmap from_rle(int height, int width, const std::vector<std::int64_t>& counts) {
        Bitmap m(height, width);
        std::int64_t total = 0;
        for (auto c : counts) {
            if (c < 0) throw mask_error("RLE: negative run length");
            total += c;
        }
        if (total != std::int64_t(height) * width)
            throw mask_error("RLE: runs sum to " + std::to_string(total) + ", expected " +
                             std::to_string(std::int64_t(height) * width));
        std::size_t pos = 0;
        std::uint8_t value = 0;
        for (auto c : counts) {
            for (std::int64_t i = 0; i < c; ++i) m.bits_[pos++] = value;
            value = !value;
        }
        return m;
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> bits_;
};

inline std::size_t intersection_count(const Bitmap& a, const Bitmap& b) {
    std::size_t n = 0;
    const auto& ra = a.raw();
    const auto& rb = b.raw();
    for (std::size_t i = 0; i < ra.size(); ++i) n += ra[i] & rb[i];
    return n;
}

namespace detail {

// 1D squared distance transform (Felzenszwalb & Huttenlocher lower envelope).
inline void edt_1d(const double* f, double* d, int n, int* v, double* z) {
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * (q - v[k]));
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = double(q) - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

} // namespace detail

// Exact squared Euclidean distance to the nearest set pixel. Pixels inside
// the mask get 0. Empty regions saturate at a large finite sentinel (the
// parabola intersections in the envelope need finite arithmetic).
inline std::vector<double> squared_distance_transform(const Bitmap& mask) {
    const int h = mask.height(), w = mask.width();
    const double far = 1e18;
    std::vector<double> grid(std::size_t(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            grid[std::size_t(y) * w + x] = mask.at(y, x) ? 0.0 : far;

    const int n = h > w ? h : w;
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);

    // Columns, then rows.
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[y] = grid[std::size_t(y) * w + x];
        detail::edt_1d(f.data(), d.data(), h, v.data(), z.data());
        for (int y = 0; y < h; ++y) grid[std::size_t(y) * w + x] = d[y];
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[x] = grid[std::size_t(y) * w + x];
        detail::edt_1d(f.data(), d.data(), w, v.data(), z.data());
        for (int x = 0; x < w; ++x) grid[std::size_t(y) * w + x] = d[x];
    }
    return grid;
}

// Morphological dilation by a Euclidean disk of the given radius.
inline Bitmap dilate(const Bitmap& mask, double radius) {
    if (radius <= 0.0 || mask.empty()) return mask;
    const auto dist2 = squared_distance_transform(mask);
    const double r2 = radius * radius;
    Bitmap out(mask.height(), mask.width());
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            if (dist2[std::size_t(y) * mask.width() + x] <= r2) out.set(y, x);
    return out;
}

} // namespace vcf
