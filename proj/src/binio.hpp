#pragma once

// Little-endian binary buffers for the model files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sirenlab/errors.hpp"

namespace sirenlab::binio {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

class Writer {
public:
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void i32(std::int32_t v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void vec(const Eigen::VectorXd& v) {
        u64(static_cast<std::uint64_t>(v.size()));
        raw(v.data(), sizeof(double) * v.size());
    }
    void mat(const Eigen::MatrixXd& m) {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        raw(m.data(), sizeof(double) * m.size());
    }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + path.string() + "'");
        out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
        if (!out) throw IoError("write failed for '" + path.string() + "'");
    }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : name_(path.string()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open '" + name_ + "'");
        buf_.assign(std::istreambuf_iterator<char>(in), {});
    }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    std::int32_t i32() { return get<std::int32_t>(); }
    double f64() { return get<double>(); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    Eigen::VectorXd vec() {
        const std::uint64_t n = u64();
        need(n * sizeof(double));
        Eigen::VectorXd v(static_cast<Eigen::Index>(n));
        std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return v;
    }
    Eigen::MatrixXd mat() {
        const std::uint64_t r = u64(), c = u64();
        need(r * c * sizeof(double));
        Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        std::memcpy(m.data(), buf_.data() + pos_, r * c * sizeof(double));
        pos_ += r * c * sizeof(double);
        return m;
    }
    void expect(const char* magic, std::size_t n) {
        need(n);
        if (std::memcmp(buf_.data() + pos_, magic, n) != 0) throw IoError("'" + name_ + "': bad magic");
        pos_ += n;
    }
    bool at_end() const { return pos_ == buf_.size(); }
    const std::string& name() const { return name_; }

private:
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(std::uint64_t n) const {
        if (n > buf_.size() - pos_) throw IoError("'" + name_ + "': truncated file");
    }

    std::string name_;
    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

inline constexpr std::uint32_t kModelVersion = 1;

inline void model_header(Writer& w, std::uint32_t kind) {
    w.raw("SLPM", 4);
    w.u32(kModelVersion);
    w.u32(kind);
}

inline void check_model_header(Reader& r, std::uint32_t kind) {
    r.expect("SLPM", 4);
    if (const auto v = r.u32(); v != kModelVersion)
        throw IoError("'" + r.name() + "': unsupported model version " + std::to_string(v));
    if (const auto k = r.u32(); k != kind)
        throw IoError("'" + r.name() + "': model kind " + std::to_string(k) + ", expected " + std::to_string(kind));
}

}  // namespace sirenlab::binio
