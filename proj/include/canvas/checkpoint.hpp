#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "canvas/errors.hpp"
#include "canvas/model.hpp"
#include "canvas/optim.hpp"

namespace canvas {

static_assert(std::endian::native == std::endian::little,
              "CVCK blobs are little-endian and written raw");

struct CvckBlob {
    std::string name;
    int rows = 0;
    int cols = 1;
    std::vector<float> data;
};

/// On-disk container: magic "CVCK", version, architecture hash, module-defined
/// extra bytes, named float32 blobs, then optional optimizer and EMA sections.
struct CvckFile {
    std::uint32_t version = 1;
    std::uint64_t arch_hash = 0;
    std::vector<std::uint8_t> extra;
    std::vector<CvckBlob> params;

    bool has_optimizer = false;
    std::uint64_t opt_step = 0;
    double opt_lr = 0.0, opt_beta1 = 0.0, opt_beta2 = 0.0, opt_eps = 0.0, opt_weight_decay = 0.0;
    std::optional<double> opt_clip_norm;
    std::vector<CvckBlob> opt_m, opt_v;

    bool has_ema = false;
    double ema_decay = 0.0;
    std::vector<CvckBlob> ema;
};

namespace detail {

struct ByteWriter {
    std::vector<std::uint8_t> buf;

    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u16(std::uint16_t v) { raw(&v, 2); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void i32(std::int32_t v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void floats(const std::vector<float>& v) { raw(v.data(), v.size() * sizeof(float)); }
    void str(const std::string& s) {
        u16(static_cast<std::uint16_t>(s.size()));
        raw(s.data(), s.size());
    }
};

struct ByteReader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos = 0;

    void raw(void* out, std::size_t n) {
        if (pos + n > size)
            throw ParseError("CVCK: truncated file", static_cast<long>(pos));
        std::memcpy(out, data + pos, n);
        pos += n;
    }
    std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
    std::uint16_t u16() { std::uint16_t v; raw(&v, 2); return v; }
    std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
    std::int32_t i32() { std::int32_t v; raw(&v, 4); return v; }
    double f64() { double v; raw(&v, 8); return v; }
    std::vector<float> floats(std::size_t n) {
        std::vector<float> v(n);
        raw(v.data(), n * sizeof(float));
        return v;
    }
    std::string str() {
        const std::uint16_t n = u16();
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
};

inline void write_blob(ByteWriter& w, const CvckBlob& b) {
    w.str(b.name);
    w.i32(b.rows);
    w.i32(b.cols);
    if (b.data.size() != static_cast<std::size_t>(b.rows) * static_cast<std::size_t>(b.cols))
        throw std::invalid_argument("CVCK: blob size mismatch for " + b.name);
    w.floats(b.data);
}

inline CvckBlob read_blob(ByteReader& r) {
    CvckBlob b;
    b.name = r.str();
    b.rows = r.i32();
    b.cols = r.i32();
    if (b.rows < 0 || b.cols < 0 ||
        static_cast<std::uint64_t>(b.rows) * static_cast<std::uint64_t>(b.cols) > (1u << 28))
        throw ParseError("CVCK: implausible blob shape for " + b.name,
                         static_cast<long>(r.pos));
    b.data = r.floats(static_cast<std::size_t>(b.rows) * b.cols);
    return b;
}

}  // namespace detail

inline void write_cvck(const std::string& path, const CvckFile& f) {
    detail::ByteWriter w;
    w.raw("CVCK", 4);
    w.u32(f.version);
    w.u64(f.arch_hash);
    w.u32(static_cast<std::uint32_t>(f.extra.size()));
    w.raw(f.extra.data(), f.extra.size());
    w.u32(static_cast<std::uint32_t>(f.params.size()));
    for (const auto& b : f.params) detail::write_blob(w, b);
    w.u8(f.has_optimizer ? 1 : 0);
    if (f.has_optimizer) {
        w.u64(f.opt_step);
        w.f64(f.opt_lr);
        w.f64(f.opt_beta1);
        w.f64(f.opt_beta2);
        w.f64(f.opt_eps);
        w.f64(f.opt_weight_decay);
        w.u8(f.opt_clip_norm ? 1 : 0);
        w.f64(f.opt_clip_norm.value_or(0.0));
        if (f.opt_m.size() != f.params.size() || f.opt_v.size() != f.params.size())
            throw std::invalid_argument("CVCK: optimizer blob count mismatch");
        for (const auto& b : f.opt_m) detail::write_blob(w, b);
        for (const auto& b : f.opt_v) detail::write_blob(w, b);
    }
    w.u8(f.has_ema ? 1 : 0);
    if (f.has_ema) {
        w.f64(f.ema_decay);
        if (f.ema.size() != f.params.size())
            throw std::invalid_argument("CVCK: EMA blob count mismatch");
        for (const auto& b : f.ema) detail::write_blob(w, b);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(w.buf.data()),
              static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline CvckFile read_cvck(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    detail::ByteReader r{bytes.data(), bytes.size()};
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, "CVCK", 4) != 0) throw ParseError("CVCK: bad magic", 0);
    CvckFile f;
    f.version = r.u32();
    if (f.version != 1)
        throw ParseError("CVCK: unsupported version " + std::to_string(f.version), 4);
    f.arch_hash = r.u64();
    const std::uint32_t extra_len = r.u32();
    f.extra.resize(extra_len);
    r.raw(f.extra.data(), extra_len);
    const std::uint32_t nblocks = r.u32();
    if (nblocks > 4096) throw ParseError("CVCK: implausible block count", static_cast<long>(r.pos));
    f.params.reserve(nblocks);
    for (std::uint32_t i = 0; i < nblocks; ++i) f.params.push_back(detail::read_blob(r));
    f.has_optimizer = r.u8() != 0;
    if (f.has_optimizer) {
        f.opt_step = r.u64();
        f.opt_lr = r.f64();
        f.opt_beta1 = r.f64();
        f.opt_beta2 = r.f64();
        f.opt_eps = r.f64();
        f.opt_weight_decay = r.f64();
        const bool has_clip = r.u8() != 0;
        const double clip = r.f64();
        if (has_clip) f.opt_clip_norm = clip;
        for (std::uint32_t i = 0; i < nblocks; ++i) f.opt_m.push_back(detail::read_blob(r));
        for (std::uint32_t i = 0; i < nblocks; ++i) f.opt_v.push_back(detail::read_blob(r));
    }
    f.has_ema = r.u8() != 0;
    if (f.has_ema) {
        f.ema_decay = r.f64();
        for (std::uint32_t i = 0; i < nblocks; ++i) f.ema.push_back(detail::read_blob(r));
    }
    if (r.pos != r.size)
        throw ParseError("CVCK: trailing bytes", static_cast<long>(r.pos));
    return f;
}

struct ModelCheckpoint {
    ModelParams params;
    std::optional<OptimizerState> optimizer;
    std::optional<EmaState> ema;
    int stage = 0;
    int step = 0;
};

namespace detail {

inline std::vector<std::uint8_t> model_extra(const ModelConfig& cfg, int stage, int step) {
    ByteWriter w;
    for (int v : {cfg.channels, cfg.height, cfg.width, cfg.d_emb, cfg.d_time, cfg.d_hidden,
                  cfg.vocab, cfg.patch})
        w.i32(v);
    w.f64(cfg.gamma);
    w.i32(stage);
    w.i32(step);
    return w.buf;
}

}  // namespace detail

inline void save_model_checkpoint(const std::string& path, const ModelParams& p,
                                  const OptimizerState* opt, const EmaState* ema, int stage = 0,
                                  int step = 0) {
    CvckFile f;
    f.arch_hash = p.cfg.arch_hash();
    f.extra = detail::model_extra(p.cfg, stage, step);
    for (int id = 0; id < kNumBlocks; ++id) {
        const auto& b = p.blocks[std::size_t(id)];
        f.params.push_back({block_name(id), b.rows, b.cols, b.v});
    }
    if (opt) {
        f.has_optimizer = true;
        f.opt_step = opt->step;
        f.opt_lr = opt->lr;
        f.opt_beta1 = opt->beta1;
        f.opt_beta2 = opt->beta2;
        f.opt_eps = opt->eps;
        f.opt_weight_decay = opt->weight_decay;
        f.opt_clip_norm = opt->clip_norm;
        for (int id = 0; id < kNumBlocks; ++id) {
            const auto& b = p.blocks[std::size_t(id)];
            f.opt_m.push_back({block_name(id), b.rows, b.cols, opt->m[std::size_t(id)]});
            f.opt_v.push_back({block_name(id), b.rows, b.cols, opt->v[std::size_t(id)]});
        }
    }
    if (ema) {
        f.has_ema = true;
        f.ema_decay = ema->decay;
        for (int id = 0; id < kNumBlocks; ++id) {
            const auto& b = p.blocks[std::size_t(id)];
            f.ema.push_back({block_name(id), b.rows, b.cols, ema->shadow[std::size_t(id)]});
        }
    }
    write_cvck(path, f);
}

inline ModelCheckpoint load_model_checkpoint(const std::string& path) {
    const CvckFile f = read_cvck(path);
    detail::ByteReader r{f.extra.data(), f.extra.size()};
    ModelConfig cfg;
    cfg.channels = r.i32();
    cfg.height = r.i32();
    cfg.width = r.i32();
    cfg.d_emb = r.i32();
    cfg.d_time = r.i32();
    cfg.d_hidden = r.i32();
    cfg.vocab = r.i32();
    cfg.patch = r.i32();
    cfg.gamma = r.f64();
    ModelCheckpoint ck;
    ck.stage = r.i32();
    ck.step = r.i32();
    cfg.require_valid();
    if (cfg.arch_hash() != f.arch_hash)
        throw ParseError("CVCK: architecture hash mismatch", 8);
    if (f.params.size() != static_cast<std::size_t>(kNumBlocks))
        throw ParseError("CVCK: wrong model block count", 0);

    ck.params.cfg = cfg;
    ck.params.blocks.resize(kNumBlocks);
    for (int id = 0; id < kNumBlocks; ++id) {
        const CvckBlob& b = f.params[std::size_t(id)];
        if (b.name != block_name(id))
            throw ParseError("CVCK: unexpected block " + b.name, 0);
        int rows = 0, cols = 0;
        detail::block_shape(cfg, id, rows, cols);
        if (b.rows != rows || b.cols != cols)
            throw ParseError("CVCK: block shape mismatch for " + b.name, 0);
        ck.params.blocks[std::size_t(id)] = {b.rows, b.cols, b.data};
    }
    if (f.has_optimizer) {
        OptimizerState s;
        s.step = f.opt_step;
        s.lr = f.opt_lr;
        s.beta1 = f.opt_beta1;
        s.beta2 = f.opt_beta2;
        s.eps = f.opt_eps;
        s.weight_decay = f.opt_weight_decay;
        s.clip_norm = f.opt_clip_norm;
        for (int id = 0; id < kNumBlocks; ++id) {
            s.m.push_back(f.opt_m[std::size_t(id)].data);
            s.v.push_back(f.opt_v[std::size_t(id)].data);
        }
        ck.optimizer = std::move(s);
    }
    if (f.has_ema) {
        EmaState e;
        e.decay = f.ema_decay;
        for (int id = 0; id < kNumBlocks; ++id) e.shadow.push_back(f.ema[std::size_t(id)].data);
        ck.ema = std::move(e);
    }
    return ck;
}

}  // namespace canvas
