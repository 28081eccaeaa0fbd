// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#include "invnorm/serialize.hpp"

#include <cstring>
#include <fstream>

namespace invnorm {

namespace {
constexpr std::uint32_t kModelMagic = 0x4e564e49u;  // "INVN" little-endian
constexpr std::uint32_t kModelVersion = 1;

std::uint32_t crc_table_entry(std::uint32_t i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) {
        c = (c & 1u) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    }
    return c;
}

const std::uint32_t* crc_table() {
    static std::uint32_t table[256];
    static bool ready = [] {
        for (std::uint32_t i = 0; i < 256; ++i) table[i] = crc_table_entry(i);
        return true;
    }();
    (void)ready;
    return table;
}

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t n) {
    const std::uint32_t* table = crc_table();
    std::uint32_t c = 0xffffffffu;
    for (std::size_t i = 0; i < n; ++i) {
        c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
    }
    return c ^ 0xffffffffu;
}

void ByteWriter::put_u32(std::uint32_t v) {
    buf_.push_back(static_cast<unsigned char>(v & 0xffu));
    buf_.push_back(static_cast<unsigned char>((v >> 8) & 0xffu));
    buf_.push_back(static_cast<unsigned char>((v >> 16) & 0xffu));
    buf_.push_back(static_cast<unsigned char>((v >> 24) & 0xffu));
}

void ByteWriter::put_u64(std::uint64_t v) {
    put_u32(static_cast<std::uint32_t>(v & 0xffffffffu));
    put_u32(static_cast<std::uint32_t>(v >> 32));
}

void ByteWriter::put_f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u32(bits);
}

void ByteWriter::put_floats(const float* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) put_f32(p[i]);
}

void ByteWriter::put_bytes(const unsigned char* p, std::size_t n) {
    buf_.insert(buf_.end(), p, p + n);
}

void ByteWriter::put_string(const std::string& s) {
    put_u32(static_cast<std::uint32_t>(s.size()));
    put_bytes(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

void ByteWriter::finish_with_crc() {
    std::uint32_t c = crc32(buf_.data(), buf_.size());
    put_u32(c);
}

void ByteReader::need(std::size_t n) {
    if (pos_ + n > payload_end_) {
        throw FormatError("truncated file: needed " + std::to_string(n) + " bytes at offset " +
                          std::to_string(pos_));
    }
}

std::uint8_t ByteReader::get_u8() {
    need(1);
    return buf_[pos_++];
}

std::uint32_t ByteReader::get_u32() {
    need(4);
    std::uint32_t v = static_cast<std::uint32_t>(buf_[pos_]) |
                      (static_cast<std::uint32_t>(buf_[pos_ + 1]) << 8) |
                      (static_cast<std::uint32_t>(buf_[pos_ + 2]) << 16) |
                      (static_cast<std::uint32_t>(buf_[pos_ + 3]) << 24);
    pos_ += 4;
    return v;
}

std::uint64_t ByteReader::get_u64() {
    std::uint64_t lo = get_u32();
    std::uint64_t hi = get_u32();
    return lo | (hi << 32);
}

float ByteReader::get_f32() {
    std::uint32_t bits = get_u32();
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

void ByteReader::get_floats(float* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[i] = get_f32();
}

std::string ByteReader::get_string() {
    std::uint32_t n = get_u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
}

void ByteReader::verify_crc(const std::string& what) {
    if (buf_.size() < 4) {
        throw FormatError(what + ": file too short for a checksum");
    }
    payload_end_ = buf_.size();
    pos_ = buf_.size() - 4;
    std::uint32_t stored = get_u32();
    std::uint32_t actual = crc32(buf_.data(), buf_.size() - 4);
    if (stored != actual) {
        throw FormatError(what + ": checksum mismatch (file corrupted)");
    }
    pos_ = 0;
    payload_end_ = buf_.size() - 4;
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    in.seekg(0, std::ios::end);
    std::streamoff n = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(n));
    if (n > 0) in.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!in) throw IoError("failed reading '" + path + "'");
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path + "'");
}

// Serializer has friend access to the layer internals.
class ModelSerializer {
public:
    static void write(const InvNormModel& m, ByteWriter& w) {
        w.put_u32(kModelMagic);
        w.put_u32(kModelVersion);
        w.put_u32(static_cast<std::uint32_t>(m.cfg_.input_channels));
        w.put_u32(static_cast<std::uint32_t>(m.cfg_.flows_per_block));
        w.put_u32(static_cast<std::uint32_t>(m.cfg_.coupling_hidden));
        w.put_f32(m.in_.eps_);
        for (const FlowStep& s : m.block1_) write_step(s, w);
        for (const FlowStep& s : m.block2_) write_step(s, w);
        write_param(m.in_.gamma_, w);
        write_param(m.in_.beta_, w);
    }

    static InvNormModel read(ByteReader& r) {
        std::uint32_t magic = r.get_u32();
        if (magic != kModelMagic) {
            throw FormatError("not an InvNorm checkpoint (bad magic bytes)");
        }
        std::uint32_t version = r.get_u32();
        if (version != kModelVersion) {
            throw FormatError("unsupported checkpoint format version " +
                              std::to_string(version) + "; this reader supports version " +
                              std::to_string(kModelVersion));
        }
        ModelConfig cfg;
        cfg.input_channels = static_cast<int>(r.get_u32());
        cfg.flows_per_block = static_cast<int>(r.get_u32());
        cfg.coupling_hidden = static_cast<int>(r.get_u32());
        if (cfg.input_channels < 1 || cfg.input_channels > 4096 || cfg.flows_per_block < 1 ||
            cfg.flows_per_block > 4096 || cfg.coupling_hidden < 1 ||
            cfg.coupling_hidden > 65536) {
            throw FormatError("checkpoint header contains implausible dimensions");
        }
        float eps = r.get_f32();
        if (!(eps > 0.0f)) throw FormatError("checkpoint header has invalid eps");
        InvNormModel m = InvNormModel::identity_init(cfg);
        m.in_.eps_ = eps;
        for (FlowStep& s : m.block1_) read_step(s, r);
        for (FlowStep& s : m.block2_) read_step(s, r);
        read_param(m.in_.gamma_, r);
        read_param(m.in_.beta_, r);
        if (r.remaining() != 0) {
            throw FormatError("checkpoint has " + std::to_string(r.remaining()) +
                              " trailing bytes");
        }
        return m;
    }

private:
    static void write_param(const Param& p, ByteWriter& w) {
        w.put_floats(p.value.data(), p.value.numel());
    }

    static void read_param(Param& p, ByteReader& r) {
        std::vector<float> v(p.value.numel());
        r.get_floats(v.data(), v.size());
        p.value = Tensor::from_data_unchecked(p.value.shape(), std::move(v));
    }

    static void write_step(const FlowStep& s, ByteWriter& w) {
        w.put_u8(s.actnorm_.initialized_ ? 1 : 0);
        write_param(s.actnorm_.s_, w);
        write_param(s.actnorm_.b_, w);
        const InvConv1x1& ic = s.invconv_;
        for (int p : ic.perm_) w.put_i32(p);
        w.put_floats(ic.signs_.data(), ic.signs_.size());
        write_param(ic.lower_, w);
        write_param(ic.upper_, w);
        write_param(ic.logdiag_, w);
        const Coupling& cp = s.coupling_;
        write_param(cp.w1_, w);
        write_param(cp.b1_, w);
        write_param(cp.w2_, w);
        write_param(cp.b2_, w);
    }

    static void read_step(FlowStep& s, ByteReader& r) {
        s.actnorm_.initialized_ = r.get_u8() != 0;
        read_param(s.actnorm_.s_, r);
        read_param(s.actnorm_.b_, r);
        InvConv1x1& ic = s.invconv_;
        const int c = ic.channels_;
        for (int i = 0; i < c; ++i) {
            int p = r.get_i32();
            if (p < 0 || p >= c) throw FormatError("checkpoint has invalid permutation index");
            ic.perm_[static_cast<std::size_t>(i)] = p;
        }
        r.get_floats(ic.signs_.data(), ic.signs_.size());
        for (float sg : ic.signs_) {
            if (sg != 1.0f && sg != -1.0f) {
                throw FormatError("checkpoint has invalid diagonal sign");
            }
        }
        read_param(ic.lower_, r);
        read_param(ic.upper_, r);
        read_param(ic.logdiag_, r);
        Coupling& cp = s.coupling_;
        read_param(cp.w1_, r);
        read_param(cp.b1_, r);
        read_param(cp.w2_, r);
        read_param(cp.b2_, r);
    }
};

std::vector<unsigned char> model_to_bytes(const InvNormModel& m) {
    ByteWriter w;
    ModelSerializer::write(m, w);
    w.finish_with_crc();
    return w.bytes();
}

InvNormModel model_from_bytes(std::vector<unsigned char> bytes) {
    ByteReader r(std::move(bytes));
    r.verify_crc("checkpoint");
    return ModelSerializer::read(r);
}

void save_model(const InvNormModel& m, const std::string& path) {
    write_file_bytes(path, model_to_bytes(m));
}

InvNormModel load_model(const std::string& path) {
    return model_from_bytes(read_file_bytes(path));
}

}  // namespace invnorm
