// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "invnorm/model.hpp"

namespace invnorm {

// CRC-32 (IEEE 802.3 polynomial, reflected).
std::uint32_t crc32(const unsigned char* data, std::size_t n);

// Little-endian byte buffer writer used by the checkpoint and dataset
// formats.
class ByteWriter {
public:
    void put_u8(std::uint8_t v) { buf_.push_back(v); }
    void put_u32(std::uint32_t v);
    void put_i32(std::int32_t v) { put_u32(static_cast<std::uint32_t>(v)); }
    void put_u64(std::uint64_t v);
    void put_f32(float v);
    void put_floats(const float* p, std::size_t n);
    void put_bytes(const unsigned char* p, std::size_t n);
    void put_string(const std::string& s);  // u32 length + bytes

    // Appends the CRC-32 of everything written so far.
    void finish_with_crc();

    const std::vector<unsigned char>& bytes() const { return buf_; }

private:
    std::vector<unsigned char> buf_;
};

// Reader with bounds checking; all over-reads raise FormatError.
class ByteReader {
public:
    explicit ByteReader(std::vector<unsigned char> data) : buf_(std::move(data)) {}

    std::uint8_t get_u8();
    std::uint32_t get_u32();
    std::int32_t get_i32() { return static_cast<std::int32_t>(get_u32()); }
    std::uint64_t get_u64();
    float get_f32();
    void get_floats(float* p, std::size_t n);
    std::string get_string();

    // Verifies the trailing CRC-32 against the preceding payload. Call
    // before reading.
    void verify_crc(const std::string& what);

    std::size_t remaining() const { return payload_end_ - pos_; }
    const std::vector<unsigned char>& bytes() const { return buf_; }

private:
    void need(std::size_t n);

    std::vector<unsigned char> buf_;
    std::size_t pos_ = 0;
    std::size_t payload_end_ = 0;
};

std::vector<unsigned char> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes);

// Model checkpoint, format "INVN" version 1: header (channel counts, layer
// counts, eps), every parameter in fixed declaration order as raw f32
// little-endian, trailing CRC-32. save -> load -> forward is bit-identical.
void save_model(const InvNormModel& m, const std::string& path);
InvNormModel load_model(const std::string& path);

std::vector<unsigned char> model_to_bytes(const InvNormModel& m);
InvNormModel model_from_bytes(std::vector<unsigned char> bytes);

}  // namespace invnorm
