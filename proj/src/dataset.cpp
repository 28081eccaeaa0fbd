// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#include "invnorm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "invnorm/serialize.hpp"

namespace invnorm {

namespace {

constexpr std::uint32_t kDatasetMagic = 0x44564e49u;  // "INVD"
constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::uint64_t kNoiseTag = 0x6e6f6973ULL;  // distinct stream for sensor noise

float smoothstep(float e0, float e1, float x) {
    float t = std::clamp((x - e0) / (e1 - e0), 0.0f, 1.0f);
    return t * t * (3.0f - 2.0f * t);
}

// Signed coverage for each class shape; 1 inside, 0 outside, soft 1px edge.
float shape_mask(int label, float px, float py, float cx, float cy, float r, float period) {
    const float dx = px - cx;
    const float dy = py - cy;
    const float d = std::sqrt(dx * dx + dy * dy);
    switch (label % 5) {
        case 0:  // filled disk
            return smoothstep(r, r - 1.2f, d);
        case 1: {  // ring
            const float inner = 0.55f * r;
            return smoothstep(r, r - 1.2f, d) * smoothstep(inner, inner + 1.2f, d);
        }
        case 2: {  // plus / cross
            const float t = 0.32f * r;
            const float armh = smoothstep(t, t - 1.2f, std::fabs(dy)) *
                               smoothstep(r, r - 1.2f, std::fabs(dx));
            const float armv = smoothstep(t, t - 1.2f, std::fabs(dx)) *
                               smoothstep(r, r - 1.2f, std::fabs(dy));
            return std::max(armh, armv);
        }
        case 3: {  // diagonal stripes clipped to a disk
            float phase = std::fmod(dx + dy + 8.0f * period, period);
            float stripe = phase < 0.5f * period ? 1.0f : 0.0f;
            return stripe * smoothstep(r, r - 1.2f, d);
        }
        default: {  // upward triangle
            const float apex = cy - 0.80f * r;
            const float base = cy + 0.62f * r;
            if (py < apex || py > base) return 0.0f;
            const float halfw = 0.90f * r * (py - apex) / (base - apex);
            return smoothstep(0.0f, 1.4f, halfw - std::fabs(dx)) *
                   smoothstep(base, base - 1.4f, py);
        }
    }
}

}  // namespace

void validate_domain_spec(const DomainSpec& spec) {
    for (float g : spec.color_gain) {
        if (!(g > 0.0f)) throw ConfigError("domain '" + spec.name + "': color_gain must be > 0");
    }
    if (spec.gamma < 0.5f || spec.gamma > 2.0f) {
        throw ConfigError("domain '" + spec.name + "': gamma must lie in [0.5, 2]");
    }
    if (spec.noise_std < 0.0f) {
        throw ConfigError("domain '" + spec.name + "': noise_std must be >= 0");
    }
    if (spec.name.empty()) throw ConfigError("domain spec needs a name");
}

std::vector<DomainSpec> default_domains() {
    return {
        DomainSpec{"neutral", {1.00f, 1.00f, 1.00f}, {0.00f, 0.00f, 0.00f}, 1.00f, 0.01f, 101},
        DomainSpec{"warm", {1.45f, 0.95f, 0.55f}, {0.08f, 0.02f, -0.06f}, 0.85f, 0.02f, 102},
        DomainSpec{"cool", {0.55f, 0.85f, 1.50f}, {-0.05f, 0.00f, 0.10f}, 1.25f, 0.02f, 103},
        DomainSpec{"dim", {0.65f, 1.35f, 0.70f}, {0.04f, -0.08f, 0.05f}, 1.55f, 0.03f, 104},
    };
}

int DomainDataset::domain_id(const std::string& name) const {
    for (std::size_t i = 0; i < domain_names.size(); ++i) {
        if (domain_names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

std::vector<int> DomainDataset::indices_of_domain(int domain) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i) {
        if (domain_ids[static_cast<std::size_t>(i)] == domain) out.push_back(i);
    }
    return out;
}

std::vector<int> DomainDataset::indices_excluding_domain(int domain) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i) {
        if (domain_ids[static_cast<std::size_t>(i)] != domain) out.push_back(i);
    }
    return out;
}

std::pair<Tensor, std::vector<int>> DomainDataset::gather(const std::vector<int>& indices,
                                                          std::size_t begin,
                                                          std::size_t count) const {
    if (begin + count > indices.size()) {
        throw ConfigError("dataset gather: range out of bounds");
    }
    const Shape& sh = images.shape();
    const std::size_t stride = static_cast<std::size_t>(sh.c) * sh.h * sh.w;
    Shape osh{static_cast<int>(count), sh.c, sh.h, sh.w};
    std::vector<float> out(osh.numel());
    std::vector<int> lab(count);
    for (std::size_t i = 0; i < count; ++i) {
        const int src = indices[begin + i];
        std::copy(images.data() + static_cast<std::size_t>(src) * stride,
                  images.data() + static_cast<std::size_t>(src + 1) * stride,
                  out.data() + i * stride);
        lab[i] = labels[static_cast<std::size_t>(src)];
    }
    return {Tensor::from_data_unchecked(osh, std::move(out)), std::move(lab)};
}

Tensor render_clean(std::uint64_t sample_seed, int label, int hw) {
    Rng rng(sample_seed);
    // low-frequency background texture: 5x5 value-noise grid, bilinear
    const int gn = 5;
    float grid[gn][gn];
    for (auto& row : grid) {
        for (float& v : row) v = static_cast<float>(rng.uniform(0.18, 0.48));
    }
    float tint[3], fg[3];
    for (float& t : tint) t = static_cast<float>(rng.uniform(0.78, 1.05));
    for (float& f : fg) f = static_cast<float>(rng.uniform(0.60, 0.95));
    const float cx = 0.5f * hw + static_cast<float>(rng.uniform(-hw / 8.0, hw / 8.0));
    const float cy = 0.5f * hw + static_cast<float>(rng.uniform(-hw / 8.0, hw / 8.0));
    const float r = static_cast<float>(rng.uniform(0.20, 0.30)) * hw;
    const float period = std::max(3.0f, static_cast<float>(rng.uniform(0.28, 0.42)) * r);

    std::vector<float> img(static_cast<std::size_t>(3) * hw * hw);
    const float cell = static_cast<float>(hw) / (gn - 1);
    for (int y = 0; y < hw; ++y) {
        for (int x = 0; x < hw; ++x) {
            const float gx = x / cell;
            const float gy = y / cell;
            const int ix = std::min(gn - 2, static_cast<int>(gx));
            const int iy = std::min(gn - 2, static_cast<int>(gy));
            const float fx = gx - ix;
            const float fy = gy - iy;
            const float bgv = grid[iy][ix] * (1 - fx) * (1 - fy) +
                              grid[iy][ix + 1] * fx * (1 - fy) +
                              grid[iy + 1][ix] * (1 - fx) * fy + grid[iy + 1][ix + 1] * fx * fy;
            const float m = shape_mask(label, static_cast<float>(x) + 0.5f,
                                       static_cast<float>(y) + 0.5f, cx, cy, r, period);
            for (int c = 0; c < 3; ++c) {
                const float bg = std::clamp(bgv * tint[c], 0.0f, 1.0f);
                img[(static_cast<std::size_t>(c) * hw + y) * hw + x] = bg + m * (fg[c] - bg);
            }
        }
    }
    return Tensor::from_data_unchecked({1, 3, hw, hw}, std::move(img));
}

DomainDataset generate_dataset(std::uint64_t base_seed, const std::vector<DomainSpec>& domains,
                               int n_per_domain, int class_count, int hw) {
    if (class_count < 2) throw ConfigError("generate_dataset: class_count must be >= 2");
    if (n_per_domain < class_count) {
        throw ConfigError("generate_dataset: n_per_domain must be >= class_count");
    }
    if (hw < 16) throw ConfigError("generate_dataset: image size below 16 cannot hold the shapes");
    if (domains.empty()) throw ConfigError("generate_dataset: need at least one domain");
    for (const DomainSpec& spec : domains) validate_domain_spec(spec);

    const int total = n_per_domain * static_cast<int>(domains.size());
    const std::size_t stride = static_cast<std::size_t>(3) * hw * hw;
    std::vector<float> all(static_cast<std::size_t>(total) * stride);
    DomainDataset ds;
    ds.class_count = class_count;
    ds.labels.resize(static_cast<std::size_t>(total));
    ds.domain_ids.resize(static_cast<std::size_t>(total));
    for (const DomainSpec& spec : domains) ds.domain_names.push_back(spec.name);

    int row = 0;
    for (std::size_t d = 0; d < domains.size(); ++d) {
        const DomainSpec& spec = domains[d];
        for (int i = 0; i < n_per_domain; ++i, ++row) {
            const int label = i % class_count;
            const std::uint64_t sample_seed = Rng::mix(Rng::mix(base_seed, spec.seed),
                                                       static_cast<std::uint64_t>(i));
            Tensor clean = render_clean(sample_seed, label, hw);
            Rng noise(Rng::mix(sample_seed, kNoiseTag));
            float* dst = all.data() + static_cast<std::size_t>(row) * stride;
            for (int c = 0; c < 3; ++c) {
                const float gain = spec.color_gain[static_cast<std::size_t>(c)];
                const float bias = spec.color_bias[static_cast<std::size_t>(c)];
                const float* src = clean.data() + static_cast<std::size_t>(c) * hw * hw;
                for (int p = 0; p < hw * hw; ++p) {
                    float v = src[p];
                    if (spec.gamma != 1.0f) {
                        v = std::pow(std::max(v, 0.0f), spec.gamma);
                    }
                    v = gain * v + bias;
                    if (spec.noise_std > 0.0f) {
                        v += spec.noise_std * static_cast<float>(noise.normal());
                    }
                    dst[static_cast<std::size_t>(c) * hw * hw + p] = std::clamp(v, 0.0f, 1.0f);
                }
            }
            ds.labels[static_cast<std::size_t>(row)] = label;
            ds.domain_ids[static_cast<std::size_t>(row)] = static_cast<int>(d);
        }
    }
    ds.images = Tensor::from_data_unchecked({total, 3, hw, hw}, std::move(all));
    return ds;
}

void save_dataset(const DomainDataset& ds, const std::string& path) {
    ByteWriter w;
    w.put_u32(kDatasetMagic);
    w.put_u32(kDatasetVersion);
    const Shape& sh = ds.images.shape();
    w.put_u32(static_cast<std::uint32_t>(sh.b));
    w.put_u32(static_cast<std::uint32_t>(sh.c));
    w.put_u32(static_cast<std::uint32_t>(sh.h));
    w.put_u32(static_cast<std::uint32_t>(sh.w));
    w.put_u32(static_cast<std::uint32_t>(ds.class_count));
    w.put_u32(static_cast<std::uint32_t>(ds.domain_names.size()));
    for (const std::string& name : ds.domain_names) w.put_string(name);
    for (int v : ds.labels) w.put_i32(v);
    for (int v : ds.domain_ids) w.put_i32(v);
    w.put_floats(ds.images.data(), ds.images.numel());
    w.finish_with_crc();
    write_file_bytes(path, w.bytes());
}

DomainDataset load_dataset(const std::string& path) {
    ByteReader r(read_file_bytes(path));
    r.verify_crc("dataset");
    if (r.get_u32() != kDatasetMagic) {
        throw FormatError("not an InvNorm dataset file (bad magic bytes)");
    }
    const std::uint32_t version = r.get_u32();
    if (version != kDatasetVersion) {
        throw FormatError("unsupported dataset format version " + std::to_string(version));
    }
    Shape sh;
    sh.b = static_cast<int>(r.get_u32());
    sh.c = static_cast<int>(r.get_u32());
    sh.h = static_cast<int>(r.get_u32());
    sh.w = static_cast<int>(r.get_u32());
    if (!sh.valid() || sh.c != 3) throw FormatError("dataset header has invalid shape");
    DomainDataset ds;
    ds.class_count = static_cast<int>(r.get_u32());
    const std::uint32_t ndom = r.get_u32();
    if (ds.class_count < 2 || ndom == 0 || ndom > 1024) {
        throw FormatError("dataset header has implausible counts");
    }
    for (std::uint32_t i = 0; i < ndom; ++i) ds.domain_names.push_back(r.get_string());
    ds.labels.resize(static_cast<std::size_t>(sh.b));
    ds.domain_ids.resize(static_cast<std::size_t>(sh.b));
    for (int& v : ds.labels) v = r.get_i32();
    for (int& v : ds.domain_ids) {
        v = r.get_i32();
        if (v < 0 || v >= static_cast<int>(ndom)) {
            throw FormatError("dataset sample references an unknown domain");
        }
    }
    std::vector<float> px(sh.numel());
    r.get_floats(px.data(), px.size());
    ds.images = Tensor::from_data_unchecked(sh, std::move(px));
    return ds;
}

void export_images(const DomainDataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
    std::ofstream manifest(fs::path(dir) / "manifest.csv");
    if (!manifest) throw IoError("cannot write manifest.csv in '" + dir + "'");
    manifest << "path,label,domain\n";
    const Shape& sh = ds.images.shape();
    for (int i = 0; i < ds.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.ppm", i);
        std::ofstream out(fs::path(dir) / name, std::ios::binary);
        if (!out) throw IoError(std::string("cannot write image '") + name + "'");
        out << "P6\n" << sh.w << " " << sh.h << "\n255\n";
        for (int y = 0; y < sh.h; ++y) {
            for (int x = 0; x < sh.w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    float v = std::clamp(ds.images.at(i, c, y, x), 0.0f, 1.0f);
                    out.put(static_cast<char>(std::lround(v * 255.0f)));
                }
            }
        }
        manifest << name << "," << ds.labels[static_cast<std::size_t>(i)] << ","
                 << ds.domain_names[static_cast<std::size_t>(
                        ds.domain_ids[static_cast<std::size_t>(i)])]
                 << "\n";
    }
}

}  // namespace invnorm
