// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "invnorm/rng.hpp"
#include "invnorm/tensor.hpp"

namespace invnorm {

// One synthetic acquisition domain: a deterministic photometric corruption
// (per-channel gain/bias, gamma curve, sensor noise) applied to clean
// renders. Stands in for the style gap between capture devices.
struct DomainSpec {
    std::string name;
    std::array<float, 3> color_gain{1.0f, 1.0f, 1.0f};
    std::array<float, 3> color_bias{0.0f, 0.0f, 0.0f};
    float gamma = 1.0f;      // in [0.5, 2]
    float noise_std = 0.0f;  // >= 0
    std::uint64_t seed = 0;
};

void validate_domain_spec(const DomainSpec& spec);

// The four standard domains used by the leave-one-domain experiments.
std::vector<DomainSpec> default_domains();

// Labeled images partitioned into named domains. Labels cycle through the
// classes per domain, so per-domain class distributions are identical by
// construction.
struct DomainDataset {
    Tensor images;  // (N, 3, H, W), values in [0, 1]
    std::vector<int> labels;
    std::vector<int> domain_ids;
    std::vector<std::string> domain_names;
    int class_count = 0;

    int size() const { return images.empty() ? 0 : images.shape().b; }
    int height() const { return images.shape().h; }
    int width() const { return images.shape().w; }

    // Index of a named domain, or -1.
    int domain_id(const std::string& name) const;
    std::vector<int> indices_of_domain(int domain) const;
    std::vector<int> indices_excluding_domain(int domain) const;

    // Gathers rows into a (n, 3, H, W) batch tensor plus labels.
    std::pair<Tensor, std::vector<int>> gather(const std::vector<int>& indices, std::size_t begin,
                                               std::size_t count) const;
};

// Renders the clean (uncorrupted) image for one sample. Exposed so tests can
// verify that an identity corruption reproduces clean renders exactly.
Tensor render_clean(std::uint64_t sample_seed, int label, int hw);

// Deterministic dataset synthesis: n_per_domain renders per domain (labels
// cycling through class_count), each pushed through its domain's photometric
// corruption. hw must be >= 16 so the class shapes stay resolvable.
DomainDataset generate_dataset(std::uint64_t base_seed, const std::vector<DomainSpec>& domains,
                               int n_per_domain, int class_count, int hw);

// Binary dataset container ("INVD", CRC-32 checked).
void save_dataset(const DomainDataset& ds, const std::string& path);
DomainDataset load_dataset(const std::string& path);

// Writes one binary PPM per sample plus a manifest.csv (path,label,domain).
void export_images(const DomainDataset& ds, const std::string& dir);

}  // namespace invnorm
