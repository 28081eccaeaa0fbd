// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#include "invnorm/squeeze.hpp"

#include "invnorm/errors.hpp"

namespace invnorm {

SqueezeRecord SqueezeStack::pop() {
    if (records.empty()) {
        throw StateError("squeeze record stack is empty");
    }
    SqueezeRecord r = records.back();
    records.pop_back();
    return r;
}

std::pair<Tensor, SqueezeRecord> squeeze_forward(const Tensor& x) {
    const Shape& sh = x.shape();
    SqueezeRecord rec{sh.h, sh.w, sh.h % 2, sh.w % 2};
    const int oh = (sh.h + 1) / 2;
    const int ow = (sh.w + 1) / 2;
    Shape osh{sh.b, 4 * sh.c, oh, ow};
    std::vector<float> out(osh.numel(), 0.0f);
    // Sub-lattice k covers source position (2i + k/2, 2j + k%2).
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int ci = 0; ci < sh.c; ++ci) {
            for (int k = 0; k < 4; ++k) {
                const int roff = k / 2, coff = k % 2;
                float* dst = out.data() +
                             ((static_cast<std::size_t>(bi) * osh.c + 4 * ci + k) * oh) * ow;
                for (int i = 0; i < oh; ++i) {
                    const int si = 2 * i + roff;
                    if (si >= sh.h) continue;  // padded row stays zero
                    const float* src =
                        x.data() + ((static_cast<std::size_t>(bi) * sh.c + ci) * sh.h + si) * sh.w;
                    float* drow = dst + static_cast<std::size_t>(i) * ow;
                    for (int j = 0; j < ow; ++j) {
                        const int sj = 2 * j + coff;
                        if (sj >= sh.w) continue;  // padded column stays zero
                        drow[j] = src[sj];
                    }
                }
            }
        }
    }
    return {Tensor::from_data_unchecked(osh, std::move(out)), rec};
}

Tensor squeeze_inverse(const Tensor& y, const SqueezeRecord& rec) {
    const Shape& sh = y.shape();
    if (sh.c % 4 != 0) {
        throw ShapeError("squeeze_inverse: channel count " + std::to_string(sh.c) +
                         " not divisible by 4");
    }
    if (rec.pad_h != rec.orig_h % 2 || rec.pad_w != rec.orig_w % 2 || rec.orig_h < 1 ||
        rec.orig_w < 1) {
        throw ShapeError("squeeze_inverse: inconsistent squeeze record");
    }
    if ((rec.orig_h + 1) / 2 != sh.h || (rec.orig_w + 1) / 2 != sh.w) {
        throw ShapeError("squeeze_inverse: record does not match tensor spatial dims " +
                         sh.str());
    }
    Shape osh{sh.b, sh.c / 4, rec.orig_h, rec.orig_w};
    std::vector<float> out(osh.numel());
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int ci = 0; ci < osh.c; ++ci) {
            for (int k = 0; k < 4; ++k) {
                const int roff = k / 2, coff = k % 2;
                const float* src =
                    y.data() + ((static_cast<std::size_t>(bi) * sh.c + 4 * ci + k) * sh.h) * sh.w;
                for (int i = 0; i < sh.h; ++i) {
                    const int di = 2 * i + roff;
                    if (di >= osh.h) continue;
                    float* dst = out.data() +
                                 ((static_cast<std::size_t>(bi) * osh.c + ci) * osh.h + di) * osh.w;
                    const float* srow = src + static_cast<std::size_t>(i) * sh.w;
                    for (int j = 0; j < sh.w; ++j) {
                        const int dj = 2 * j + coff;
                        if (dj >= osh.w) continue;
                        dst[dj] = srow[j];
                    }
                }
            }
        }
    }
    return Tensor::from_data_unchecked(osh, std::move(out));
}

}  // namespace invnorm
