#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <vector>

#include "nescl/augment.hpp"
#include "nescl/binio.hpp"
#include "nescl/common.hpp"
#include "nescl/graph.hpp"
#include "nescl/mat.hpp"

namespace nescl {

// Outputs of one forward pass over one (possibly corrupted) graph view:
// every per-layer table plus the horizontal concatenation used downstream.
struct Propagated {
    std::vector<Mat> layers;  // H^0 .. H^L
    Mat concat;               // width (L+1)*D, or L*D when layer 0 is excluded
    bool include_layer0 = true;
};

namespace detail {

// Layer l (1-based) uses the view's structure min(l, available) - 1: random
// walk carries one structure per layer, the other strategies carry one total.
inline const SparseAdj& layer_structure(const AugmentedGraph& ag, std::uint32_t layer) {
    const std::size_t idx = std::min<std::size_t>(layer, ag.per_layer.size()) - 1;
    return ag.per_layer[idx];
}

}  // namespace detail

inline Propagated propagate(const Mat& base, const AugmentedGraph& ag, std::uint32_t layers,
                            bool include_layer0 = true) {
    if (layers < 1) throw ConfigError("propagate: layers must be >= 1");
    if (ag.per_layer.empty()) throw ConfigError("propagate: view has no structures");
    if (base.rows != ag.per_layer[0].n) throw ShapeError("propagate: base row count != node count");

    Propagated out;
    out.include_layer0 = include_layer0;
    out.layers.reserve(layers + 1);
    out.layers.push_back(base);
    for (std::uint32_t l = 1; l <= layers; ++l) {
        Mat next;
        spmm(detail::layer_structure(ag, l), out.layers.back(), next);
        out.layers.push_back(std::move(next));
    }

    const std::size_t d = base.cols;
    const std::size_t first = include_layer0 ? 0 : 1;
    const std::size_t width = (out.layers.size() - first) * d;
    out.concat = Mat(base.rows, width);
    for (std::size_t i = 0; i < base.rows; ++i) {
        double* dst = out.concat.row(i);
        for (std::size_t l = first; l < out.layers.size(); ++l) {
            std::memcpy(dst, out.layers[l].row(i), d * sizeof(double));
            dst += d;
        }
    }
    return out;
}

// Pulls a gradient on the concatenated output back to the base table. The
// structures are symmetric, so the adjoint of each propagation step is the
// same sparse multiply.
inline Mat propagate_backward(const Mat& concat_grad, const AugmentedGraph& ag,
                              std::uint32_t layers, bool include_layer0, std::size_t dim) {
    const std::size_t n = ag.per_layer[0].n;
    const std::size_t first = include_layer0 ? 0 : 1;
    const std::size_t slices = layers + 1 - first;
    if (concat_grad.rows != n || concat_grad.cols != slices * dim)
        throw ShapeError("propagate_backward: gradient shape mismatch");

    auto slice = [&](std::uint32_t layer) {
        // column block of the layer within the concat, or a zero block for
        // layer 0 when it is excluded from the concat
        Mat g(n, dim);
        if (layer < first) return g;
        const std::size_t off = (layer - first) * dim;
        for (std::size_t i = 0; i < n; ++i)
            std::memcpy(g.row(i), concat_grad.row(i) + off, dim * sizeof(double));
        return g;
    };

    Mat acc = slice(layers);
    Mat tmp;
    for (std::uint32_t l = layers; l >= 1; --l) {
        spmm(detail::layer_structure(ag, l), acc, tmp);
        acc = slice(l - 1);
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += tmp.data[i];
    }
    return acc;
}

inline double score(std::span<const double> h_user, std::span<const double> h_item) {
    return dot(h_user, h_item);
}

// Dense score matrix of every (user row, item row) pair; callers mask train
// items before ranking.
inline Mat score_all(MatView user_rows, MatView item_rows) {
    return matmul_nt(user_rows, item_rows);
}

// Checkpoint: header (magic, version, |N|, D, L, flags) + row-major float64
// base table, little-endian.
inline constexpr char kCheckpointMagic[8] = {'N', 'E', 'S', 'C', 'L', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kFlagDropLayer0 = 1u << 0;
inline constexpr std::uint32_t kFlagNormalizeReps = 1u << 1;

struct Checkpoint {
    std::uint32_t layers = 2;
    bool drop_layer0 = false;
    bool normalize_reps = false;
    Mat base;
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::string out;
    out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_u32(out, kCheckpointVersion);
    put_u64(out, ckpt.base.rows);
    put_u32(out, static_cast<std::uint32_t>(ckpt.base.cols));
    put_u32(out, ckpt.layers);
    std::uint32_t flags = 0;
    if (ckpt.drop_layer0) flags |= kFlagDropLayer0;
    if (ckpt.normalize_reps) flags |= kFlagNormalizeReps;
    put_u32(out, flags);
    out.reserve(out.size() + ckpt.base.data.size() * 8);
    for (double v : ckpt.base.data) put_f64(out, v);
    write_file(path, out);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    ByteReader r(bytes);
    char magic[8];
    r.raw(magic, sizeof(magic));
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw DataError(path.string() + ": not a checkpoint file");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    const std::uint64_t rows = r.u64();
    const std::uint32_t cols = r.u32();
    ckpt.layers = r.u32();
    const std::uint32_t flags = r.u32();
    ckpt.drop_layer0 = (flags & kFlagDropLayer0) != 0;
    ckpt.normalize_reps = (flags & kFlagNormalizeReps) != 0;
    ckpt.base = Mat(rows, cols);
    for (double& v : ckpt.base.data) v = r.f64();
    if (!r.done()) throw DataError(path.string() + ": trailing bytes in checkpoint");
    return ckpt;
}

}  // namespace nescl
