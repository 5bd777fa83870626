#include "eclrr/task_streams.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "eclrr/errors.hpp"

namespace eclrr {

void Dataset::validate() const {
    if (labels.size() != inputs.rows())
        throw InvalidState("dataset: label count does not match input rows");
    for (int y : labels)
        if (y < 0 || y >= class_count)
            throw InvalidState("dataset: label outside [0, class_count)");
}

namespace {

std::vector<unsigned char> read_file_maybe_gzip(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw FormatError("cannot open file: " + path);
    std::vector<unsigned char> raw;
    unsigned char buf[1 << 16];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) raw.insert(raw.end(), buf, buf + got);
    std::fclose(f);
    if (raw.size() < 2 || !(raw[0] == 0x1f && raw[1] == 0x8b)) return raw;

    z_stream strm{};
    if (inflateInit2(&strm, 15 + 32) != Z_OK)
        throw FormatError("gzip init failed for " + path);
    std::vector<unsigned char> out;
    strm.next_in = raw.data();
    strm.avail_in = static_cast<uInt>(raw.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        strm.next_out = buf;
        strm.avail_out = sizeof buf;
        rc = inflate(&strm, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&strm);
            throw FormatError("gzip decompression failed for " + path);
        }
        out.insert(out.end(), buf, buf + (sizeof buf - strm.avail_out));
    }
    inflateEnd(&strm);
    return out;
}

std::uint32_t read_u32_be(const std::vector<unsigned char>& b, std::size_t off,
                          const std::string& field) {
    if (off + 4 > b.size()) throw FormatError("truncated file while reading " + field);
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

Dataset select_rows(const Dataset& base, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.inputs = Matrix(idx.size(), base.dim());
    out.labels.reserve(idx.size());
    out.class_count = base.class_count;
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const double* src = base.inputs.row_ptr(idx[r]);
        double* dst = out.inputs.row_ptr(r);
        std::copy(src, src + base.dim(), dst);
        out.labels.push_back(base.labels[idx[r]]);
    }
    return out;
}

Dataset permute_columns(const Dataset& base, const std::vector<std::size_t>& perm) {
    Dataset out;
    out.inputs = Matrix(base.size(), base.dim());
    out.labels = base.labels;
    out.class_count = base.class_count;
    for (std::size_t r = 0; r < base.size(); ++r) {
        const double* src = base.inputs.row_ptr(r);
        double* dst = out.inputs.row_ptr(r);
        for (std::size_t c = 0; c < base.dim(); ++c) dst[c] = src[perm[c]];
    }
    return out;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_file_maybe_gzip(images_path);
    const auto lbl = read_file_maybe_gzip(labels_path);

    const std::uint32_t img_magic = read_u32_be(img, 0, "image magic");
    if (img_magic != 0x00000803)
        throw FormatError("bad image magic: got " + std::to_string(img_magic) +
                          ", want 2051");
    const std::uint32_t lbl_magic = read_u32_be(lbl, 0, "label magic");
    if (lbl_magic != 0x00000801)
        throw FormatError("bad label magic: got " + std::to_string(lbl_magic) +
                          ", want 2049");

    const std::uint32_t n_img = read_u32_be(img, 4, "image count");
    const std::uint32_t rows = read_u32_be(img, 8, "image rows");
    const std::uint32_t cols = read_u32_be(img, 12, "image cols");
    const std::uint32_t n_lbl = read_u32_be(lbl, 4, "label count");
    if (n_img != n_lbl)
        throw FormatError("count mismatch: " + std::to_string(n_img) + " images vs " +
                          std::to_string(n_lbl) + " labels");

    const std::size_t d = std::size_t(rows) * cols;
    if (img.size() < 16 + std::size_t(n_img) * d)
        throw FormatError("truncated file while reading image pixels");
    if (lbl.size() < 8 + n_lbl)
        throw FormatError("truncated file while reading label bytes");

    Dataset out;
    out.inputs = Matrix(n_img, d);
    out.labels.reserve(n_lbl);
    for (std::size_t i = 0; i < n_img; ++i) {
        double* dst = out.inputs.row_ptr(i);
        const unsigned char* src = img.data() + 16 + i * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] = src[c] / 255.0;
    }
    int max_label = 0;
    for (std::size_t i = 0; i < n_lbl; ++i) {
        out.labels.push_back(lbl[8 + i]);
        max_label = std::max(max_label, int(lbl[8 + i]));
    }
    out.class_count = max_label + 1;
    out.validate();
    return out;
}

Dataset cap_per_class(const Dataset& base, std::size_t cap, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(std::size_t(base.class_count));
    for (std::size_t i = 0; i < base.size(); ++i)
        by_class[std::size_t(base.labels[i])].push_back(i);

    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        if (idx.size() > cap) {
            RngState rng(seed, c);
            rng.shuffle(idx);
            idx.resize(cap);
        }
        keep.insert(keep.end(), idx.begin(), idx.end());
    }
    std::sort(keep.begin(), keep.end());
    return select_rows(base, keep);
}

TaskStream make_permuted(const Dataset& train, const Dataset& test, int n_tasks,
                         std::uint64_t seed) {
    if (n_tasks < 1) throw std::invalid_argument("make_permuted: n_tasks must be >= 1");
    if (train.dim() != test.dim())
        throw std::invalid_argument("make_permuted: train/test dimension mismatch");

    TaskStream stream;
    stream.protocol = Protocol::kPermuted;
    std::vector<int> identity_map(std::size_t(train.class_count));
    std::iota(identity_map.begin(), identity_map.end(), 0);

    for (int t = 0; t < n_tasks; ++t) {
        std::vector<std::size_t> perm(train.dim());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        if (t > 0) {
            RngState rng(seed, std::uint64_t(t));
            rng.shuffle(perm);
        }
        TaskItem item;
        item.train = permute_columns(train, perm);
        item.test = permute_columns(test, perm);
        item.class_map = identity_map;
        stream.tasks.push_back(std::move(item));
    }
    return stream;
}

TaskStream make_split(const Dataset& train, const Dataset& test,
                      const std::vector<std::pair<int, int>>& class_pairs) {
    std::set<int> seen;
    for (const auto& [a, b] : class_pairs) {
        if (a == b || !seen.insert(a).second || !seen.insert(b).second)
            throw std::invalid_argument("make_split: class pairs must be disjoint");
    }
    std::set<int> present(train.labels.begin(), train.labels.end());
    for (int c : seen)
        if (!present.count(c))
            throw std::invalid_argument("make_split: class " + std::to_string(c) +
                                        " absent from training data");

    TaskStream stream;
    stream.protocol = Protocol::kSplit;
    auto filter = [](const Dataset& src, int a, int b) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < src.size(); ++i)
            if (src.labels[i] == a || src.labels[i] == b) idx.push_back(i);
        Dataset out = select_rows(src, idx);
        for (int& y : out.labels) y = (y == b) ? 1 : 0;
        out.class_count = 2;
        return out;
    };
    for (const auto& [a, b] : class_pairs) {
        TaskItem item;
        item.train = filter(train, a, b);
        item.test = filter(test, a, b);
        item.class_map = {a, b};
        stream.tasks.push_back(std::move(item));
    }
    return stream;
}

TaskStream make_synthetic_blobs(int n_tasks, int classes_per_task, std::size_t dim,
                                double separation, int n_per_class,
                                std::uint64_t seed) {
    if (n_tasks < 1 || classes_per_task < 1 || dim == 0 || n_per_class < 1)
        throw std::invalid_argument("make_synthetic_blobs: all counts must be >= 1");

    TaskStream stream;
    stream.protocol = Protocol::kSynthetic;
    const std::size_t cpt = std::size_t(classes_per_task);
    std::vector<int> identity_map(cpt);
    std::iota(identity_map.begin(), identity_map.end(), 0);

    for (int t = 0; t < n_tasks; ++t) {
        RngState rng(seed, std::uint64_t(t));

        // Rejection-sample well separated centers; widen the box if a draw
        // keeps failing so termination never depends on luck.
        double box = separation * double(classes_per_task);
        std::vector<Vec> centers;
        for (int attempt = 0;; ++attempt) {
            centers.assign(cpt, Vec(dim));
            for (auto& c : centers)
                for (double& v : c) v = box * rng.uniform();
            bool ok = true;
            for (std::size_t i = 0; i < cpt && ok; ++i)
                for (std::size_t j = i + 1; j < cpt && ok; ++j) {
                    double d2 = 0.0;
                    for (std::size_t k = 0; k < dim; ++k) {
                        const double diff = centers[i][k] - centers[j][k];
                        d2 += diff * diff;
                    }
                    if (d2 < separation * separation) ok = false;
                }
            if (ok) break;
            if (attempt > 0 && attempt % 100 == 0) box *= 1.5;
        }

        const int n_train = std::max(1, (n_per_class * 4) / 5);
        const int n_test = n_per_class - n_train;
        Dataset train, test;
        train.inputs = Matrix(cpt * std::size_t(n_train), dim);
        test.inputs = Matrix(cpt * std::size_t(n_test), dim);
        train.class_count = test.class_count = classes_per_task;
        std::size_t tr = 0, te = 0;
        for (std::size_t c = 0; c < cpt; ++c) {
            for (int i = 0; i < n_per_class; ++i) {
                Vec x(dim);
                for (std::size_t k = 0; k < dim; ++k) x[k] = centers[c][k] + rng.gaussian();
                if (i < n_train) {
                    std::copy(x.begin(), x.end(), train.inputs.row_ptr(tr++));
                    train.labels.push_back(int(c));
                } else {
                    std::copy(x.begin(), x.end(), test.inputs.row_ptr(te++));
                    test.labels.push_back(int(c));
                }
            }
        }

        // Per-dimension min-max rescale over both splits, into [0,1].
        for (std::size_t k = 0; k < dim; ++k) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (std::size_t r = 0; r < train.size(); ++r) {
                lo = std::min(lo, train.inputs(r, k));
                hi = std::max(hi, train.inputs(r, k));
            }
            for (std::size_t r = 0; r < test.size(); ++r) {
                lo = std::min(lo, test.inputs(r, k));
                hi = std::max(hi, test.inputs(r, k));
            }
            const double span = hi > lo ? hi - lo : 1.0;
            for (std::size_t r = 0; r < train.size(); ++r)
                train.inputs(r, k) = (train.inputs(r, k) - lo) / span;
            for (std::size_t r = 0; r < test.size(); ++r)
                test.inputs(r, k) = std::min(1.0, std::max(0.0, (test.inputs(r, k) - lo) / span));
        }

        TaskItem item;
        item.train = std::move(train);
        item.test = std::move(test);
        item.class_map = identity_map;
        stream.tasks.push_back(std::move(item));
    }
    return stream;
}

}  // namespace eclrr
