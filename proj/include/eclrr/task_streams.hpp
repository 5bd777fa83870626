#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eclrr/matrix.hpp"
#include "eclrr/rng.hpp"

namespace eclrr {

// One labelled dataset: rows of `inputs` are examples scaled to [0,1].
struct Dataset {
    Matrix inputs;
    std::vector<int> labels;
    int class_count = 0;

    std::size_t size() const { return inputs.rows(); }
    std::size_t dim() const { return inputs.cols(); }
    void validate() const;  // throws InvalidState on broken invariants
};

enum class Protocol { kPermuted, kSplit, kSynthetic };

// One continual-learning task. class_map records the original class ids in
// task-label order (identity for permuted and synthetic streams).
struct TaskItem {
    Dataset train;
    Dataset test;
    std::vector<int> class_map;
};

struct TaskStream {
    Protocol protocol = Protocol::kSynthetic;
    std::vector<TaskItem> tasks;
};

// Big-endian IDX parsing (magic 0x803 for images, 0x801 for labels), with
// transparent gunzip when the file starts with the gzip magic. Pixels are
// scaled by 1/255; class_count becomes max(label)+1.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Desk-scale subsetting: keeps at most `cap` examples of each class,
// chosen by a seeded shuffle, original order preserved among survivors.
Dataset cap_per_class(const Dataset& base, std::size_t cap, std::uint64_t seed);

// Task i applies a fixed seeded pixel permutation to both splits; the first
// task is unpermuted. Labels are untouched.
TaskStream make_permuted(const Dataset& train, const Dataset& test, int n_tasks,
                         std::uint64_t seed);

// One task per class pair, filtered to that pair and relabelled {0,1}.
// Pairs must be disjoint and present in the training split.
TaskStream make_split(const Dataset& train, const Dataset& test,
                      const std::vector<std::pair<int, int>>& class_pairs);

// Seeded Gaussian clusters, pairwise center distance >= separation before
// the per-dimension rescale into [0,1]. Each class contributes n_per_class
// examples, split 80/20 into train/test.
TaskStream make_synthetic_blobs(int n_tasks, int classes_per_task, std::size_t dim,
                                double separation, int n_per_class,
                                std::uint64_t seed);

}  // namespace eclrr
