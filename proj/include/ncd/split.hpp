#pragma once

#include "ncd/graph.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ncd {

/// Old/new class partition plus per-phase node masks. Node lists are sorted ascending.
struct ClassSplit {
    std::vector<int> old_classes;
    std::vector<int> new_classes;
    std::vector<std::size_t> p1_train, p1_val, p1_test;
    std::vector<std::size_t> p2_train, p2_val, p2_test;
    std::vector<std::size_t> all_test;

    std::size_t num_old() const { return old_classes.size(); }
    std::size_t num_new() const { return new_classes.size(); }
    std::size_t num_all() const { return old_classes.size() + new_classes.size(); }

    /// Checks disjointness of classes and masks and that every node's label matches its phase.
    void validate(const Graph& g) const;

    std::string to_json() const;
    static ClassSplit from_json(const std::string& text);

    friend bool operator==(const ClassSplit&, const ClassSplit&) = default;
};

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

/// Stratified per-class split. Classes listed in neither `old_classes` nor `new_classes`
/// must not occur in the graph.
ClassSplit split_classes(const Graph& g, const std::vector<int>& old_classes, const std::vector<int>& new_classes,
                         const SplitRatios& ratios, std::uint64_t seed);

/// Picks `num_new` classes uniformly at random (by seed) as new, the rest as old, both sorted.
std::pair<std::vector<int>, std::vector<int>> choose_class_partition(int num_classes, int num_new,
                                                                     std::uint64_t seed);

void save_split(const ClassSplit& split, const std::filesystem::path& path);
ClassSplit load_split(const std::filesystem::path& path);

} // namespace ncd
