#include "ncd/split.hpp"

#include "ncd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ncd {

namespace {

bool disjoint(std::vector<std::size_t> a, std::vector<std::size_t> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::size_t> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    return both.empty();
}

} // namespace

void ClassSplit::validate(const Graph& g) const {
    std::set<int> olds(old_classes.begin(), old_classes.end());
    std::set<int> news(new_classes.begin(), new_classes.end());
    if (olds.size() != old_classes.size() || news.size() != new_classes.size())
        throw ValidationError("split: duplicate class ids");
    for (int c : new_classes)
        if (olds.count(c)) throw ValidationError("split: class " + std::to_string(c) + " is both old and new");

    auto check_nodes = [&](const std::vector<std::size_t>& nodes, const std::set<int>& allowed, const char* name) {
        for (std::size_t v : nodes) {
            if (v >= g.num_nodes) throw ValidationError(std::string("split: ") + name + " node out of range");
            if (!allowed.count(g.labels[v])) {
                throw ValidationError(std::string("split: ") + name + " node " + std::to_string(v) +
                                      " has label " + std::to_string(g.labels[v]) + " outside its phase");
            }
        }
    };
    check_nodes(p1_train, olds, "p1_train");
    check_nodes(p1_val, olds, "p1_val");
    check_nodes(p1_test, olds, "p1_test");
    check_nodes(p2_train, news, "p2_train");
    check_nodes(p2_val, news, "p2_val");
    check_nodes(p2_test, news, "p2_test");
    if (!disjoint(p1_train, p1_val) || !disjoint(p1_train, p1_test) || !disjoint(p1_val, p1_test) ||
        !disjoint(p2_train, p2_val) || !disjoint(p2_train, p2_test) || !disjoint(p2_val, p2_test)) {
        throw ValidationError("split: train/val/test overlap within a phase");
    }
}

std::string ClassSplit::to_json() const {
    nlohmann::ordered_json j;
    j["old_classes"] = old_classes;
    j["new_classes"] = new_classes;
    j["p1_train"] = p1_train;
    j["p1_val"] = p1_val;
    j["p1_test"] = p1_test;
    j["p2_train"] = p2_train;
    j["p2_val"] = p2_val;
    j["p2_test"] = p2_test;
    j["all_test"] = all_test;
    return j.dump() + "\n";
}

ClassSplit ClassSplit::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("split: ") + e.what());
    }
    ClassSplit s;
    try {
        j.at("old_classes").get_to(s.old_classes);
        j.at("new_classes").get_to(s.new_classes);
        j.at("p1_train").get_to(s.p1_train);
        j.at("p1_val").get_to(s.p1_val);
        j.at("p1_test").get_to(s.p1_test);
        j.at("p2_train").get_to(s.p2_train);
        j.at("p2_val").get_to(s.p2_val);
        j.at("p2_test").get_to(s.p2_test);
        j.at("all_test").get_to(s.all_test);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("split: ") + e.what());
    }
    return s;
}

ClassSplit split_classes(const Graph& g, const std::vector<int>& old_classes, const std::vector<int>& new_classes,
                         const SplitRatios& ratios, std::uint64_t seed) {
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
        throw std::invalid_argument("split_classes: ratios must be nonnegative and sum to 1");
    }
    std::set<int> olds(old_classes.begin(), old_classes.end());
    std::set<int> news(new_classes.begin(), new_classes.end());
    for (int c : news)
        if (olds.count(c)) throw std::invalid_argument("split_classes: class " + std::to_string(c) + " is both old and new");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
        const int c = g.labels[v];
        if (!olds.count(c) && !news.count(c))
            throw std::invalid_argument("split_classes: label " + std::to_string(c) + " is in neither class list");
        by_class[c].push_back(v);
    }

    ClassSplit s;
    s.old_classes.assign(olds.begin(), olds.end());
    s.new_classes.assign(news.begin(), news.end());
    for (auto& [c, nodes] : by_class) {
        const std::size_t n = nodes.size();
        if (n < 3) {
            throw std::invalid_argument("split_classes: class " + std::to_string(c) + " has " + std::to_string(n) +
                                        " nodes, need at least 3");
        }
        Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(c)));
        std::shuffle(nodes.begin(), nodes.end(), rng.engine());

        auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
        auto n_val = static_cast<std::size_t>(std::llround(ratios.val * static_cast<double>(n)));
        n_train = std::max<std::size_t>(n_train, 1);
        n_val = std::max<std::size_t>(n_val, 1);
        while (n_train + n_val > n - 1) {
            if (n_train >= n_val && n_train > 1) --n_train;
            else --n_val;
        }
        const bool is_old = olds.count(c) > 0;
        auto& train = is_old ? s.p1_train : s.p2_train;
        auto& val = is_old ? s.p1_val : s.p2_val;
        auto& test = is_old ? s.p1_test : s.p2_test;
        train.insert(train.end(), nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(n_train));
        val.insert(val.end(), nodes.begin() + static_cast<std::ptrdiff_t>(n_train),
                   nodes.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        test.insert(test.end(), nodes.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), nodes.end());
    }
    for (auto* v : {&s.p1_train, &s.p1_val, &s.p1_test, &s.p2_train, &s.p2_val, &s.p2_test})
        std::sort(v->begin(), v->end());
    s.all_test = s.p1_test;
    s.all_test.insert(s.all_test.end(), s.p2_test.begin(), s.p2_test.end());
    std::sort(s.all_test.begin(), s.all_test.end());
    return s;
}

std::pair<std::vector<int>, std::vector<int>> choose_class_partition(int num_classes, int num_new,
                                                                     std::uint64_t seed) {
    if (num_new < 0 || num_new > num_classes)
        throw std::invalid_argument("choose_class_partition: num_new out of range");
    std::vector<int> ids(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) ids[static_cast<std::size_t>(c)] = c;
    Rng rng(derive_seed(seed, "class-partition"));
    std::shuffle(ids.begin(), ids.end(), rng.engine());
    std::vector<int> news(ids.begin(), ids.begin() + num_new);
    std::vector<int> olds(ids.begin() + num_new, ids.end());
    std::sort(news.begin(), news.end());
    std::sort(olds.begin(), olds.end());
    return {olds, news};
}

void save_split(const ClassSplit& split, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << split.to_json();
}

ClassSplit load_split(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ClassSplit::from_json(ss.str());
}

} // namespace ncd
