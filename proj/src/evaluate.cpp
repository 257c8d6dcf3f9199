#include "ncd/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace ncd {

Tensor node_representations(const ModelState& state, const GraphOps& ops, const Tensor& features) {
    if (features.cols() != state.encoder.in_dim())
        throw std::invalid_argument("features have " + std::to_string(features.cols()) +
                                    " columns but the encoder expects " + std::to_string(state.encoder.in_dim()));
    return encode(state.encoder, ops, features);
}

std::vector<std::size_t> predict_slots(const ModelState& state, const GraphOps& ops, const Tensor& features) {
    const HeadParams& head = state.joint_head ? *state.joint_head : state.old_head;
    return argmax_rows(head_forward(head, node_representations(state, ops, features)));
}

std::vector<int> map_slots_to_classes(std::span<const std::size_t> slots, const Graph& g, const ClassSplit& split,
                                      std::size_t num_slots) {
    const std::size_t num_old = split.num_old();
    if (num_slots < num_old) throw std::invalid_argument("map_slots_to_classes: fewer slots than old classes");
    std::vector<int> mapping(split.old_classes.begin(), split.old_classes.end());
    const std::size_t new_slots = num_slots - num_old;
    if (new_slots == 0) return mapping;
    if (new_slots != split.num_new())
        throw std::invalid_argument("map_slots_to_classes: " + std::to_string(new_slots) + " new slots for " +
                                    std::to_string(split.num_new()) + " new classes");
    std::map<int, std::size_t> class_pos;
    for (std::size_t k = 0; k < split.new_classes.size(); ++k) class_pos[split.new_classes[k]] = k;
    Tensor cost(new_slots, new_slots);
    for (std::size_t v : split.p2_test) {
        if (slots[v] < num_old) continue;
        cost(slots[v] - num_old, class_pos.at(g.labels[v])) -= 1.0;
    }
    for (std::size_t c : hungarian_match(cost)) mapping.push_back(split.new_classes[c]);
    return mapping;
}

MetricsReport evaluate_joint(const ModelState& state, const Graph& g, const ClassSplit& split) {
    if (split.all_test.empty()) throw std::invalid_argument("evaluate_joint: empty test split");
    if (state.num_old() != split.num_old())
        throw std::invalid_argument("evaluate_joint: model has " + std::to_string(state.num_old()) +
                                    " old classes, split has " + std::to_string(split.num_old()));
    const GraphOps ops = GraphOps::from(g);
    const Tensor z = node_representations(state, ops, g.features);

    MetricsReport r;
    r.phase = static_cast<int>(state.phase);
    r.slots = predict_slots(state, ops, g.features);
    r.slot_to_class = map_slots_to_classes(r.slots, g, split, state.num_slots());
    r.predicted.reserve(r.slots.size());
    for (std::size_t s : r.slots) r.predicted.push_back(r.slot_to_class[s]);

    r.old_acc = accuracy_on(r.predicted, g.labels, split.p1_test);
    r.new_acc = accuracy_on(r.predicted, g.labels, split.p2_test);
    r.all_acc = accuracy_on(r.predicted, g.labels, split.all_test);

    r.classes = split.old_classes;
    r.classes.insert(r.classes.end(), split.new_classes.begin(), split.new_classes.end());
    r.confusion = confusion_matrix(r.predicted, g.labels, split.all_test, r.classes);

    r.novel_head_acc = std::numeric_limits<double>::quiet_NaN();
    if (state.novel_head && !split.p2_test.empty()) {
        const auto clusters = argmax_rows(head_forward(*state.novel_head, gather_rows(z, split.p2_test)));
        std::vector<int> labels;
        for (std::size_t v : split.p2_test) labels.push_back(g.labels[v]);
        r.novel_head_acc = clustering_accuracy(clusters, labels, state.novel_head->num_outputs());
    }

    if (state.phase == Phase::pretrained) {
        r.perf = Tensor(1, 1, r.old_acc);
    } else {
        r.perf = Tensor(2, 2);
        r.perf(0, 0) = state.phase1_old_acc;
        r.perf(1, 0) = r.old_acc;
        r.perf(1, 1) = r.new_acc;
    }
    const AaAf x = aa_af(r.perf, r.perf.rows());
    r.aa = x.aa;
    r.af = x.af;
    return r;
}

nlohmann::ordered_json MetricsReport::to_json() const {
    auto num = [](double v) -> nlohmann::ordered_json {
        if (std::isfinite(v)) return v;
        return nullptr;
    };
    nlohmann::ordered_json j;
    j["old_acc"] = num(old_acc);
    j["new_acc"] = num(new_acc);
    j["all_acc"] = num(all_acc);
    j["aa"] = num(aa);
    j["af"] = num(af);
    j["phase"] = phase;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["novel_head_acc_hungarian"] = num(novel_head_acc);
    j["classes"] = classes;
    j["slot_to_class"] = slot_to_class;
    nlohmann::ordered_json m = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < perf.rows(); ++i) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (std::size_t k = 0; k <= i; ++k) row.push_back(num(perf(i, k)));
        m.push_back(row);
    }
    j["perf_matrix"] = m;
    return j;
}

std::string MetricsReport::confusion_csv() const {
    std::ostringstream out;
    // Header: class ids. Row i: counts of true class classes[i] per predicted class.
    for (std::size_t k = 0; k < classes.size(); ++k) out << (k ? "," : "") << classes[k];
    out << '\n';
    for (const auto& row : confusion) {
        for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << row[k];
        out << '\n';
    }
    return out.str();
}

std::string MetricsReport::perf_csv() const {
    std::ostringstream out;
    out << "phase";
    for (std::size_t k = 0; k < perf.cols(); ++k) out << ",task" << k + 1;
    out << '\n';
    char buf[40];
    for (std::size_t i = 0; i < perf.rows(); ++i) {
        out << i + 1;
        for (std::size_t k = 0; k < perf.cols(); ++k) {
            out << ',';
            if (k <= i) {
                std::snprintf(buf, sizeof buf, "%.17g", perf(i, k));
                out << buf;
            }
        }
        out << '\n';
    }
    return out.str();
}

std::string nodes_csv(const Graph& g, const Tensor& z) {
    std::ostringstream out;
    out << "id,label";
    for (std::size_t k = 0; k < z.cols(); ++k) out << ",z" << k;
    out << '\n';
    char buf[40];
    for (std::size_t v = 0; v < z.rows(); ++v) {
        out << v << ',' << g.labels[v];
        for (std::size_t k = 0; k < z.cols(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", z(v, k));
            out << ',' << buf;
        }
        out << '\n';
    }
    return out.str();
}

} // namespace ncd
