#include "ncd/discovery.hpp"

#include "ncd/graph.hpp"
#include "ncd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace ncd {

ad::Var pairwise_similarity(ad::Var novel_logits) {
    if (novel_logits.rows() == 0) throw std::invalid_argument("pairwise_similarity: no rows");
    return ad::sigmoid(ad::matmul_nt(novel_logits, novel_logits));
}

std::vector<std::size_t> topk_indices(std::span<const double> row, std::size_t k) {
    if (k == 0 || k > row.size())
        throw std::invalid_argument("topk: k=" + std::to_string(k) + " outside [1, " + std::to_string(row.size()) + "]");
    std::vector<std::size_t> idx(row.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

Tensor topk_pseudo_pairs(const Tensor& z, std::size_t k) {
    const std::size_t n = z.rows();
    std::vector<std::vector<std::size_t>> sets(n);
    for (std::size_t i = 0; i < n; ++i) sets[i] = topk_indices(z.row(i), k);
    // Rows with equal sets form equivalence classes; group them once instead of comparing n² pairs.
    std::map<std::vector<std::size_t>, std::size_t> group_of;
    std::vector<std::size_t> group(n);
    for (std::size_t i = 0; i < n; ++i) group[i] = group_of.emplace(sets[i], group_of.size()).first->second;
    Tensor y(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) y(i, j) = group[i] == group[j] ? 1.0 : 0.0;
    return y;
}

ad::Var pairwise_bce(ad::Var similarity, const Tensor& pair_targets) {
    return ad::binary_cross_entropy(similarity, pair_targets);
}

std::vector<std::size_t> assign_pseudo_labels(const Tensor& novel_logits, std::size_t num_old) {
    if (novel_logits.cols() == 0) throw std::invalid_argument("assign_pseudo_labels: novel head has no outputs");
    auto labels = argmax_rows(novel_logits);
    for (auto& l : labels) l += num_old;
    return labels;
}

ad::Var self_training_loss(ad::Var joint_logits, const std::vector<std::size_t>& pseudo_labels) {
    for (std::size_t l : pseudo_labels) {
        if (l >= joint_logits.cols())
            throw std::out_of_range("self_training_loss: pseudo label " + std::to_string(l) + " >= " +
                                    std::to_string(joint_logits.cols()));
    }
    return ad::cross_entropy(joint_logits, pseudo_labels);
}

std::vector<double> perturbation_sigma(const Tensor& z, SigmaMode mode) {
    std::vector<double> sigma(z.cols(), 1.0);
    if (mode == SigmaMode::unit || z.rows() == 0) return sigma;
    const double n = static_cast<double>(z.rows());
    for (std::size_t k = 0; k < z.cols(); ++k) {
        double mu = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i) mu += z(i, k);
        mu /= n;
        double var = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i) var += (z(i, k) - mu) * (z(i, k) - mu);
        const double sd = std::sqrt(var / n);
        sigma[k] = sd < 1e-12 ? 1.0 : sd;
    }
    return sigma;
}

ad::Var perturb_representations(ad::Var z, double eta, std::span<const double> sigma, std::uint64_t seed) {
    if (sigma.size() != z.cols())
        throw std::invalid_argument("perturb_representations: sigma has " + std::to_string(sigma.size()) +
                                    " entries for " + std::to_string(z.cols()) + " dims");
    for (double s : sigma)
        if (s < 0) throw std::invalid_argument("perturb_representations: negative sigma");
    Tensor noise(z.rows(), z.cols());
    Rng rng(derive_seed(seed, "perturb"));
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t k = 0; k < z.cols(); ++k) noise(i, k) = eta * sigma[k] * rng.normal();
    return ad::add(z, z.tape()->constant(std::move(noise)));
}

ad::Var perturb_consistency_loss(ad::Var clean_logits, ad::Var perturbed_logits) {
    return ad::mse(ad::softmax_rows(clean_logits), ad::softmax_rows(perturbed_logits));
}

std::string Prototypes::to_json() const {
    nlohmann::ordered_json j;
    j["classes"] = classes;
    j["counts"] = counts;
    j["dim"] = dim();
    auto rows = [](const Tensor& t) {
        nlohmann::json out = nlohmann::json::array();
        for (std::size_t i = 0; i < t.rows(); ++i) out.push_back(std::vector<double>(t.row(i).begin(), t.row(i).end()));
        return out;
    };
    j["mean"] = rows(mean);
    j["variance"] = rows(variance);
    return j.dump() + "\n";
}

Prototypes Prototypes::from_json(const std::string& text) {
    Prototypes p;
    try {
        auto j = nlohmann::json::parse(text);
        j.at("classes").get_to(p.classes);
        j.at("counts").get_to(p.counts);
        const auto d = j.at("dim").get<std::size_t>();
        auto read = [&](const nlohmann::json& rows) {
            Tensor t(p.classes.size(), d);
            if (rows.size() != p.classes.size()) throw ParseError("prototypes: row count mismatch");
            for (std::size_t i = 0; i < rows.size(); ++i) {
                auto r = rows[i].get<std::vector<double>>();
                if (r.size() != d) throw ParseError("prototypes: row width mismatch");
                std::copy(r.begin(), r.end(), t.row(i).begin());
            }
            return t;
        };
        p.mean = read(j.at("mean"));
        p.variance = read(j.at("variance"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("prototypes: ") + e.what());
    }
    return p;
}

Prototypes compute_prototypes(const Tensor& z_old, std::span<const int> labels, const std::vector<int>& old_classes) {
    if (labels.size() != z_old.rows())
        throw std::invalid_argument("compute_prototypes: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(z_old.rows()) + " rows");
    std::map<int, std::size_t> slot;
    for (std::size_t s = 0; s < old_classes.size(); ++s) slot[old_classes[s]] = s;
    const std::size_t d = z_old.cols();
    Prototypes p{old_classes, std::vector<std::size_t>(old_classes.size(), 0), Tensor(old_classes.size(), d),
                 Tensor(old_classes.size(), d)};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = slot.find(labels[i]);
        if (it == slot.end())
            throw std::invalid_argument("compute_prototypes: label " + std::to_string(labels[i]) + " is not an old class");
        ++p.counts[it->second];
        for (std::size_t k = 0; k < d; ++k) p.mean(it->second, k) += z_old(i, k);
    }
    for (std::size_t s = 0; s < old_classes.size(); ++s) {
        if (p.counts[s] == 0)
            throw std::invalid_argument("compute_prototypes: class " + std::to_string(old_classes[s]) + " has no samples");
        for (std::size_t k = 0; k < d; ++k) p.mean(s, k) /= static_cast<double>(p.counts[s]);
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::size_t s = slot.at(labels[i]);
        for (std::size_t k = 0; k < d; ++k) {
            const double dev = z_old(i, k) - p.mean(s, k);
            p.variance(s, k) += dev * dev;
        }
    }
    for (std::size_t s = 0; s < old_classes.size(); ++s)
        for (std::size_t k = 0; k < d; ++k) p.variance(s, k) /= static_cast<double>(p.counts[s]);
    return p;
}

PrototypeBatch sample_prototype_batch(const Prototypes& protos, std::size_t per_class, std::uint64_t seed) {
    if (per_class == 0) throw std::invalid_argument("sample_prototype_batch: per_class must be positive");
    const std::size_t c = protos.classes.size();
    const std::size_t d = protos.dim();
    PrototypeBatch batch{Tensor(c * per_class, d), {}};
    batch.labels.reserve(c * per_class);
    Rng rng(derive_seed(seed, "prototype-replay"));
    for (std::size_t s = 0; s < c; ++s) {
        for (std::size_t r = 0; r < per_class; ++r) {
            const std::size_t row = s * per_class + r;
            for (std::size_t k = 0; k < d; ++k) {
                const double sd = std::sqrt(protos.variance(s, k));
                batch.features(row, k) = protos.mean(s, k) + sd * rng.normal();
            }
            batch.labels.push_back(protos.classes[s]);
        }
    }
    return batch;
}

ad::Var replay_loss(ad::Var joint_logits, const std::vector<std::size_t>& slot_labels, std::size_t num_old) {
    for (std::size_t l : slot_labels) {
        if (l >= num_old)
            throw std::out_of_range("replay_loss: label " + std::to_string(l) + " is not an old-class slot (< " +
                                    std::to_string(num_old) + ")");
    }
    return ad::cross_entropy(joint_logits, slot_labels);
}

ad::Var distill_loss(ad::Var z_frozen, ad::Var z_current) {
    return ad::mean(ad::l2_row_norm(ad::sub(z_frozen, z_current)));
}

double rampup(std::size_t epoch, std::size_t length, double amplitude) {
    if (length == 0) throw std::invalid_argument("rampup: length must be at least 1");
    if (epoch >= length) return amplitude;
    const double t = static_cast<double>(epoch) / static_cast<double>(length);
    return amplitude * std::exp(-5.0 * (1.0 - t) * (1.0 - t));
}

void LossWeights::validate() const {
    if (alpha1 < 0 || alpha2 < 0 || eta < 0 || lambda < 0 || omega_fd < 0)
        throw std::invalid_argument("loss weights must be nonnegative");
    if (rampup_length < 1) throw std::invalid_argument("rampup_length must be at least 1");
    if (top_k < 1) throw std::invalid_argument("top_k must be at least 1");
}

LossBreakdown total_loss(const LossComponents& c, const LossWeights& w, std::size_t epoch) {
    LossBreakdown b;
    b.epoch = epoch;
    b.beta1 = rampup(epoch, w.rampup_length, w.alpha1);
    b.beta2 = rampup(epoch, w.rampup_length, w.alpha2);
    b.pseudo = c.pseudo.value_or(0.0);
    b.self = c.self.value_or(0.0);
    b.perturb = c.perturb.value_or(0.0);
    b.replay = c.replay.value_or(0.0);
    b.distill = c.distill.value_or(0.0);
    b.novel = b.pseudo + b.beta1 * b.self + b.beta2 * b.perturb;
    b.base = b.replay + w.omega_fd * b.distill;
    b.total = b.novel + w.lambda * b.base;
    return b;
}

ad::Var total_loss(const LossVars& t, const LossWeights& w, std::size_t epoch, LossBreakdown* report) {
    LossComponents values;
    auto val = [](ad::Var v) -> std::optional<double> {
        if (!v.valid()) return std::nullopt;
        return v.value()[0];
    };
    values.pseudo = val(t.pseudo);
    values.self = val(t.self);
    values.perturb = val(t.perturb);
    values.replay = val(t.replay);
    values.distill = val(t.distill);
    const LossBreakdown b = total_loss(values, w, epoch);
    if (report) *report = b;

    ad::Var acc;
    auto accumulate = [&](ad::Var term, double coef) {
        if (!term.valid()) return;
        ad::Var scaled = coef == 1.0 ? term : ad::mul_scalar(term, coef);
        acc = acc.valid() ? ad::add(acc, scaled) : scaled;
    };
    accumulate(t.pseudo, 1.0);
    accumulate(t.self, b.beta1);
    accumulate(t.perturb, b.beta2);
    accumulate(t.replay, w.lambda);
    accumulate(t.distill, w.lambda * w.omega_fd);
    if (!acc.valid()) throw std::invalid_argument("total_loss: every loss term is disabled");
    return acc;
}

std::string to_csv_row(const LossBreakdown& b) {
    char buf[320];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", b.epoch, b.pseudo, b.self,
                  b.perturb, b.replay, b.distill, b.beta1, b.beta2, b.total);
    return buf;
}

} // namespace ncd
