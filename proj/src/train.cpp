#include "ncd/train.hpp"

#include "ncd/rng.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

namespace ncd {

std::string to_string(PerturbHead h) { return h == PerturbHead::novel ? "novel" : "joint"; }

PerturbHead parse_perturb_head(const std::string& s) {
    if (s == "novel") return PerturbHead::novel;
    if (s == "joint") return PerturbHead::joint;
    throw std::invalid_argument("unknown perturbation head '" + s + "' (expected novel or joint)");
}

std::string to_string(SigmaMode m) { return m == SigmaMode::empirical ? "empirical" : "unit"; }

SigmaMode parse_sigma_mode(const std::string& s) {
    if (s == "empirical") return SigmaMode::empirical;
    if (s == "unit") return SigmaMode::unit;
    throw std::invalid_argument("unknown sigma mode '" + s + "' (expected empirical or unit)");
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("train." + field + ": " + why);
    };
    if (hidden == 0) fail("hidden", "must be at least 1");
    if (layers == 0) fail("layers", "must be at least 1");
    if (!(lr > 0)) fail("lr", "must be positive");
    if (weight_decay < 0) fail("weight_decay", "must be nonnegative");
    if (pretrain_epochs == 0) fail("pretrain_epochs", "must be at least 1");
    if (ncd_epochs == 0) fail("ncd_epochs", "must be at least 1");
    if (patience == 0) fail("patience", "must be at least 1");
    if (replay_per_class == 0) fail("replay_per_class", "must be at least 1");
    if (head_init_scale < 0) fail("head_init_scale", "must be nonnegative");
    if (smoothing < 0 || smoothing >= 1) fail("smoothing", "must lie in [0, 1)");
    if (min_improvement < 0) fail("min_improvement", "must be nonnegative");
    loss.validate();
    if (loss.top_k > hidden) fail("top_k", "exceeds the representation size " + std::to_string(hidden));
    if (!(ablation.pseudo || ablation.self || ablation.perturb || ablation.replay || ablation.distill))
        fail("ablation", "every loss term is disabled");
}

// ---- checkpoint ----------------------------------------------------------------------

Checkpoint ModelState::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.step = optimizer.steps();
    ckpt.meta["phase"] = static_cast<int>(phase);
    ckpt.meta["backbone"] = to_string(encoder.backbone);
    ckpt.meta["layers"] = encoder.num_layers();
    ckpt.meta["in_dim"] = encoder.in_dim();
    ckpt.meta["repr_dim"] = encoder.out_dim();
    ckpt.meta["num_old"] = num_old();
    ckpt.meta["num_slots"] = num_slots();
    ckpt.meta["phase1_old_acc"] = phase1_old_acc;
    const AdamConfig& a = optimizer.config();
    ckpt.meta["adam"] = {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps},
                         {"weight_decay", a.weight_decay}};
    ckpt.meta["adam_moments"] = optimizer.first_moments().size();
    add_to_checkpoint(ckpt, "encoder", encoder);
    add_to_checkpoint(ckpt, "frozen_encoder", frozen_encoder);
    add_to_checkpoint(ckpt, "old_head", old_head);
    if (novel_head) add_to_checkpoint(ckpt, "novel_head", *novel_head);
    if (joint_head) add_to_checkpoint(ckpt, "joint_head", *joint_head);
    for (std::size_t i = 0; i < optimizer.first_moments().size(); ++i) {
        ckpt.add("adam.m." + std::to_string(i), optimizer.first_moments()[i]);
        ckpt.add("adam.v." + std::to_string(i), optimizer.second_moments()[i]);
    }
    return ckpt;
}

ModelState ModelState::from_checkpoint(const Checkpoint& ckpt) {
    ModelState s;
    try {
        const auto& m = ckpt.meta;
        const int phase = m.at("phase").get<int>();
        if (phase != 1 && phase != 2) throw ParseError("checkpoint: unknown phase " + std::to_string(phase));
        s.phase = static_cast<Phase>(phase);
        const Backbone backbone = parse_backbone(m.at("backbone").get<std::string>());
        const auto layers = m.at("layers").get<std::size_t>();
        s.encoder = encoder_from_checkpoint(ckpt, "encoder", backbone, layers);
        s.frozen_encoder = encoder_from_checkpoint(ckpt, "frozen_encoder", backbone, layers);
        s.old_head = head_from_checkpoint(ckpt, "old_head", HeadRole::old_classes);
        if (ckpt.has("novel_head.weight")) s.novel_head = head_from_checkpoint(ckpt, "novel_head", HeadRole::novel);
        if (ckpt.has("joint_head.weight")) s.joint_head = head_from_checkpoint(ckpt, "joint_head", HeadRole::joint);
        s.phase1_old_acc = m.at("phase1_old_acc").get<double>();
        const auto& a = m.at("adam");
        s.optimizer = Adam({a.at("lr").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(),
                            a.at("eps").get<double>(), a.at("weight_decay").get<double>()});
        const auto moments = m.at("adam_moments").get<std::size_t>();
        std::vector<Tensor> first, second;
        for (std::size_t i = 0; i < moments; ++i) {
            first.push_back(ckpt.get("adam.m." + std::to_string(i)));
            second.push_back(ckpt.get("adam.v." + std::to_string(i)));
        }
        s.optimizer.restore(ckpt.step, std::move(first), std::move(second));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint meta: ") + e.what());
    } catch (const std::out_of_range& e) {
        throw ParseError(e.what());
    }
    if (s.phase == Phase::discovered && (!s.novel_head || !s.joint_head))
        throw ParseError("checkpoint: phase-2 state without discovery heads");
    return s;
}

// ---- pre-training --------------------------------------------------------------------

namespace {

std::map<int, std::size_t> slot_index(const std::vector<int>& classes, std::size_t offset = 0) {
    std::map<int, std::size_t> idx;
    for (std::size_t s = 0; s < classes.size(); ++s) idx[classes[s]] = offset + s;
    return idx;
}

std::vector<std::size_t> slots_of(const Graph& g, const std::vector<std::size_t>& nodes,
                                  const std::map<int, std::size_t>& index) {
    std::vector<std::size_t> out;
    out.reserve(nodes.size());
    for (std::size_t v : nodes) out.push_back(index.at(g.labels[v]));
    return out;
}

double slot_accuracy(const Tensor& logits, const std::vector<std::size_t>& nodes,
                     const std::vector<std::size_t>& targets) {
    if (nodes.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto pred = argmax_rows(gather_rows(logits, nodes));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == targets[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(nodes.size());
}

std::vector<Tensor> grads_of(const ad::Tape& tape, const std::vector<ad::Var>& vars) {
    std::vector<Tensor> out;
    out.reserve(vars.size());
    for (const auto& v : vars) out.push_back(tape.grad(v));
    return out;
}

} // namespace

std::string to_csv_row(const PretrainEpoch& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g", e.epoch, e.loss, e.train_acc, e.val_acc);
    return buf;
}

PretrainResult pretrain(const Graph& g, const ClassSplit& split, const TrainConfig& cfg) {
    cfg.validate();
    if (split.p1_train.empty() || split.p1_val.empty() || split.p1_test.empty())
        throw std::invalid_argument("pretrain: phase-1 train/val/test lists must be nonempty");
    const GraphOps ops = GraphOps::from(g);
    const auto index = slot_index(split.old_classes);
    const auto train_targets = slots_of(g, split.p1_train, index);
    const auto val_targets = slots_of(g, split.p1_val, index);
    const auto test_targets = slots_of(g, split.p1_test, index);

    ModelState state;
    state.encoder = init_encoder(cfg.backbone, g.feature_dim(), cfg.hidden, cfg.layers, derive_seed(cfg.seed, "pretrain"));
    state.old_head = init_head(HeadRole::old_classes, cfg.hidden, split.num_old(), derive_seed(cfg.seed, "pretrain"));
    state.optimizer = Adam(cfg.adam());

    PretrainResult result;
    ModelState best = state;
    double best_val = -1.0;

    for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        ad::Tape tape;
        const BoundEncoder enc = bind(tape, state.encoder, true);
        const BoundHead head = bind(tape, state.old_head, true);
        ad::Var z = encode(enc, ops, tape.constant(g.features));
        ad::Var logits = head_forward(head, ad::gather_rows(z, split.p1_train));
        ad::Var loss = ad::cross_entropy(logits, train_targets);
        const double loss_value = loss.value()[0];
        if (!std::isfinite(loss_value))
            throw TrainingDiverged("pretrain: non-finite loss at epoch " + std::to_string(epoch),
                                   "epoch=" + std::to_string(epoch) + ",loss=" + std::to_string(loss_value));
        tape.backward(loss);

        std::vector<ad::Var> vars = enc.vars();
        vars.push_back(head.weight);
        vars.push_back(head.bias);
        std::vector<Tensor*> params = state.encoder.parameters();
        for (Tensor* p : state.old_head.parameters()) params.push_back(p);
        state.optimizer.step(params, grads_of(tape, vars));

        const Tensor all_logits = head_forward(state.old_head, encode(state.encoder, ops, g.features));
        PretrainEpoch row{epoch, loss_value, slot_accuracy(all_logits, split.p1_train, train_targets),
                          slot_accuracy(all_logits, split.p1_val, val_targets)};
        result.log.push_back(row);
        if (!std::isfinite(row.val_acc))
            throw TrainingDiverged("pretrain: validation accuracy is NaN at epoch " + std::to_string(epoch),
                                   to_csv_row(row));
        if (row.val_acc > best_val) {
            best_val = row.val_acc;
            best = state;
            result.best_epoch = epoch;
        }
    }

    state = std::move(best);
    state.phase = Phase::pretrained;
    state.frozen_encoder = state.encoder;
    const Tensor z = encode(state.encoder, ops, g.features);
    state.phase1_old_acc = slot_accuracy(head_forward(state.old_head, z), split.p1_test, test_targets);

    std::vector<int> train_labels;
    for (std::size_t v : split.p1_train) train_labels.push_back(g.labels[v]);
    result.prototypes = compute_prototypes(gather_rows(z, split.p1_train), train_labels, split.old_classes);
    result.state = std::move(state);
    return result;
}

// ---- discovery phase -----------------------------------------------------------------

NcdResult ncd_train(const ModelState& pretrained, const Prototypes& prototypes, const Graph& g,
                    const ClassSplit& split, const TrainConfig& cfg) {
    cfg.validate();
    if (pretrained.phase != Phase::pretrained)
        throw std::invalid_argument("ncd_train: expects a pre-trained (phase 1) state");
    if (split.p2_train.empty()) throw std::invalid_argument("ncd_train: phase-2 train list is empty");
    if (split.num_new() == 0) throw std::invalid_argument("ncd_train: no new classes to discover");
    if (prototypes.classes != split.old_classes)
        throw std::invalid_argument("ncd_train: prototypes do not cover the split's old classes");
    if (prototypes.dim() != pretrained.encoder.out_dim())
        throw std::invalid_argument("ncd_train: prototype dimension does not match the encoder");
    const LossWeights& w = cfg.loss;
    if (w.top_k > pretrained.encoder.out_dim())
        throw std::invalid_argument("ncd_train: top_k exceeds the representation size");

    const GraphOps ops = GraphOps::from(g);
    const std::size_t num_old = split.num_old();
    const std::size_t num_new = split.num_new();
    const std::size_t repr = pretrained.encoder.out_dim();

    ModelState state = pretrained;
    state.phase = Phase::discovered;
    state.joint_head = extend_head(state.old_head, num_new, cfg.head_init_scale, derive_seed(cfg.seed, "ncd-joint"));
    state.novel_head = init_head(HeadRole::novel, repr, num_new, derive_seed(cfg.seed, "ncd-novel"));
    state.optimizer = Adam(cfg.adam());

    const Tensor frozen_z = gather_rows(encode(state.frozen_encoder, ops, g.features), split.p2_train);
    const auto replay_index = slot_index(prototypes.classes);
    const Ablation& ab = cfg.ablation;

    NcdResult result;
    ModelState best = state;
    double smoothed = 0.0;
    double best_smoothed = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    // The ramp-up raises the loss on purpose; only the plateau after it is monitored.
    const std::size_t monitor_from = std::min(w.rampup_length, cfg.ncd_epochs - 1);

    for (std::size_t epoch = 0; epoch < cfg.ncd_epochs; ++epoch) {
        ad::Tape tape;
        const BoundEncoder enc = bind(tape, state.encoder, true);
        const BoundHead novel = bind(tape, *state.novel_head, true);
        const BoundHead joint = bind(tape, *state.joint_head, true);
        ad::Var z_all = encode(enc, ops, tape.constant(g.features));
        ad::Var zu = ad::gather_rows(z_all, split.p2_train);
        ad::Var novel_logits = head_forward(novel, zu);

        LossVars terms;
        if (ab.pseudo) {
            const Tensor pairs = topk_pseudo_pairs(zu.value(), w.top_k);
            terms.pseudo = pairwise_bce(pairwise_similarity(novel_logits), pairs);
        }
        if (ab.self) {
            const auto pseudo_labels = assign_pseudo_labels(novel_logits.value(), num_old);
            terms.self = self_training_loss(head_forward(joint, zu), pseudo_labels);
        }
        if (ab.perturb) {
            const auto sigma = perturbation_sigma(zu.value(), cfg.sigma_mode);
            ad::Var zp = perturb_representations(zu, w.eta, sigma, derive_seed(cfg.seed, "ncd-perturb", epoch));
            const BoundHead& h = cfg.perturb_head == PerturbHead::novel ? novel : joint;
            terms.perturb = perturb_consistency_loss(head_forward(h, zu), head_forward(h, zp));
        }
        std::vector<std::size_t> replay_slots;
        Tensor replay_features;
        if (ab.replay) {
            PrototypeBatch batch =
                sample_prototype_batch(prototypes, cfg.replay_per_class, derive_seed(cfg.seed, "ncd-replay", epoch));
            for (int c : batch.labels) replay_slots.push_back(replay_index.at(c));
            replay_features = std::move(batch.features);
            terms.replay = replay_loss(head_forward(joint, tape.constant(replay_features)), replay_slots, num_old);
        }
        if (ab.distill) terms.distill = distill_loss(tape.constant(frozen_z), zu);

        LossBreakdown report;
        ad::Var total = total_loss(terms, w, epoch, &report);
        result.log.push_back(report);
        for (double v : {report.pseudo, report.self, report.perturb, report.replay, report.distill, report.total}) {
            if (!std::isfinite(v))
                throw TrainingDiverged("ncd: non-finite loss at epoch " + std::to_string(epoch),
                                       std::string(kLossLogHeader) + "\n" + to_csv_row(report));
        }

        if (cfg.debug_checks && ab.replay) {
            ad::Tape check;
            const BoundEncoder cenc = bind(check, state.encoder, true);
            const BoundHead cjoint = bind(check, *state.joint_head, true);
            encode(cenc, ops, check.constant(g.features));
            ad::Var r = replay_loss(head_forward(cjoint, check.constant(replay_features)), replay_slots, num_old);
            check.backward(r);
            for (const auto& v : cenc.vars()) {
                const Tensor g = check.grad(v);
                for (double x : g.data())
                    if (x != 0.0) throw std::logic_error("ncd: replay loss reached the encoder");
            }
        }

        smoothed = epoch == 0 ? report.total : cfg.smoothing * smoothed + (1.0 - cfg.smoothing) * report.total;
        bool stop = false;
        if (epoch >= monitor_from) {
            if (smoothed < best_smoothed - cfg.min_improvement) {
                best_smoothed = smoothed;
                best = state;
                result.best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                stop = true;
            }
        }

        tape.backward(total);
        std::vector<ad::Var> vars = enc.vars();
        for (const auto& v : {novel.weight, novel.bias, joint.weight, joint.bias}) vars.push_back(v);
        std::vector<Tensor*> params = state.encoder.parameters();
        for (Tensor* p : state.novel_head->parameters()) params.push_back(p);
        for (Tensor* p : state.joint_head->parameters()) params.push_back(p);
        state.optimizer.step(params, grads_of(tape, vars));

        if (stop) {
            result.stopped_early = true;
            break;
        }
    }

    result.final = std::move(state);
    result.best = std::move(best);
    return result;
}

} // namespace ncd
