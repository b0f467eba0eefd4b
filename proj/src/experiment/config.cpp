#include "experiment/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

#include "json.hpp"
#include "support/errors.hpp"
#include "support/hash.hpp"

namespace fiplab::experiment {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& pointer, const std::string& what) {
    raise(ErrorCode::config, "config error at " + pointer + ": " + what);
}

const json& require(const json& obj, const std::string& pointer, const char* key) {
    if (!obj.contains(key)) {
        config_error(pointer + "/" + key, "missing key");
    }
    return obj.at(key);
}

void reject_unknown(const json& obj, const std::string& pointer,
                    const std::set<std::string>& known) {
    for (const auto& [key, value] : obj.items()) {
        if (!known.count(key)) {
            config_error(pointer + "/" + key, "unknown key");
        }
    }
}

double get_number(const json& obj, const std::string& pointer, const char* key) {
    const json& v = require(obj, pointer, key);
    if (!v.is_number()) {
        config_error(pointer + "/" + key, "expected a number");
    }
    return v.get<double>();
}

int get_int(const json& obj, const std::string& pointer, const char* key) {
    const json& v = require(obj, pointer, key);
    if (!v.is_number_integer()) {
        config_error(pointer + "/" + key, "expected an integer");
    }
    return v.get<int>();
}

std::uint64_t get_seed(const json& obj, const std::string& pointer, const char* key) {
    const json& v = require(obj, pointer, key);
    if (!v.is_number_unsigned() && !v.is_number_integer()) {
        config_error(pointer + "/" + key, "expected an integer seed");
    }
    return v.get<std::uint64_t>();
}

std::string get_string(const json& obj, const std::string& pointer, const char* key) {
    const json& v = require(obj, pointer, key);
    if (!v.is_string()) {
        config_error(pointer + "/" + key, "expected a string");
    }
    return v.get<std::string>();
}

train::TrainConfig parse_train_config(const json& obj, const std::string& pointer,
                                      std::uint64_t* init_seed) {
    reject_unknown(obj, pointer,
                   {"lr", "momentum", "weight_decay", "epochs", "batch_size", "lr_decay_factor",
                    "lr_decay_period", "seed", "init_seed", "adaptive_eta_f"});
    train::TrainConfig cfg;
    cfg.lr = get_number(obj, pointer, "lr");
    cfg.momentum = get_number(obj, pointer, "momentum");
    cfg.weight_decay = get_number(obj, pointer, "weight_decay");
    cfg.epochs = get_int(obj, pointer, "epochs");
    cfg.batch_size = get_int(obj, pointer, "batch_size");
    cfg.lr_decay_factor = get_number(obj, pointer, "lr_decay_factor");
    cfg.lr_decay_period = get_int(obj, pointer, "lr_decay_period");
    cfg.seed = get_seed(obj, pointer, "seed");
    *init_seed = get_seed(obj, pointer, "init_seed");
    if (obj.contains("adaptive_eta_f")) {
        cfg.adaptive_eta_f = get_number(obj, pointer, "adaptive_eta_f");
        if (cfg.adaptive_eta_f < 0.0) {
            config_error(pointer + "/adaptive_eta_f", "must be >= 0");
        }
    }
    if (cfg.lr <= 0.0) {
        config_error(pointer + "/lr", "must be > 0");
    }
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
        config_error(pointer + "/momentum", "must lie in [0,1)");
    }
    if (cfg.epochs < 0) {
        config_error(pointer + "/epochs", "must be >= 0");
    }
    return cfg;
}

fip::FipConfig parse_fip_config(const json& obj, const std::string& pointer) {
    reject_unknown(obj, pointer,
                   {"eta_f", "eta_r", "lr", "epochs", "lr_decay_factor", "lr_decay_period",
                    "trace_grad_period", "batch_size", "seed"});
    fip::FipConfig cfg;
    cfg.eta_f = get_number(obj, pointer, "eta_f");
    cfg.eta_r = get_number(obj, pointer, "eta_r");
    cfg.lr = get_number(obj, pointer, "lr");
    cfg.epochs = get_int(obj, pointer, "epochs");
    cfg.lr_decay_factor = get_number(obj, pointer, "lr_decay_factor");
    cfg.lr_decay_period = get_int(obj, pointer, "lr_decay_period");
    cfg.trace_grad_period = get_int(obj, pointer, "trace_grad_period");
    cfg.batch_size = get_int(obj, pointer, "batch_size");
    cfg.seed = get_seed(obj, pointer, "seed");
    if (cfg.eta_f < 0.0 || cfg.eta_r < 0.0) {
        config_error(pointer, "penalty weights must be >= 0");
    }
    if (cfg.trace_grad_period < 1) {
        config_error(pointer + "/trace_grad_period", "must be >= 1");
    }
    return cfg;
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        raise(ErrorCode::config, "cannot open config file: " + path.string());
    }
    json root = json::parse(in, nullptr, false);
    if (root.is_discarded()) {
        raise(ErrorCode::config, "config is not valid JSON: " + path.string());
    }

    ExperimentConfig cfg;
    cfg.source_path = path;
    cfg.config_checksum = hash::fnv1a64_file(path);

    reject_unknown(root, "", {"dataset", "attack", "model", "train", "analysis", "defense",
                              "report"});

    // dataset
    {
        const json& ds = require(root, "", "dataset");
        reject_unknown(ds, "/dataset", {"synthetic", "idx", "validation"});
        if (ds.contains("synthetic") == ds.contains("idx")) {
            config_error("/dataset", "exactly one of 'synthetic' or 'idx' is required");
        }
        if (ds.contains("synthetic")) {
            const json& syn = ds.at("synthetic");
            const std::string p = "/dataset/synthetic";
            reject_unknown(syn, p,
                           {"class_count", "per_class_train", "per_class_test", "image_size",
                            "noise_level", "train_seed", "test_seed"});
            SyntheticSpec spec;
            spec.class_count = get_int(syn, p, "class_count");
            spec.per_class_train = get_int(syn, p, "per_class_train");
            spec.per_class_test = get_int(syn, p, "per_class_test");
            spec.image_size = get_int(syn, p, "image_size");
            spec.noise_level = get_number(syn, p, "noise_level");
            spec.train_seed = get_seed(syn, p, "train_seed");
            spec.test_seed = get_seed(syn, p, "test_seed");
            cfg.dataset.synthetic = spec;
        } else {
            const json& idx = ds.at("idx");
            const std::string p = "/dataset/idx";
            reject_unknown(idx, p, {"train_images", "train_labels", "test_images", "test_labels"});
            IdxSpec spec;
            spec.train_images = get_string(idx, p, "train_images");
            spec.train_labels = get_string(idx, p, "train_labels");
            spec.test_images = get_string(idx, p, "test_images");
            spec.test_labels = get_string(idx, p, "test_labels");
            for (const auto& f :
                 {spec.train_images, spec.train_labels, spec.test_images, spec.test_labels}) {
                if (!std::filesystem::exists(f)) {
                    config_error(p, "referenced file does not exist: " + f.string());
                }
            }
            cfg.dataset.idx = spec;
        }
        const json& val = require(ds, "/dataset", "validation");
        const std::string p = "/dataset/validation";
        reject_unknown(val, p, {"fraction", "per_class", "seed"});
        if (val.contains("fraction") == val.contains("per_class")) {
            config_error(p, "exactly one of 'fraction' or 'per_class' is required");
        }
        if (val.contains("fraction")) {
            cfg.dataset.validation.fraction = get_number(val, p, "fraction");
        } else {
            cfg.dataset.validation.per_class = get_int(val, p, "per_class");
        }
        cfg.dataset.validation.seed = get_seed(val, p, "seed");
    }

    // attack
    {
        const json& atk = require(root, "", "attack");
        reject_unknown(atk, "/attack", {"trigger", "label_map", "poison_rate", "seed"});
        const json& trig = require(atk, "/attack", "trigger");
        const std::string tp = "/attack/trigger";
        const std::string kind = get_string(trig, tp, "kind");
        if (kind == "patch") {
            reject_unknown(trig, tp, {"kind", "row", "col", "size", "value"});
            cfg.attack.trigger.kind = data::TriggerKind::patch;
            cfg.attack.trigger.row = get_int(trig, tp, "row");
            cfg.attack.trigger.col = get_int(trig, tp, "col");
            cfg.attack.trigger.size = get_int(trig, tp, "size");
            cfg.attack.trigger.value = get_number(trig, tp, "value");
        } else if (kind == "blend") {
            reject_unknown(trig, tp, {"kind", "alpha", "pattern_seed"});
            cfg.attack.trigger.kind = data::TriggerKind::blend;
            cfg.attack.trigger.alpha = get_number(trig, tp, "alpha");
            cfg.attack.trigger.pattern_seed = get_seed(trig, tp, "pattern_seed");
        } else {
            config_error(tp + "/kind", "must be 'patch' or 'blend'");
        }
        const json& map = require(atk, "/attack", "label_map");
        const std::string mp = "/attack/label_map";
        const std::string mkind = get_string(map, mp, "kind");
        if (mkind == "all2one") {
            reject_unknown(map, mp, {"kind", "target"});
            cfg.attack.label_map = data::LabelMapKind::all2one;
            cfg.attack.target = get_int(map, mp, "target");
        } else if (mkind == "all2all") {
            reject_unknown(map, mp, {"kind"});
            cfg.attack.label_map = data::LabelMapKind::all2all;
        } else {
            config_error(mp + "/kind", "must be 'all2one' or 'all2all'");
        }
        cfg.attack.poison_rate = get_number(atk, "/attack", "poison_rate");
        if (cfg.attack.poison_rate < 0.0 || cfg.attack.poison_rate > 1.0) {
            config_error("/attack/poison_rate", "must lie in [0,1]");
        }
        cfg.attack.seed = get_seed(atk, "/attack", "seed");
    }

    // model
    {
        const json& model = require(root, "", "model");
        reject_unknown(model, "/model", {"hidden"});
        const json& hidden = require(model, "/model", "hidden");
        if (!hidden.is_array() || hidden.empty()) {
            config_error("/model/hidden", "expected a non-empty array of widths");
        }
        cfg.train.hidden.clear();
        for (const auto& w : hidden) {
            if (!w.is_number_integer() || w.get<int>() < 1) {
                config_error("/model/hidden", "widths must be positive integers");
            }
            cfg.train.hidden.push_back(w.get<int>());
        }
    }

    // train
    {
        const json& tr = require(root, "", "train");
        reject_unknown(tr, "/train", {"benign", "backdoor"});
        cfg.train.benign.sgd = parse_train_config(require(tr, "/train", "benign"),
                                                  "/train/benign", &cfg.train.benign.init_seed);
        cfg.train.backdoor.sgd = parse_train_config(
            require(tr, "/train", "backdoor"), "/train/backdoor", &cfg.train.backdoor.init_seed);
    }

    // analysis
    {
        const json& an = require(root, "", "analysis");
        const std::string p = "/analysis";
        reject_unknown(an, p,
                       {"batch_size", "batch_seed", "power_iters", "power_tol", "power_seed",
                        "hutchinson_probes", "hutchinson_seed", "density"});
        cfg.analysis.batch_size = get_int(an, p, "batch_size");
        cfg.analysis.batch_seed = get_seed(an, p, "batch_seed");
        cfg.analysis.power_iters = get_int(an, p, "power_iters");
        cfg.analysis.power_tol = get_number(an, p, "power_tol");
        cfg.analysis.power_seed = get_seed(an, p, "power_seed");
        cfg.analysis.hutchinson_probes = get_int(an, p, "hutchinson_probes");
        cfg.analysis.hutchinson_seed = get_seed(an, p, "hutchinson_seed");
        if (an.contains("density")) {
            const json& den = an.at("density");
            const std::string dp = p + "/density";
            reject_unknown(den, dp, {"steps", "probes", "seed"});
            DensitySpec spec;
            spec.steps = get_int(den, dp, "steps");
            spec.probes = get_int(den, dp, "probes");
            spec.seed = get_seed(den, dp, "seed");
            cfg.analysis.density = spec;
        }
    }

    // defense
    {
        const json& def = require(root, "", "defense");
        reject_unknown(def, "/defense", {"mode", "fip"});
        const std::string mode = get_string(def, "/defense", "mode");
        if (mode == "fip") {
            cfg.defense.mode = DefenseMode::fip;
        } else if (mode == "ffip") {
            cfg.defense.mode = DefenseMode::ffip;
        } else if (mode == "vanilla-ft") {
            cfg.defense.mode = DefenseMode::vanilla_ft;
        } else {
            config_error("/defense/mode", "must be 'fip', 'ffip' or 'vanilla-ft'");
        }
        cfg.defense.fip = parse_fip_config(require(def, "/defense", "fip"), "/defense/fip");
    }

    // report
    {
        const json& rep = require(root, "", "report");
        reject_unknown(rep, "/report", {"output_dir"});
        cfg.report.output_dir = get_string(rep, "/report", "output_dir");
        if (const char* env = std::getenv("FIPLAB_OUTPUT_ROOT")) {
            cfg.report.output_dir = std::filesystem::path(env);
        }
    }

    return cfg;
}

data::TriggerSpec make_trigger(const TriggerConfig& cfg, int height, int width) {
    data::TriggerSpec trigger;
    trigger.kind = cfg.kind;
    if (cfg.kind == data::TriggerKind::patch) {
        trigger.row = cfg.row;
        trigger.col = cfg.col;
        trigger.size = cfg.size;
        trigger.value = cfg.value;
        // Worst-case pixel change when overwriting pixels in [0,1].
        trigger.epsilon = std::max(cfg.value, 1.0 - cfg.value);
    } else {
        trigger.alpha = cfg.alpha;
        trigger.blend_pattern = data::make_noise_pattern(height, width, cfg.pattern_seed);
        trigger.epsilon = cfg.alpha;
    }
    return trigger;
}

data::PoisonPlan make_poison_plan(const AttackSection& attack, int height, int width) {
    data::PoisonPlan plan;
    plan.trigger = make_trigger(attack.trigger, height, width);
    plan.poison_rate = attack.poison_rate;
    plan.label_map = attack.label_map;
    plan.target = attack.target;
    plan.seed = attack.seed;
    return plan;
}

const char* defense_mode_name(DefenseMode mode) {
    switch (mode) {
        case DefenseMode::fip:
            return "fip";
        case DefenseMode::ffip:
            return "ffip";
        case DefenseMode::vanilla_ft:
            return "vanilla-ft";
    }
    return "unknown";
}

}  // namespace fiplab::experiment
