#include "fiplab.h"

#include <cstring>
#include <sstream>
#include <string>

#include "data/dataset.hpp"
#include "experiment/pipeline.hpp"
#include "experiment/report.hpp"
#include "fip/purify.hpp"
#include "json.hpp"
#include "nn/ops.hpp"
#include "smoothness/smoothness.hpp"
#include "support/errors.hpp"
#include "train/trainer.hpp"

using nlohmann::json;

struct fiplab_model {
    fiplab::nn::MlpModel model;
};

struct fiplab_dataset {
    fiplab::data::LabeledDataset data;
};

namespace {

thread_local std::string g_last_error;

fiplab_status to_status(fiplab::ErrorCode code) {
    switch (code) {
        case fiplab::ErrorCode::invalid_argument:
            return FIPLAB_ERR_INVALID_ARGUMENT;
        case fiplab::ErrorCode::config:
            return FIPLAB_ERR_CONFIG;
        case fiplab::ErrorCode::prerequisite:
            return FIPLAB_ERR_PREREQUISITE;
        case fiplab::ErrorCode::numeric:
            return FIPLAB_ERR_NUMERIC;
        case fiplab::ErrorCode::io:
            return FIPLAB_ERR_IO;
        case fiplab::ErrorCode::format:
            return FIPLAB_ERR_FORMAT;
        case fiplab::ErrorCode::internal:
            return FIPLAB_ERR_INTERNAL;
    }
    return FIPLAB_ERR_INTERNAL;
}

template <typename Fn>
fiplab_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return FIPLAB_OK;
    } catch (const fiplab::Error& e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const json::exception& e) {
        g_last_error = e.what();
        return FIPLAB_ERR_FORMAT;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return FIPLAB_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.data(), s.size() + 1);
    return out;
}

fiplab_status require_arg(bool ok, const char* what) {
    if (!ok) {
        g_last_error = std::string("invalid argument: ") + what;
        return FIPLAB_ERR_INVALID_ARGUMENT;
    }
    return FIPLAB_OK;
}

json parse_json_arg(const char* text, const char* what) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) {
        fiplab::raise(fiplab::ErrorCode::format, std::string(what) + " is not valid JSON");
    }
    return doc;
}

fiplab::data::PoisonPlan plan_from_json(const json& doc, const fiplab::data::LabeledDataset& ds) {
    fiplab::experiment::AttackSection attack;
    const json& trig = doc.at("trigger");
    const std::string kind = trig.at("kind").get<std::string>();
    if (kind == "patch") {
        attack.trigger.kind = fiplab::data::TriggerKind::patch;
        attack.trigger.row = trig.at("row").get<int>();
        attack.trigger.col = trig.at("col").get<int>();
        attack.trigger.size = trig.at("size").get<int>();
        attack.trigger.value = trig.at("value").get<double>();
    } else if (kind == "blend") {
        attack.trigger.kind = fiplab::data::TriggerKind::blend;
        attack.trigger.alpha = trig.at("alpha").get<double>();
        attack.trigger.pattern_seed = trig.at("pattern_seed").get<std::uint64_t>();
    } else {
        fiplab::raise(fiplab::ErrorCode::invalid_argument, "trigger kind must be patch or blend");
    }
    const json& map = doc.at("label_map");
    const std::string mkind = map.at("kind").get<std::string>();
    if (mkind == "all2one") {
        attack.label_map = fiplab::data::LabelMapKind::all2one;
        attack.target = map.at("target").get<int>();
    } else if (mkind == "all2all") {
        attack.label_map = fiplab::data::LabelMapKind::all2all;
    } else {
        fiplab::raise(fiplab::ErrorCode::invalid_argument,
                      "label_map kind must be all2one or all2all");
    }
    attack.poison_rate = doc.at("poison_rate").get<double>();
    attack.seed = doc.at("seed").get<std::uint64_t>();
    return fiplab::experiment::make_poison_plan(attack, ds.height, ds.width);
}

json bookkeeping_to_json(const fiplab::data::PoisonBookkeeping& bk) {
    json records = json::array();
    for (const auto& rec : bk.records) {
        records.push_back({rec.index, rec.original_label, rec.assigned_label});
    }
    return json{{"realized_epsilon", bk.realized_epsilon}, {"records", records}};
}

fiplab::data::PoisonBookkeeping bookkeeping_from_json(const json& doc) {
    fiplab::data::PoisonBookkeeping bk;
    bk.realized_epsilon = doc.at("realized_epsilon").get<double>();
    for (const auto& rec : doc.at("records")) {
        bk.records.push_back(
            {rec.at(0).get<std::size_t>(), rec.at(1).get<int>(), rec.at(2).get<int>()});
    }
    return bk;
}

fiplab::train::TrainConfig train_config_from_json(const json& doc) {
    fiplab::train::TrainConfig cfg;
    cfg.lr = doc.at("lr").get<double>();
    cfg.momentum = doc.at("momentum").get<double>();
    cfg.weight_decay = doc.at("weight_decay").get<double>();
    cfg.epochs = doc.at("epochs").get<int>();
    cfg.batch_size = doc.at("batch_size").get<int>();
    cfg.lr_decay_factor = doc.value("lr_decay_factor", 1.0);
    cfg.lr_decay_period = doc.value("lr_decay_period", 0);
    cfg.seed = doc.at("seed").get<std::uint64_t>();
    cfg.adaptive_eta_f = doc.value("adaptive_eta_f", 0.0);
    return cfg;
}

fiplab::fip::FipConfig fip_config_from_json(const json& doc) {
    fiplab::fip::FipConfig cfg;
    cfg.eta_f = doc.value("eta_f", cfg.eta_f);
    cfg.eta_r = doc.value("eta_r", cfg.eta_r);
    cfg.lr = doc.value("lr", cfg.lr);
    cfg.epochs = doc.value("epochs", cfg.epochs);
    cfg.lr_decay_factor = doc.value("lr_decay_factor", cfg.lr_decay_factor);
    cfg.lr_decay_period = doc.value("lr_decay_period", cfg.lr_decay_period);
    cfg.trace_grad_period = doc.value("trace_grad_period", cfg.trace_grad_period);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.seed = doc.at("seed").get<std::uint64_t>();
    return cfg;
}

std::string trace_csv_text(const std::vector<fiplab::train::EpochStats>& trace) {
    std::ostringstream out;
    out << "epoch,train_loss,train_acc,test_acc,asr\n";
    char line[256];
    for (const auto& row : trace) {
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g\n", row.epoch,
                      row.train_loss, row.train_acc, row.test_acc, row.asr);
        out << line;
    }
    return out.str();
}

std::string purify_trace_csv_text(const std::vector<fiplab::fip::PurifyIteration>& trace) {
    std::ostringstream out;
    out << "iteration,epoch,ce,trace_fim,lr_penalty,objective,theta_dist\n";
    char line[256];
    for (const auto& row : trace) {
        std::snprintf(line, sizeof(line), "%ld,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", row.iteration,
                      row.epoch, row.ce, row.trace_fim, row.lr_value, row.objective,
                      row.theta_dist);
        out << line;
    }
    return out.str();
}

}  // namespace

extern "C" {

const char* fiplab_version(void) {
    return "1.0.0";
}

const char* fiplab_last_error(void) {
    return g_last_error.c_str();
}

void fiplab_string_free(char* s) {
    delete[] s;
}

fiplab_status fiplab_model_create(const uint32_t* widths, size_t n_widths, uint64_t seed,
                                  fiplab_model** out) {
    if (auto st = require_arg(widths && out && n_widths >= 2, "widths/out")) {
        return st;
    }
    return guarded([&] {
        std::vector<int> w(widths, widths + n_widths);
        auto* handle = new fiplab_model{fiplab::nn::MlpModel::init(w, seed)};
        *out = handle;
    });
}

fiplab_status fiplab_model_load(const char* path, fiplab_model** out) {
    if (auto st = require_arg(path && out, "path/out")) {
        return st;
    }
    return guarded([&] { *out = new fiplab_model{fiplab::nn::load_checkpoint(path)}; });
}

fiplab_status fiplab_model_save(const fiplab_model* model, const char* path) {
    if (auto st = require_arg(model && path, "model/path")) {
        return st;
    }
    return guarded([&] { fiplab::nn::save_checkpoint(model->model, path); });
}

void fiplab_model_free(fiplab_model* model) {
    delete model;
}

fiplab_status fiplab_model_param_count(const fiplab_model* model, uint64_t* out) {
    if (auto st = require_arg(model && out, "model/out")) {
        return st;
    }
    *out = model->model.param_count();
    return FIPLAB_OK;
}

fiplab_status fiplab_model_class_count(const fiplab_model* model, uint32_t* out) {
    if (auto st = require_arg(model && out, "model/out")) {
        return st;
    }
    *out = static_cast<uint32_t>(model->model.class_count());
    return FIPLAB_OK;
}

fiplab_status fiplab_dataset_gen_synthetic(uint32_t class_count, uint32_t per_class,
                                           uint32_t image_size, double noise_level, uint64_t seed,
                                           fiplab_dataset** out) {
    if (auto st = require_arg(out != nullptr, "out")) {
        return st;
    }
    return guarded([&] {
        *out = new fiplab_dataset{fiplab::data::gen_synthetic(
            static_cast<int>(class_count), static_cast<int>(per_class),
            static_cast<int>(image_size), noise_level, seed)};
    });
}

fiplab_status fiplab_dataset_load_idx(const char* images_path, const char* labels_path,
                                      fiplab_dataset** out) {
    if (auto st = require_arg(images_path && labels_path && out, "paths/out")) {
        return st;
    }
    return guarded(
        [&] { *out = new fiplab_dataset{fiplab::data::load_idx(images_path, labels_path)}; });
}

fiplab_status fiplab_dataset_save_idx(const fiplab_dataset* ds, const char* images_path,
                                      const char* labels_path) {
    if (auto st = require_arg(ds && images_path && labels_path, "ds/paths")) {
        return st;
    }
    return guarded([&] { fiplab::data::save_idx(ds->data, images_path, labels_path); });
}

void fiplab_dataset_free(fiplab_dataset* ds) {
    delete ds;
}

fiplab_status fiplab_dataset_size(const fiplab_dataset* ds, uint64_t* out) {
    if (auto st = require_arg(ds && out, "ds/out")) {
        return st;
    }
    *out = ds->data.size();
    return FIPLAB_OK;
}

fiplab_status fiplab_dataset_class_count(const fiplab_dataset* ds, uint32_t* out) {
    if (auto st = require_arg(ds && out, "ds/out")) {
        return st;
    }
    *out = static_cast<uint32_t>(ds->data.class_count);
    return FIPLAB_OK;
}

fiplab_status fiplab_dataset_poison(const fiplab_dataset* ds, const char* plan_json,
                                    fiplab_dataset** poisoned_out, char** bookkeeping_json_out) {
    if (auto st = require_arg(ds && plan_json && poisoned_out, "ds/plan/out")) {
        return st;
    }
    return guarded([&] {
        const json doc = parse_json_arg(plan_json, "poison plan");
        auto [poisoned, bk] = fiplab::data::poison(ds->data, plan_from_json(doc, ds->data));
        *poisoned_out = new fiplab_dataset{std::move(poisoned)};
        if (bookkeeping_json_out) {
            *bookkeeping_json_out = dup_string(bookkeeping_to_json(bk).dump());
        }
    });
}

fiplab_status fiplab_dataset_trigger_eval(const fiplab_dataset* clean_test, const char* plan_json,
                                          fiplab_dataset** triggered_out,
                                          char** bookkeeping_json_out) {
    if (auto st = require_arg(clean_test && plan_json && triggered_out, "ds/plan/out")) {
        return st;
    }
    return guarded([&] {
        const json doc = parse_json_arg(plan_json, "poison plan");
        auto [triggered, bk] = fiplab::data::make_triggered_eval_set(
            clean_test->data, plan_from_json(doc, clean_test->data));
        triggered.class_count = clean_test->data.class_count;
        *triggered_out = new fiplab_dataset{std::move(triggered)};
        if (bookkeeping_json_out) {
            *bookkeeping_json_out = dup_string(bookkeeping_to_json(bk).dump());
        }
    });
}

fiplab_status fiplab_dataset_split(const fiplab_dataset* ds, const char* split_json,
                                   fiplab_dataset** train_out, fiplab_dataset** val_out) {
    if (auto st = require_arg(ds && split_json && train_out && val_out, "ds/spec/out")) {
        return st;
    }
    return guarded([&] {
        const json doc = parse_json_arg(split_json, "split spec");
        fiplab::data::SplitSpec spec;
        spec.fraction = doc.value("fraction", 0.0);
        spec.per_class = doc.value("per_class", 0);
        auto result = fiplab::data::split(ds->data, spec, doc.at("seed").get<std::uint64_t>());
        *train_out = new fiplab_dataset{std::move(result.train)};
        *val_out = new fiplab_dataset{std::move(result.val)};
    });
}

fiplab_status fiplab_train(fiplab_model* model, const fiplab_dataset* train_set,
                           const char* cfg_json, char** trace_csv_out) {
    if (auto st = require_arg(model && train_set && cfg_json, "model/data/cfg")) {
        return st;
    }
    return guarded([&] {
        const json doc = parse_json_arg(cfg_json, "train config");
        auto result = fiplab::train::sgd_train(model->model, train_set->data,
                                               train_config_from_json(doc));
        model->model = std::move(result.model);
        if (trace_csv_out) {
            *trace_csv_out = dup_string(trace_csv_text(result.trace));
        }
    });
}

fiplab_status fiplab_evaluate_acc(const fiplab_model* model, const fiplab_dataset* clean_test,
                                  double* out) {
    if (auto st = require_arg(model && clean_test && out, "model/data/out")) {
        return st;
    }
    return guarded([&] { *out = fiplab::train::evaluate_acc(model->model, clean_test->data); });
}

fiplab_status fiplab_evaluate_asr(const fiplab_model* model, const fiplab_dataset* triggered_test,
                                  const char* bookkeeping_json, double* out) {
    if (auto st = require_arg(model && triggered_test && bookkeeping_json && out, "args")) {
        return st;
    }
    return guarded([&] {
        const auto bk = bookkeeping_from_json(parse_json_arg(bookkeeping_json, "bookkeeping"));
        *out = fiplab::train::evaluate_asr(model->model, triggered_test->data, bk);
    });
}

fiplab_status fiplab_evaluate_lcr(const fiplab_model* model, const fiplab_dataset* triggered_test,
                                  const char* bookkeeping_json, double* out) {
    if (auto st = require_arg(model && triggered_test && bookkeeping_json && out, "args")) {
        return st;
    }
    return guarded([&] {
        const auto bk = bookkeeping_from_json(parse_json_arg(bookkeeping_json, "bookkeeping"));
        *out = fiplab::train::evaluate_lcr(model->model, triggered_test->data, bk);
    });
}

fiplab_status fiplab_smoothness(const fiplab_model* model, const fiplab_dataset* batch,
                                const char* options_json, char** report_json_out) {
    if (auto st = require_arg(model && batch && report_json_out, "model/batch/out")) {
        return st;
    }
    return guarded([&] {
        fiplab::smoothness::SmoothnessOptions options;
        if (options_json) {
            const json doc = parse_json_arg(options_json, "smoothness options");
            options.power_iters = doc.value("power_iters", options.power_iters);
            options.power_tol = doc.value("power_tol", options.power_tol);
            options.power_seed = doc.value("power_seed", options.power_seed);
            options.probes = doc.value("probes", options.probes);
            options.probe_seed = doc.value("probe_seed", options.probe_seed);
        }
        const fiplab::nn::Batch b = fiplab::data::to_batch(batch->data);
        const auto report = fiplab::smoothness::analyze(model->model, b, options);
        *report_json_out = dup_string(fiplab::smoothness::report_to_json(report).dump());
    });
}

namespace {

fiplab_status purify_common(const fiplab_model* model, const fiplab_dataset* val,
                            const char* cfg_json, fiplab_model** purified_out,
                            char** trace_csv_out, bool spectral_shift) {
    if (auto st = require_arg(model && val && cfg_json && purified_out, "args")) {
        return st;
    }
    return guarded([&] {
        const json doc = parse_json_arg(cfg_json, "purify config");
        const auto cfg = fip_config_from_json(doc);
        auto result = spectral_shift ? fiplab::fip::ffip_purify(model->model, val->data, cfg)
                                     : fiplab::fip::fip_purify(model->model, val->data, cfg);
        *purified_out = new fiplab_model{std::move(result.model)};
        if (trace_csv_out) {
            *trace_csv_out = dup_string(purify_trace_csv_text(result.trace));
        }
    });
}

}  // namespace

fiplab_status fiplab_fip_purify(const fiplab_model* model, const fiplab_dataset* val,
                                const char* cfg_json, fiplab_model** purified_out,
                                char** trace_csv_out) {
    return purify_common(model, val, cfg_json, purified_out, trace_csv_out, false);
}

fiplab_status fiplab_ffip_purify(const fiplab_model* model, const fiplab_dataset* val,
                                 const char* cfg_json, fiplab_model** purified_out,
                                 char** trace_csv_out) {
    return purify_common(model, val, cfg_json, purified_out, trace_csv_out, true);
}

fiplab_status fiplab_run(const char* config_path, const char* stages_csv, int force,
                         char** summary_json_out) {
    if (auto st = require_arg(config_path && stages_csv, "config/stages")) {
        return st;
    }
    return guarded([&] {
        auto summary = fiplab::experiment::run(config_path, stages_csv, force != 0);
        if (summary_json_out) {
            *summary_json_out = dup_string(summary.to_json().dump());
        }
    });
}

fiplab_status fiplab_diff_reports(const char* report_a_path, const char* report_b_path,
                                  char** text_out) {
    if (auto st = require_arg(report_a_path && report_b_path && text_out, "paths/out")) {
        return st;
    }
    return guarded([&] {
        *text_out = dup_string(
            fiplab::experiment::diff_report_files(report_a_path, report_b_path));
    });
}

}  // extern "C"
