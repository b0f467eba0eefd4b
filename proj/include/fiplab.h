/*
 * fiplab — backdoor attack/defense laboratory for small classifiers.
 *
 * C interface of the shared library. All functions return fiplab_status;
 * on failure fiplab_last_error() holds a thread-local message describing
 * what went wrong. Handles are opaque and must be released with the
 * matching *_free function. Strings returned through char** out-parameters
 * are heap-allocated; release them with fiplab_string_free.
 *
 * Structured configuration crosses this boundary as JSON text; the schemas
 * match the corresponding sections of the experiment config file (see
 * README.md).
 */
#ifndef FIPLAB_H
#define FIPLAB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fiplab_status {
    FIPLAB_OK = 0,
    FIPLAB_ERR_INVALID_ARGUMENT = 1,
    FIPLAB_ERR_CONFIG = 2,
    FIPLAB_ERR_PREREQUISITE = 3,
    FIPLAB_ERR_NUMERIC = 4,
    FIPLAB_ERR_IO = 5,
    FIPLAB_ERR_FORMAT = 6,
    FIPLAB_ERR_INTERNAL = 7
} fiplab_status;

typedef struct fiplab_model fiplab_model;
typedef struct fiplab_dataset fiplab_dataset;

const char* fiplab_version(void);
/* Message of the most recent failure on this thread; empty string if none. */
const char* fiplab_last_error(void);
void fiplab_string_free(char* s);

/* ---- models ---------------------------------------------------------- */

/* widths = {input, hidden..., classes}, at least 2 entries. */
fiplab_status fiplab_model_create(const uint32_t* widths, size_t n_widths, uint64_t seed,
                                  fiplab_model** out);
fiplab_status fiplab_model_load(const char* path, fiplab_model** out);
fiplab_status fiplab_model_save(const fiplab_model* model, const char* path);
void fiplab_model_free(fiplab_model* model);
fiplab_status fiplab_model_param_count(const fiplab_model* model, uint64_t* out);
fiplab_status fiplab_model_class_count(const fiplab_model* model, uint32_t* out);

/* ---- datasets -------------------------------------------------------- */

fiplab_status fiplab_dataset_gen_synthetic(uint32_t class_count, uint32_t per_class,
                                           uint32_t image_size, double noise_level, uint64_t seed,
                                           fiplab_dataset** out);
fiplab_status fiplab_dataset_load_idx(const char* images_path, const char* labels_path,
                                      fiplab_dataset** out);
fiplab_status fiplab_dataset_save_idx(const fiplab_dataset* ds, const char* images_path,
                                      const char* labels_path);
void fiplab_dataset_free(fiplab_dataset* ds);
fiplab_status fiplab_dataset_size(const fiplab_dataset* ds, uint64_t* out);
fiplab_status fiplab_dataset_class_count(const fiplab_dataset* ds, uint32_t* out);

/*
 * plan_json example:
 *   {"trigger":{"kind":"patch","row":13,"col":13,"size":3,"value":1.0},
 *    "label_map":{"kind":"all2one","target":0},"poison_rate":0.1,"seed":7}
 * bookkeeping_json_out (optional) receives the poisoned indices with their
 * original and assigned labels.
 */
fiplab_status fiplab_dataset_poison(const fiplab_dataset* ds, const char* plan_json,
                                    fiplab_dataset** poisoned_out, char** bookkeeping_json_out);
/* Triggered copy of a clean test set for attack-success evaluation. */
fiplab_status fiplab_dataset_trigger_eval(const fiplab_dataset* clean_test, const char* plan_json,
                                          fiplab_dataset** triggered_out,
                                          char** bookkeeping_json_out);
/* split_json: {"fraction":0.01,"seed":5} or {"per_class":1,"seed":5} */
fiplab_status fiplab_dataset_split(const fiplab_dataset* ds, const char* split_json,
                                   fiplab_dataset** train_out, fiplab_dataset** val_out);

/* ---- training and evaluation ----------------------------------------- */

/*
 * cfg_json carries the training hyperparameters, e.g.
 *   {"lr":0.01,"momentum":0.9,"weight_decay":5e-4,"epochs":60,"batch_size":64,
 *    "lr_decay_factor":0.1,"lr_decay_period":40,"seed":1,"adaptive_eta_f":0}
 * The model handle is updated in place; trace_csv_out (optional) receives
 * the per-epoch trace in CSV form.
 */
fiplab_status fiplab_train(fiplab_model* model, const fiplab_dataset* train_set,
                           const char* cfg_json, char** trace_csv_out);

fiplab_status fiplab_evaluate_acc(const fiplab_model* model, const fiplab_dataset* clean_test,
                                  double* out);
fiplab_status fiplab_evaluate_asr(const fiplab_model* model, const fiplab_dataset* triggered_test,
                                  const char* bookkeeping_json, double* out);
fiplab_status fiplab_evaluate_lcr(const fiplab_model* model, const fiplab_dataset* triggered_test,
                                  const char* bookkeeping_json, double* out);

/* ---- smoothness ------------------------------------------------------- */

/*
 * options_json (all keys optional):
 *   {"power_iters":200,"power_tol":1e-6,"power_seed":1,
 *    "probes":100,"probe_seed":2}
 * The Hessian is evaluated on the given batch dataset with its stored
 * labels. report_json_out receives the smoothness report.
 */
fiplab_status fiplab_smoothness(const fiplab_model* model, const fiplab_dataset* batch,
                                const char* options_json, char** report_json_out);

/* ---- purification ----------------------------------------------------- */

/*
 * cfg_json: {"eta_f":0.001,"eta_r":5,"lr":0.01,"epochs":50,
 *            "lr_decay_factor":0.1,"lr_decay_period":40,
 *            "trace_grad_period":10,"batch_size":64,"seed":3}
 * purified_out receives a new model handle; trace_csv_out (optional) the
 * per-iteration purification trace.
 */
fiplab_status fiplab_fip_purify(const fiplab_model* model, const fiplab_dataset* val,
                                const char* cfg_json, fiplab_model** purified_out,
                                char** trace_csv_out);
fiplab_status fiplab_ffip_purify(const fiplab_model* model, const fiplab_dataset* val,
                                 const char* cfg_json, fiplab_model** purified_out,
                                 char** trace_csv_out);

/* ---- experiment pipeline ---------------------------------------------- */

/*
 * stages_csv: comma-separated subset of
 *   gen-data,train,analyze,purify,report
 * or "all". Stages run in pipeline order; completed stages are skipped
 * unless force is nonzero. summary_json_out (optional) receives the stage
 * outcomes and, once the report stage has run, the report itself.
 */
fiplab_status fiplab_run(const char* config_path, const char* stages_csv, int force,
                         char** summary_json_out);
fiplab_status fiplab_diff_reports(const char* report_a_path, const char* report_b_path,
                                  char** text_out);

#ifdef __cplusplus
}
#endif

#endif /* FIPLAB_H */
