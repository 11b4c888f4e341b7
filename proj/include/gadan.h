/* GA-DAN: geometry-aware unpaired image adaptation.
 *
 * C interface to the shared library. All functions return GADAN_OK (0) on
 * success or a nonzero error code; gadan_last_error() describes the most
 * recent failure on the calling thread. Strings returned through out
 * parameters are owned by the caller and released with gadan_string_free().
 */
#ifndef GADAN_H
#define GADAN_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#define GADAN_OK 0
#define GADAN_ERR_CONFIG 1
#define GADAN_ERR_IO 2
#define GADAN_ERR_EMPTY_DOMAIN 3
#define GADAN_ERR_SHAPE 4
#define GADAN_ERR_KIND 5
#define GADAN_ERR_SINGULAR 6
#define GADAN_ERR_NONFINITE 7
#define GADAN_ERR_VERSION 8
#define GADAN_ERR_INVALID_ARG 9
#define GADAN_ERR_CHECK_FAILED 10
#define GADAN_ERR_INTERNAL 11

/* Library version, e.g. "1.0.0". Static storage; do not free. */
const char* gadan_version(void);

/* Description of the last error on this thread. Static storage; valid until
 * the next gadan_* call on the thread. */
const char* gadan_last_error(void);

void gadan_string_free(char* s);

/* Run training as described by the key=value config file. When resume_ckpt
 * is non-NULL, training continues from that checkpoint (its embedded config
 * must match). On success *final_ckpt_out (optional) receives the path of
 * the final checkpoint. */
int gadan_train(const char* config_path, const char* resume_ckpt, char** final_ckpt_out);

/* A loaded checkpoint ready for inference. */
typedef struct gadan_session gadan_session;

int gadan_session_open(const char* checkpoint_path, gadan_session** out);
void gadan_session_close(gadan_session* session);

/* 1-to-1 adaptation of every image in input_dir; outputs <stem>.png files.
 * The spatial code for each image is drawn from the seeded normal stream. */
int gadan_adapt_dir(gadan_session* session, const char* input_dir, const char* output_dir,
                    unsigned long long seed);

/* 1-to-N adaptation; outputs <stem>_view<k>.png for k in [0, num_views). */
int gadan_adapt_multi_dir(gadan_session* session, const char* input_dir,
                          const char* output_dir, int num_views, unsigned long long seed);

/* Finite-difference gradient verification. *report_out (optional) receives
 * the per-component report text. Returns GADAN_OK when every component is
 * within tolerance, GADAN_ERR_CHECK_FAILED otherwise. */
int gadan_check_grads(unsigned long long seed, char** report_out);

/* Full property suite across all modules. Same conventions as above. */
int gadan_run_invariants(char** report_out);

#ifdef __cplusplus
}
#endif

#endif /* GADAN_H */
