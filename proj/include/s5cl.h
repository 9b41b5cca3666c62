#ifndef S5CL_H
#define S5CL_H

/* C interface to the s5cl training library.
 *
 * All entry points return an s5cl_status; on failure the thread-local message
 * from s5cl_last_error() describes what went wrong. Strings handed back
 * through char** are heap-allocated and must be released with
 * s5cl_free_string(). Config text uses the same flat key=value (or JSON)
 * format as the command-line tool; pass "" to run with defaults.
 */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum s5cl_status {
    S5CL_OK = 0,
    S5CL_INVALID_ARGUMENT = 1,
    S5CL_IO_ERROR = 2,
    S5CL_RUNTIME_ERROR = 3
} s5cl_status;

const char* s5cl_version(void);

/* Message for the most recent failure on the calling thread; "" if none. */
const char* s5cl_last_error(void);

void s5cl_free_string(char* text);

/* Runners. seed_override: negative keeps the config's seed. out_dir: NULL or
 * "" keeps the config's output directory. The summary of the finished run is
 * returned as a JSON string in *summary_json. */
s5cl_status s5cl_run_generate(const char* config_text, long long seed_override,
                              const char* out_dir, char** summary_json);
s5cl_status s5cl_run_train(const char* config_text, long long seed_override,
                           const char* out_dir, char** summary_json);
s5cl_status s5cl_run_evaluate(const char* config_text, long long seed_override,
                              const char* out_dir, char** summary_json);
s5cl_status s5cl_run_sweep(const char* config_text, long long seed_override,
                           const char* out_dir, int jobs, char** summary_json);

/* Dataset file handle (the .s5ds container written by the generate runner). */
typedef struct s5cl_dataset s5cl_dataset;

s5cl_status s5cl_dataset_open(const char* path, s5cl_dataset** out);
s5cl_status s5cl_dataset_info(const s5cl_dataset* dataset, char** info_json);
void s5cl_dataset_free(s5cl_dataset* dataset);

#ifdef __cplusplus
}
#endif

#endif /* S5CL_H */
