#ifndef THERMOCELL_H
#define THERMOCELL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tc_status {
    TC_OK = 0,
    TC_ERR_NULL = 1,         /* null handle or output pointer */
    TC_ERR_DOMAIN = 2,       /* argument outside a model's domain */
    TC_ERR_CONFIG = 3,       /* schema violation or infeasible parameters */
    TC_ERR_CALIBRATION = 4,
    TC_ERR_FIT = 5,
    TC_ERR_MEASUREMENT = 6,
    TC_ERR_IO = 7,
    TC_ERR_INTERNAL = 8
} tc_status;

/* Message for the last failing call on this thread; never NULL. */
const char* tc_last_error(void);
const char* tc_version(void);

/* Writes the experiment catalog. *needed gets the size including the NUL;
   buf may be NULL to query it. */
tc_status tc_list_experiments(char* buf, size_t cap, size_t* needed);

typedef struct tc_run_options {
    const char* out_dir;   /* NULL: SIM_OUT_DIR, then the config's output_dir */
    int has_seed;          /* nonzero: seed overrides the config */
    uint64_t seed;
} tc_run_options;

/* Loads a config file, runs its experiment and writes CSVs plus
   summary.json. *all_pass is 1 when every check passed. Nothing is
   written when the config or the run fails. */
tc_status tc_run_config_file(const char* path, const tc_run_options* opt, int* all_pass);

/* ---- array handle ---- */

typedef struct tc_array tc_array;

/* config_text: INI text as accepted by the CLI (may be NULL for defaults;
   the [experiment] section is optional here). */
tc_status tc_array_create(const char* config_text, uint64_t seed, tc_array** out);
void tc_array_destroy(tc_array* a);

tc_status tc_array_shape(const tc_array* a, int* rows, int* cols);
tc_status tc_array_time(const tc_array* a, double* seconds);
tc_status tc_array_force_temperature(tc_array* a, double t_c);
tc_status tc_array_release_force(tc_array* a);
/* Calibrates every cell at the forced temperature; *n_failed counts cells
   whose preload fell outside the counter. */
tc_status tc_array_calibrate(tc_array* a, double t_c, int* n_failed);
tc_status tc_array_set_setpoint(tc_array* a, double t_c);
tc_status tc_array_set_cell_setpoint(tc_array* a, int cell, double t_c);
tc_status tc_array_tick(tc_array* a, int64_t cycles);
tc_status tc_array_true_temperature(const tc_array* a, int cell, double* t_c);
tc_status tc_array_read_temperature(tc_array* a, int cell, double* t_c);
tc_status tc_array_duty_code(const tc_array* a, int cell, int* code);
tc_status tc_array_cal_preload(const tc_array* a, int cell, int* preload);

/* ---- stateless blocks ---- */

typedef struct tc_conversion {
    double coeff_mag;     /* on the 7-bit grid */
    int coeff_sign;
    int cal_preload;
    int target_preload;
    int subtract;         /* 0: plain digitization */
    int out_count;        /* results */
    int n_charge;
    int n_discharge;
    int saturated;
} tc_conversion;

/* Default channel (9 bits, 10 MHz). */
tc_status tc_madc_convert(tc_conversion* conv, double i_in, double i_ref);
/* Nominal PWM duty for a 12-bit code. */
tc_status tc_pwm_duty(int code, double* duty);

#ifdef __cplusplus
}
#endif

#endif
