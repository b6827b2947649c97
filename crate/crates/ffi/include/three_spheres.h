#ifndef THREE_SPHERES_H
#define THREE_SPHERES_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsStatus {
  TsStatus_Ok = 0,
  TsStatus_NullPointer = 1,
  TsStatus_InvalidArgument = 2,
  TsStatus_RegimeMismatch = 3,
  TsStatus_NonConvergence = 4,
  TsStatus_BlowUp = 5,
  TsStatus_OutsideDomain = 6,
  TsStatus_Degenerate = 7,
  TsStatus_BufferTooSmall = 8,
  TsStatus_Panic = 9,
  TsStatus_Other = 10,
} TsStatus;

typedef enum TsBoundMode {
  TsBoundMode_ClassicalSubN = 0,
  TsBoundMode_ClassicalN = 1,
  TsBoundMode_BorderN = 2,
  TsBoundMode_AHarmonicN = 3,
  TsBoundMode_PGtN = 4,
} TsBoundMode;

typedef enum TsPreset {
  TsPreset_PLaplace = 0,
  TsPreset_WeightedPLaplace = 1,
  TsPreset_RiccatiExtremalPlus = 2,
  TsPreset_RiccatiExtremalMinus = 3,
} TsPreset;

typedef enum TsEnvelope {
  TsEnvelope_GlobalDecay = 0,
  TsEnvelope_Constant = 1,
} TsEnvelope;

typedef enum TsScheme {
  TsScheme_Picard = 0,
  TsScheme_DampedNewton = 1,
} TsScheme;

typedef enum TsNodeKind {
  TsNodeKind_Interior = 0,
  TsNodeKind_Band = 1,
  TsNodeKind_Exterior = 2,
} TsNodeKind;

typedef enum TsGeometry {
  TsGeometry_BallMax = 0,
  TsGeometry_SphereMax = 1,
} TsGeometry;

/**
 * Ball extrema `M(r)`, `m(r)`.
 */
typedef struct TsBallProfile TsBallProfile;

/**
 * Planar grid solution.
 */
typedef struct TsGrid TsGrid;

/**
 * Radial profile `(r, u, u')` on a mesh.
 */
typedef struct TsRadialProfile TsRadialProfile;

typedef struct TsParams {
  uint32_t n;
  double p;
  double a0;
  double a1;
  double b1;
} TsParams;

/**
 * Boundary data callback for [`ts_fdm_solve`].
 */
typedef double (*TsBoundaryFn)(double x, double y, void *user);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message, NUL-terminated, into
 * `buf` and stores the full message length (without NUL) in `len_out`.
 *
 * # Safety
 * `buf` must be valid for `cap` bytes or null with `cap == 0`.
 */
enum TsStatus ts_last_error_message(char *buf, size_t cap, size_t *len_out);

/**
 * Classical weight for `p <= n`.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
enum TsStatus ts_classical_weight(const struct TsParams *params,
                                  double r1,
                                  double r2,
                                  double r3,
                                  double *out);

/**
 * `exp(-C K)` for the formula modes.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
enum TsStatus ts_lambda_formula(enum TsBoundMode mode,
                                const struct TsParams *params,
                                double r1,
                                double r2,
                                double r3,
                                double c,
                                double *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum TsStatus ts_lambda_infinity(double c, double *out);

/**
 * # Safety
 * `contradiction` must be a valid pointer.
 */
enum TsStatus ts_liouville_check(double m_bound,
                                 double lambda_inf,
                                 double m_r1,
                                 double m_r2,
                                 bool *contradiction);

/**
 * Samples `a + b r^α` (or `a - b log r`) on a geometric mesh.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
enum TsStatus ts_radial_fundamental(const struct TsParams *params,
                                    double a,
                                    double b,
                                    double r_in,
                                    double r_out,
                                    size_t steps,
                                    struct TsRadialProfile **out);

/**
 * Samples the extremal-drift solution; `sign` is +1 or -1.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
enum TsStatus ts_radial_extremal(const struct TsParams *params,
                                 int32_t sign,
                                 double u0,
                                 double scale,
                                 double r_in,
                                 double r_out,
                                 size_t steps,
                                 struct TsRadialProfile **out);

/**
 * Integrates the radial equation of a preset from `(u_in, du_in)` at `r_in`.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
enum TsStatus ts_radial_ivp(const struct TsParams *params,
                            enum TsPreset preset,
                            enum TsEnvelope envelope,
                            double r_in,
                            double u_in,
                            double du_in,
                            double r_out,
                            size_t steps,
                            struct TsRadialProfile **out);

/**
 * Shooting solve with `u(r_in) = u_in`, `u(r_out) = u_out`.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
enum TsStatus ts_radial_bvp(const struct TsParams *params,
                            enum TsPreset preset,
                            enum TsEnvelope envelope,
                            double r_in,
                            double u_in,
                            double r_out,
                            double u_out,
                            size_t steps,
                            double tol,
                            struct TsRadialProfile **out);

/**
 * # Safety
 * `h` must be a live handle and `len` a valid pointer.
 */
enum TsStatus ts_radial_len(const struct TsRadialProfile *h, size_t *len);

/**
 * Copies up to `cap` mesh points; any of `r`, `u`, `du` may be null.
 *
 * # Safety
 * Non-null arrays must hold `cap` doubles.
 */
enum TsStatus ts_radial_copy(const struct TsRadialProfile *h,
                             double *r,
                             double *u,
                             double *du,
                             size_t cap);

/**
 * # Safety
 * `h` must come from a `ts_radial_*` constructor and not be used afterwards.
 */
void ts_radial_free(struct TsRadialProfile *h);

/**
 * Solves the Dirichlet problem on a disk for a planar preset.
 *
 * # Safety
 * `params` and `out` must be valid; `data` must be callable with `user`
 * from the calling thread.
 */
enum TsStatus ts_fdm_solve(const struct TsParams *params,
                           enum TsPreset preset,
                           enum TsEnvelope envelope,
                           double cx,
                           double cy,
                           double radius,
                           double h,
                           double epsilon,
                           double tol,
                           size_t max_iter,
                           enum TsScheme scheme,
                           TsBoundaryFn data,
                           void *user,
                           size_t *iterations,
                           struct TsGrid **out);

/**
 * # Safety
 * `g` must be a live handle and `len` a valid pointer.
 */
enum TsStatus ts_grid_len(const struct TsGrid *g, size_t *len);

/**
 * Position, value and kind of node `idx`.
 *
 * # Safety
 * `g` must be live; the out-pointers must be valid.
 */
enum TsStatus ts_grid_node(const struct TsGrid *g,
                           size_t idx,
                           double *x,
                           double *y,
                           double *u,
                           enum TsNodeKind *kind);

/**
 * # Safety
 * `g` must come from [`ts_fdm_solve`] and not be used afterwards.
 */
void ts_grid_free(struct TsGrid *g);

/**
 * Ball extrema of a radial profile about the origin.
 *
 * # Safety
 * `h` must be live, `radii` must hold `n_radii` doubles, `out` valid.
 */
enum TsStatus ts_ball_profile_from_radial(const struct TsRadialProfile *h,
                                          const double *radii,
                                          size_t n_radii,
                                          enum TsGeometry geometry,
                                          struct TsBallProfile **out);

/**
 * Ball extrema of a grid solution about `(cx, cy)`.
 *
 * # Safety
 * `g` must be live, `radii` must hold `n_radii` doubles, `out` valid.
 */
enum TsStatus ts_ball_profile_from_grid(const struct TsGrid *g,
                                        double cx,
                                        double cy,
                                        const double *radii,
                                        size_t n_radii,
                                        enum TsGeometry geometry,
                                        struct TsBallProfile **out);

/**
 * `M(r)` and `m(r)` at a listed radius.
 *
 * # Safety
 * `b` must be live; out-pointers valid.
 */
enum TsStatus ts_ball_profile_extrema(const struct TsBallProfile *b,
                                      double r,
                                      double *max,
                                      double *min);

/**
 * Empirical λ*; `all` is set when every λ works and `value` is then 1.
 *
 * # Safety
 * `b` must be live; out-pointers valid.
 */
enum TsStatus ts_lambda_star(const struct TsBallProfile *b,
                             double r1,
                             double r2,
                             double r3,
                             double *value,
                             bool *all);

/**
 * Three-spheres check. Classical modes ignore `c`; formula modes use
 * `lambda_formula(c)`. `dual` checks the minimum form on `m`.
 *
 * # Safety
 * `b` must be live; out-pointers valid.
 */
enum TsStatus ts_check_three_spheres(const struct TsBallProfile *b,
                                     enum TsBoundMode mode,
                                     double c,
                                     double r1,
                                     double r2,
                                     double r3,
                                     bool dual,
                                     double *margin,
                                     bool *passed);

/**
 * # Safety
 * `b` must come from a `ts_ball_profile_*` constructor and not be used afterwards.
 */
void ts_ball_profile_free(struct TsBallProfile *b);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THREE_SPHERES_H */
