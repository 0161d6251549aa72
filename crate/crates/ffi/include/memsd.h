#ifndef MEMSD_H
#define MEMSD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum MemsdStatus {
  MEMSD_STATUS_OK = 0,
  // A required pointer argument was null.
  MEMSD_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  MEMSD_STATUS_INVALID_UTF8 = 2,
  // An argument or configuration violates a documented constraint.
  MEMSD_STATUS_INVALID_ARGUMENT = 3,
  MEMSD_STATUS_UNKNOWN_PRESET = 4,
  // No stable equilibrium: the voltage exceeds pull-in.
  MEMSD_STATUS_PULL_IN = 5,
  // The beam reached an electrode.
  MEMSD_STATUS_OVERCLOSURE = 6,
  // A numerical procedure failed to converge.
  MEMSD_STATUS_NUMERICAL = 7,
  // Spectral or resonance analysis could not produce a result.
  MEMSD_STATUS_ANALYSIS = 8,
  // A caller buffer is shorter than the data.
  MEMSD_STATUS_BUFFER_TOO_SMALL = 9,
  MEMSD_STATUS_IO = 10,
  // Internal panic, caught at the boundary.
  MEMSD_STATUS_PANIC = 11,
} MemsdStatus;

// Which electrode gap a query refers to.
typedef enum MemsdPort {
  MEMSD_PORT_INPUT = 0,
  MEMSD_PORT_OUTPUT = 1,
} MemsdPort;

typedef enum MemsdSpacing {
  MEMSD_SPACING_LINEAR = 0,
  MEMSD_SPACING_LOG = 1,
} MemsdSpacing;

// Opaque device handle.
typedef struct MemsdDevice MemsdDevice;

// Opaque swept-response handle.
typedef struct MemsdSweep MemsdSweep;

// Summary of a half-frequency doubler run.
typedef struct MemsdDoublingResult {
  // Drive frequency used, Hz.
  double f_in;
  // Largest component of the output current spectrum, Hz.
  double dominant_frequency;
  // FFT bin width, Hz.
  double bin_width;
  // Output current amplitude at 2·f_in, A.
  double output_amplitude;
  // Level of the f_in component relative to the largest, dB.
  double fundamental_db;
  // 1 if the response settled before the capture.
  int32_t settled;
} MemsdDoublingResult;

// Resonance fit of a sweep.
typedef struct MemsdResonanceFit {
  double peak_frequency;
  double peak_amplitude;
  double bandwidth;
  double q;
  double zeta;
} MemsdResonanceFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *memsd_version(void);

// Message for the last failed call on this thread; empty after a success.
// Valid until the next `memsd_*` call on the same thread.
const char *memsd_last_error_message(void);

// Creates a device from a built-in preset name (`"beam-1MHz"`,
// `"beam-455kHz"`).
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum MemsdStatus memsd_device_from_preset(const char *name, struct MemsdDevice **out);

// Creates a device from a JSON device configuration.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum MemsdStatus memsd_device_from_json(const char *json, struct MemsdDevice **out);

// Releases a device. Null is ignored.
//
// # Safety
// `device` must come from this library and not be used afterwards.
void memsd_device_free(struct MemsdDevice *device);

// Analytic natural frequency of mode `mode` (1-based), Hz.
//
// # Safety
// `device` must be a live handle; `out_hz` must be writable.
enum MemsdStatus memsd_device_natural_frequency(const struct MemsdDevice *device,
                                                uint32_t mode,
                                                double *out_hz);

// First-mode frequency from an `elements`-element FE model, Hz.
//
// # Safety
// `device` must be a live handle; `out_hz` must be writable.
enum MemsdStatus memsd_device_fem_frequency(const struct MemsdDevice *device,
                                            uint32_t elements,
                                            double *out_hz);

// Pull-in voltage with a voltage on one gap only, V.
//
// # Safety
// `device` must be a live handle; `out_volts` must be writable.
enum MemsdStatus memsd_device_pull_in_voltage(const struct MemsdDevice *device,
                                              enum MemsdPort port,
                                              double *out_volts);

// Doubler-wired run at `f_in` (Hz; pass 0 for f₁/2) capturing
// `fft_size` samples (a power of two; 0 for 32768) of steady output
// current, analysed with a Hann window.
//
// # Safety
// `device` must be a live handle; `out` must be writable.
enum MemsdStatus memsd_device_double(const struct MemsdDevice *device,
                                     double v_dc,
                                     double v_amp,
                                     double f_in,
                                     uint32_t fft_size,
                                     struct MemsdDoublingResult *out);

// Resonator-wired steady-state sweep of `n_points` drive frequencies on
// `[f_lo, f_hi]` Hz.
//
// # Safety
// `device` must be a live handle; `out` must be writable.
enum MemsdStatus memsd_device_sweep(const struct MemsdDevice *device,
                                    double v_dc,
                                    double v_amp,
                                    double f_lo,
                                    double f_hi,
                                    uint32_t n_points,
                                    enum MemsdSpacing spacing,
                                    struct MemsdSweep **out);

// Number of frequency points in a sweep (0 for null).
//
// # Safety
// `sweep` must be null or a live handle.
size_t memsd_sweep_len(const struct MemsdSweep *sweep);

// Copies the sweep columns into caller buffers of `capacity` elements.
// Any column pointer may be null to skip it.
//
// # Safety
// `sweep` must be a live handle; non-null buffers must hold `capacity`
// doubles.
enum MemsdStatus memsd_sweep_copy(const struct MemsdSweep *sweep,
                                  double *frequency,
                                  double *amplitude,
                                  double *phase,
                                  double *current_amplitude,
                                  size_t capacity);

// Number of sweep points that did not settle before measurement.
//
// # Safety
// `sweep` must be null or a live handle.
size_t memsd_sweep_unsettled(const struct MemsdSweep *sweep);

// Half-power resonance fit of the swept displacement amplitude.
//
// # Safety
// `sweep` must be a live handle; `out` must be writable.
enum MemsdStatus memsd_sweep_fit(const struct MemsdSweep *sweep, struct MemsdResonanceFit *out);

// Releases a sweep. Null is ignored.
//
// # Safety
// `sweep` must come from this library and not be used afterwards.
void memsd_sweep_free(struct MemsdSweep *sweep);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEMSD_H */
