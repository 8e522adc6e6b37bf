/* tslint:disable */
/* eslint-disable */

/**
 * Q per mechanism (gas, thermoelastic, surface, eddy, dac_rms), the
 * combined Q, then the optical-spring `[rel, δf_hz]`.
 */
export function budget(pressure_torr: number, p_cav: number, detuning: number): Float64Array;

/**
 * Closed-loop spectrum of the apparatus with a catching servo at `f_ugf_hz`,
 * SN frequency `f_sn_hz` and white sensor noise `sensor_asd` (rad/√Hz).
 *
 * Returns `[f, quantum, classical, total]` concatenated, each `n` long.
 * `readout` selects the readout observable instead of the angle.
 */
export function closed_loop_spectrum(f_ugf_hz: number, f_sn_hz: number, sensor_asd: number, readout: boolean, n: number): Float64Array;

/**
 * Self-gravity integral on `n` points of `[-half, half]` (units of σ_x)
 * for squeeze ratio `c`, followed by the Gaussian fit `[A, b1]`.
 */
export function self_gravity(c: number, half: number, n: number, slice: boolean): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly budget: (a: number, b: number, c: number) => [number, number, number, number];
    readonly closed_loop_spectrum: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly self_gravity: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
