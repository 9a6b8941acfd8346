/* tslint:disable */
/* eslint-disable */

/**
 * Free response from an initial roll-rate offset, paired with the analytic
 * design error trajectory.
 */
export class PerturbationResult {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly design: Float64Array;
    readonly deviation_linf: number;
    readonly simulated: Float64Array;
    readonly time: Float64Array;
}

/**
 * Bandwidth sweep of the perturbation study.
 */
export class SweepResult {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly design_l2: Float64Array;
    readonly design_linf: Float64Array;
    readonly omegas: Float64Array;
    readonly simulated_l2: Float64Array;
    readonly simulated_linf: Float64Array;
}

/**
 * Closed-loop trace, degree-scaled, ready for plotting.
 */
export class TraceResult {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly actuator: Float64Array;
    readonly error: Float64Array;
    readonly max_error: number;
    readonly reference: Float64Array;
    readonly state: Float64Array;
    readonly time: Float64Array;
    readonly warnings: string;
}

export function bandwidth_sweep(controller_name: string, omegas: Float64Array, perturbation_deg: number): SweepResult;

export function perturbation(controller_name: string, omega: number, perturbation_deg: number): PerturbationResult;

/**
 * Run a roll-rate step response.
 *
 * `dt_control_ms <= 0` selects continuous control; positive values hold the
 * command for that many milliseconds.
 */
export function step_response(controller_name: string, omega: number, amplitude_deg: number, dt_control_ms: number, t_final: number): TraceResult;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_perturbationresult_free: (a: number, b: number) => void;
    readonly __wbg_sweepresult_free: (a: number, b: number) => void;
    readonly __wbg_traceresult_free: (a: number, b: number) => void;
    readonly bandwidth_sweep: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly perturbation: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly perturbationresult_design: (a: number) => [number, number];
    readonly perturbationresult_deviation_linf: (a: number) => number;
    readonly perturbationresult_simulated: (a: number) => [number, number];
    readonly perturbationresult_time: (a: number) => [number, number];
    readonly step_response: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly sweepresult_design_l2: (a: number) => [number, number];
    readonly sweepresult_design_linf: (a: number) => [number, number];
    readonly sweepresult_omegas: (a: number) => [number, number];
    readonly sweepresult_simulated_l2: (a: number) => [number, number];
    readonly sweepresult_simulated_linf: (a: number) => [number, number];
    readonly traceresult_actuator: (a: number) => [number, number];
    readonly traceresult_error: (a: number) => [number, number];
    readonly traceresult_reference: (a: number) => [number, number];
    readonly traceresult_state: (a: number) => [number, number];
    readonly traceresult_time: (a: number) => [number, number];
    readonly traceresult_warnings: (a: number) => [number, number];
    readonly traceresult_max_error: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
