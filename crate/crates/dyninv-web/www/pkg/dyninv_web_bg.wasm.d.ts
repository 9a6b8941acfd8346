/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_perturbationresult_free: (a: number, b: number) => void;
export const __wbg_sweepresult_free: (a: number, b: number) => void;
export const __wbg_traceresult_free: (a: number, b: number) => void;
export const bandwidth_sweep: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const perturbation: (a: number, b: number, c: number, d: number) => [number, number, number];
export const perturbationresult_design: (a: number) => [number, number];
export const perturbationresult_deviation_linf: (a: number) => number;
export const perturbationresult_simulated: (a: number) => [number, number];
export const perturbationresult_time: (a: number) => [number, number];
export const step_response: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const sweepresult_design_l2: (a: number) => [number, number];
export const sweepresult_design_linf: (a: number) => [number, number];
export const sweepresult_omegas: (a: number) => [number, number];
export const sweepresult_simulated_l2: (a: number) => [number, number];
export const sweepresult_simulated_linf: (a: number) => [number, number];
export const traceresult_actuator: (a: number) => [number, number];
export const traceresult_error: (a: number) => [number, number];
export const traceresult_reference: (a: number) => [number, number];
export const traceresult_state: (a: number) => [number, number];
export const traceresult_time: (a: number) => [number, number];
export const traceresult_warnings: (a: number) => [number, number];
export const traceresult_max_error: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
