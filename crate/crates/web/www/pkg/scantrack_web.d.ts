/* tslint:disable */
/* eslint-disable */

export function ici_curve(pa: Float64Array, pb: Float64Array, samples: number): string;

export function range_image_rgba(name: string, seed: bigint, scans: number): Uint8Array;

export function range_image_size(): string;

export function scenario_names(): string;

export function track_scenario(name: string, mode: string, seed: bigint, noise_sigma: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly ici_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly range_image_rgba: (a: number, b: number, c: bigint, d: number) => [number, number, number, number];
    readonly range_image_size: () => [number, number];
    readonly scenario_names: () => [number, number];
    readonly track_scenario: (a: number, b: number, c: number, d: number, e: bigint, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
