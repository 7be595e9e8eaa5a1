/* tslint:disable */
/* eslint-disable */

/**
 * `n` design points projected onto two parameters, as interleaved `(u0, u1)`
 * pairs in unit coordinates. `design` is `lhs` or `random`.
 */
export function design_points(design: string, n: number, seed: number, a0: string, a1: string): Float64Array;

/**
 * Names of the procedural meshes, as a JSON array.
 */
export function mesh_names(): string;

/**
 * Renders `mesh` at `params` into a square RGBA buffer for `ImageData`.
 */
export function render_rgba(mesh: string, params: Float64Array, resolution: number): Uint8Array;

/**
 * The scene space as JSON: `[{name, kind, low, high, default}, ...]`.
 */
export function space_json(): string;

/**
 * Class-0 probability of a synthetic oracle over a `steps x steps` grid of
 * two parameters, row-major with `a0` varying slowest. Other parameters sit
 * at their defaults. `kind` is `linear` or `quadratic`.
 */
export function sweep_probs(kind: string, oracle_seed: number, a0: string, a1: string, steps: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly design_points: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly mesh_names: () => [number, number];
    readonly render_rgba: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly space_json: () => [number, number];
    readonly sweep_probs: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
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
