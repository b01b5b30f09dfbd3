/* tslint:disable */
/* eslint-disable */

export class Sim {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Runs up to `k` SGD steps, stopping early at the configured horizon.
     */
    advance(k: number): bigint;
    blocks_svg(): string;
    boundary_svg(cells: number): string;
    done(): boolean;
    /**
     * Current metrics row as JSON.
     */
    metrics_json(): string;
    /**
     * `config` uses the same `key = value` lines as the CLI config files.
     */
    constructor(config: string);
    scatter_svg(): string;
}

/**
 * Two panels: P(|X| ≤ ε) between its small-ball bounds on (0, eps_max], and
 * the Mills ratio P(X ≥ t)/φ(t) between t/(1+t²) and 1/t on [0.2, t_max].
 */
export function gaussian_bounds_svg(eps_max: number, t_max: number): string;

/**
 * log10 ĝ_μ against log10 N: quadrature curve, Monte Carlo points with 2σ
 * bars, and an N^−3 line through the N = 5 value for comparison.
 */
export function margin_curve_svg(n_samples: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_sim_free: (a: number, b: number) => void;
    readonly gaussian_bounds_svg: (a: number, b: number) => [number, number];
    readonly margin_curve_svg: (a: number, b: bigint) => [number, number, number, number];
    readonly sim_advance: (a: number, b: number) => [bigint, number, number];
    readonly sim_blocks_svg: (a: number) => [number, number];
    readonly sim_boundary_svg: (a: number, b: number) => [number, number];
    readonly sim_done: (a: number) => number;
    readonly sim_metrics_json: (a: number) => [number, number, number, number];
    readonly sim_new: (a: number, b: number) => [number, number, number];
    readonly sim_scatter_svg: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
