/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_sim_free: (a: number, b: number) => void;
export const gaussian_bounds_svg: (a: number, b: number) => [number, number];
export const margin_curve_svg: (a: number, b: bigint) => [number, number, number, number];
export const sim_advance: (a: number, b: number) => [bigint, number, number];
export const sim_blocks_svg: (a: number) => [number, number];
export const sim_boundary_svg: (a: number, b: number) => [number, number];
export const sim_done: (a: number) => number;
export const sim_metrics_json: (a: number) => [number, number, number, number];
export const sim_new: (a: number, b: number) => [number, number, number];
export const sim_scatter_svg: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
