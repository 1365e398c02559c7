/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_livetokenizer_free: (a: number, b: number) => void;
export const __wbg_scenedemo_free: (a: number, b: number) => void;
export const field_grid: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
export const livetokenizer_actions: (a: number) => [number, number, number, number];
export const livetokenizer_clear: (a: number) => void;
export const livetokenizer_key_down: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const livetokenizer_key_up: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const livetokenizer_new: () => number;
export const livetokenizer_scroll: (a: number, b: number, c: number) => [number, number, number, number];
export const scenedemo_height: (a: number) => number;
export const scenedemo_locate_at: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const scenedemo_new: (a: bigint, b: number) => number;
export const scenedemo_rgba: (a: number) => [number, number];
export const scenedemo_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
