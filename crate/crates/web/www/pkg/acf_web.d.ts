/* tslint:disable */
/* eslint-disable */

/**
 * Accumulates raw input and re-tokenizes it on every event.
 */
export class LiveTokenizer {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Actions so far as a JSON array of labels.
     */
    actions(): string;
    clear(): void;
    key_down(key: string, t_ms: number): string;
    key_up(key: string, t_ms: number): string;
    constructor();
    /**
     * Positive `dy` scrolls up.
     */
    scroll(dy: number, t_ms: number): string;
}

/**
 * A synthetic window whose last button repeats the first one, so a click on
 * either finds two matches.
 */
export class SceneDemo {
    free(): void;
    [Symbol.dispose](): void;
    height(): number;
    /**
     * Crops the button under `(x, y)` and locates it on the whole screen.
     * JSON `{"patch": rect | null, "matches": [...]}`.
     */
    locate_at(x: number, y: number, threshold: number): string;
    constructor(seed: bigint, buttons: number);
    /**
     * Screenshot as RGBA bytes for `ImageData`.
     */
    rgba(): Uint8Array;
    width(): number;
}

/**
 * Samples the field of `targets_json` (`[{"rect":{x,y,w,h},"confidence"}]`)
 * on a `cols` x `rows` grid from the origin. Flat `[x, y, dx, dy, ...]`.
 */
export function field_grid(targets_json: string, cols: number, rows: number, step: number, gain: number, softening_px: number, max_pull_px: number, dead_zone: boolean): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_livetokenizer_free: (a: number, b: number) => void;
    readonly __wbg_scenedemo_free: (a: number, b: number) => void;
    readonly field_grid: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
    readonly livetokenizer_actions: (a: number) => [number, number, number, number];
    readonly livetokenizer_clear: (a: number) => void;
    readonly livetokenizer_key_down: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly livetokenizer_key_up: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly livetokenizer_new: () => number;
    readonly livetokenizer_scroll: (a: number, b: number, c: number) => [number, number, number, number];
    readonly scenedemo_height: (a: number) => number;
    readonly scenedemo_locate_at: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly scenedemo_new: (a: bigint, b: number) => number;
    readonly scenedemo_rgba: (a: number) => [number, number];
    readonly scenedemo_width: (a: number) => number;
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
