/* tslint:disable */
/* eslint-disable */

export class Scene {
    free(): void;
    [Symbol.dispose](): void;
    constructor(n: number, side: number, exponent: number, seed: number);
    /**
     * JSON `{side, points: [[x, y, w], ...]}`.
     */
    points(): string;
    /**
     * JSON with the true box weight and, per sample, estimate, count, mass and discrepancy.
     */
    query(x0: number, y0: number, x1: number, y1: number): string;
    /**
     * JSON `{tau, aware: [[x, y], ...], obliv: [[x, y], ...]}`.
     */
    resample(s: number, seed: number): string;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_scene_free: (a: number, b: number) => void;
    readonly scene_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly scene_points: (a: number) => [number, number];
    readonly scene_query: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly scene_resample: (a: number, b: number, c: number) => [number, number, number, number];
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
