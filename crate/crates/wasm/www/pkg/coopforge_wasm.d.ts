/* tslint:disable */
/* eslint-disable */

/**
 * RGBA pixels plus their dimensions.
 */
export class Frame {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly height: number;
    readonly pixels: Uint8Array;
    readonly width: number;
}

/**
 * Eight-mode ring X against a rotated, scaled ring Y, with a model training on them.
 */
export class RingDemo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Fréchet distances, cycle error and mode coverage as a short text report.
     */
    evaluate(): string;
    constructor(rotation: number, scale: number, batch: number, seed: number);
    /**
     * Source | translation | revision scatter panels for both directions.
     */
    render(): Frame;
    train(n: number): void;
    /**
     * Completed training iterations.
     */
    readonly iteration: number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_frame_free: (a: number, b: number) => void;
    readonly __wbg_ringdemo_free: (a: number, b: number) => void;
    readonly frame_height: (a: number) => number;
    readonly frame_pixels: (a: number) => [number, number];
    readonly frame_width: (a: number) => number;
    readonly ringdemo_evaluate: (a: number) => [number, number, number, number];
    readonly ringdemo_iteration: (a: number) => number;
    readonly ringdemo_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly ringdemo_render: (a: number) => [number, number, number];
    readonly ringdemo_train: (a: number, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
