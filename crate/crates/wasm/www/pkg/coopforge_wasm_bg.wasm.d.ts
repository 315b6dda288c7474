/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_frame_free: (a: number, b: number) => void;
export const __wbg_ringdemo_free: (a: number, b: number) => void;
export const frame_height: (a: number) => number;
export const frame_pixels: (a: number) => [number, number];
export const frame_width: (a: number) => number;
export const ringdemo_evaluate: (a: number) => [number, number, number, number];
export const ringdemo_iteration: (a: number) => number;
export const ringdemo_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const ringdemo_render: (a: number) => [number, number, number];
export const ringdemo_train: (a: number, b: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
