/* tslint:disable */
/* eslint-disable */

/**
 * Runs the fourteen-node walkthrough. A non-finite or negative
 * `block_threshold` keeps the scenario's own value.
 */
export function case_study(detection: boolean, with_attacker: boolean, block_threshold: number): string;

/**
 * Names of the bundled scenarios.
 */
export function fixture_names(): string;

/**
 * Runs a bundled scenario with an explicit seed.
 */
export function run_scenario(name: string, seed: bigint, detection: boolean): string;

/**
 * Runs a bundled scenario, inverts the first `flips` monitor verdicts in
 * its trace and replays the result.
 */
export function tamper_and_replay(name: string, flips: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly case_study: (a: number, b: number, c: number) => [number, number];
    readonly fixture_names: () => [number, number];
    readonly run_scenario: (a: number, b: number, c: bigint, d: number) => [number, number];
    readonly tamper_and_replay: (a: number, b: number, c: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
