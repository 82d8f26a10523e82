/** Session view state.
 *
 * Run history is append-only: a completed run's parameters and cluster list
 * are frozen at submit time, so editing the draft afterwards can never
 * change what an earlier run displays. Per-run display state (which
 * clusters are visible, points vs shell) lives on the run entry itself and
 * survives switching between runs.
 */

import { ClusterRequest, ClusterRow } from "./api";

export interface ParamDraft {
  cutoff: number;
  eps: number;
  minWeight: number;
  depth: number;
}

export type DisplayMode = { kind: "points" } | { kind: "shell"; depth: number };

export interface RunEntry {
  readonly runId: string;
  readonly params: Readonly<ClusterRequest>;
  readonly nClusters: number;
  readonly rows: readonly ClusterRow[];
  readonly clusterIds: ReadonlySet<number>;
  /** mutable display selection, constrained to clusterIds */
  visible: Set<number>;
  display: Map<number, DisplayMode>;
}

export interface CameraPose {
  theta: number;
  phi: number;
  radius: number;
  target: [number, number, number];
}

export type StateEvent =
  | { kind: "volume"; volumeId: string }
  | { kind: "draft" }
  | { kind: "runs" }
  | { kind: "selection"; runId: string }
  | { kind: "budget"; value: number };

export class ViewStore {
  volumeId: string | null = null;
  draft: ParamDraft = { cutoff: 0, eps: 1.7, minWeight: 70, depth: 1 };
  decimationBudget = 50_000;
  camera: CameraPose = { theta: 0.5, phi: 1.1, radius: 120, target: [0, 0, 0] };

  private runs: RunEntry[] = [];
  private activeRunId: string | null = null;
  private listeners = new Set<(ev: StateEvent) => void>();

  subscribe(fn: (ev: StateEvent) => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private emit(ev: StateEvent): void {
    for (const fn of this.listeners) fn(ev);
  }

  setVolume(volumeId: string): void {
    this.volumeId = volumeId;
    this.runs = [];
    this.activeRunId = null;
    this.emit({ kind: "volume", volumeId });
  }

  setDraft(patch: Partial<ParamDraft>): void {
    this.draft = { ...this.draft, ...patch };
    this.emit({ kind: "draft" });
  }

  setBudget(value: number): void {
    if (!Number.isFinite(value) || value < 1) {
      throw new Error(`decimation budget must be a positive count, got ${value}`);
    }
    this.decimationBudget = Math.floor(value);
    this.emit({ kind: "budget", value: this.decimationBudget });
  }

  /** Record a completed run. Params are snapshotted, never aliased to the draft. */
  appendRun(runId: string, params: ClusterRequest, rows: ClusterRow[]): RunEntry {
    if (this.runs.some((r) => r.runId === runId)) {
      throw new Error(`run ${runId} already recorded`);
    }
    const entry: RunEntry = {
      runId,
      params: Object.freeze({ ...params }),
      nClusters: rows.length,
      rows: Object.freeze(rows.map((r) => ({ ...r }))),
      clusterIds: new Set(rows.map((r) => r.id)),
      visible: new Set(),
      display: new Map(),
    };
    this.runs.push(entry);
    this.activeRunId = runId;
    this.emit({ kind: "runs" });
    this.emit({ kind: "selection", runId });
    return entry;
  }

  get runHistory(): readonly RunEntry[] {
    return this.runs;
  }

  get activeRun(): RunEntry | null {
    return this.runs.find((r) => r.runId === this.activeRunId) ?? null;
  }

  selectRun(runId: string): RunEntry {
    const entry = this.runs.find((r) => r.runId === runId);
    if (!entry) throw new Error(`unknown run ${runId}`);
    this.activeRunId = runId;
    this.emit({ kind: "selection", runId });
    return entry;
  }

  /** Toggle cluster visibility on the active run. Unknown ids are rejected. */
  toggleVisible(clusterId: number, on: boolean): void {
    const run = this.activeRun;
    if (!run) throw new Error("no active run");
    if (!run.clusterIds.has(clusterId)) {
      throw new Error(`cluster ${clusterId} is not part of run ${run.runId}`);
    }
    if (on) run.visible.add(clusterId);
    else run.visible.delete(clusterId);
    this.emit({ kind: "selection", runId: run.runId });
  }

  setDisplay(clusterId: number, mode: DisplayMode): void {
    const run = this.activeRun;
    if (!run) throw new Error("no active run");
    if (!run.clusterIds.has(clusterId)) {
      throw new Error(`cluster ${clusterId} is not part of run ${run.runId}`);
    }
    run.display.set(clusterId, mode);
    this.emit({ kind: "selection", runId: run.runId });
  }

  displayOf(clusterId: number): DisplayMode {
    return this.activeRun?.display.get(clusterId) ?? { kind: "points" };
  }
}
