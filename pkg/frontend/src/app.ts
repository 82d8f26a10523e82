/** Viewer application: builds the panels, wires them to the service client
 * and the view store, and keeps the 3D scene in sync with the active run.
 *
 * Every async UI action is tracked so a scripted driver can `await
 * app.whenIdle()` between steps instead of sleeping.
 */

import { ApiClient, ClusterRow, ServiceError } from "./api";
import { HistogramPanel } from "./histogram";
import { ParsedCloud } from "./pointcloud";
import { RendererFactory, SceneManager } from "./scene";
import { RunEntry, ViewStore } from "./state";

export interface AppOptions {
  fetchFn?: (input: string, init?: RequestInit) => Promise<Response>;
  rendererFactory?: RendererFactory;
  decimationMode?: "stride" | "importance";
}

function labelled(label: string, input: HTMLElement): HTMLLabelElement {
  const el = document.createElement("label");
  el.append(label, input);
  return el;
}

function numberInput(id: string, value: number, step: string): HTMLInputElement {
  const input = document.createElement("input");
  input.type = "number";
  input.id = id;
  input.step = step;
  input.value = String(value);
  return input;
}

export class App {
  readonly api: ApiClient;
  readonly store = new ViewStore();
  readonly histogram: HistogramPanel;
  readonly scene: SceneManager;

  readonly volumePath: HTMLInputElement;
  readonly loadButton: HTMLButtonElement;
  readonly volumeInfo: HTMLSpanElement;
  readonly notifyArea: HTMLDivElement;
  readonly cutoffInput: HTMLInputElement;
  readonly epsInput: HTMLInputElement;
  readonly minWeightInput: HTMLInputElement;
  readonly depthInput: HTMLInputElement;
  readonly budgetInput: HTMLInputElement;
  readonly submitButton: HTMLButtonElement;
  readonly runSelect: HTMLSelectElement;
  readonly clusterTable: HTMLTableElement;

  private readonly decimationMode: "stride" | "importance";
  private pending = new Set<Promise<unknown>>();
  private submitting = false;

  constructor(root: HTMLElement, baseUrl: string, opts: AppOptions = {}) {
    this.api = new ApiClient(baseUrl, opts.fetchFn);
    this.decimationMode = opts.decimationMode ?? "importance";

    this.notifyArea = document.createElement("div");
    this.notifyArea.className = "notify";
    this.notifyArea.setAttribute("role", "alert");

    const loadSection = document.createElement("section");
    loadSection.className = "load-panel";
    this.volumePath = document.createElement("input");
    this.volumePath.type = "text";
    this.volumePath.id = "volume-path";
    this.volumePath.placeholder = "path to a .vvol file on the service host";
    this.loadButton = document.createElement("button");
    this.loadButton.id = "load-volume";
    this.loadButton.textContent = "Load";
    this.volumeInfo = document.createElement("span");
    this.volumeInfo.className = "volume-info";
    loadSection.append(labelled("volume ", this.volumePath), this.loadButton, this.volumeInfo);

    const histSection = document.createElement("section");
    this.histogram = new HistogramPanel(histSection);

    const paramSection = document.createElement("section");
    paramSection.className = "param-panel";
    this.cutoffInput = numberInput("param-cutoff", this.store.draft.cutoff, "any");
    this.epsInput = numberInput("param-eps", this.store.draft.eps, "0.1");
    this.minWeightInput = numberInput("param-min-weight", this.store.draft.minWeight, "any");
    this.depthInput = numberInput("param-depth", this.store.draft.depth, "1");
    this.budgetInput = numberInput("param-budget", this.store.decimationBudget, "1000");
    this.submitButton = document.createElement("button");
    this.submitButton.id = "submit-run";
    this.submitButton.textContent = "Cluster";
    paramSection.append(
      labelled("cutoff ", this.cutoffInput),
      labelled("eps ", this.epsInput),
      labelled("min weight ", this.minWeightInput),
      labelled("peel depth ", this.depthInput),
      labelled("point budget ", this.budgetInput),
      this.submitButton,
    );

    const runSection = document.createElement("section");
    runSection.className = "run-panel";
    this.runSelect = document.createElement("select");
    this.runSelect.id = "run-history";
    this.clusterTable = document.createElement("table");
    this.clusterTable.id = "cluster-table";
    this.clusterTable.innerHTML =
      "<thead><tr><th></th><th>id</th><th>size</th><th>cores</th>" +
      "<th>total</th><th>max</th><th></th></tr></thead><tbody></tbody>";
    runSection.append(labelled("runs ", this.runSelect), this.clusterTable);

    const viewSection = document.createElement("section");
    viewSection.className = "view-panel";
    this.scene = new SceneManager(viewSection, this.store.decimationBudget, opts.rendererFactory);

    root.append(this.notifyArea, loadSection, histSection, paramSection, runSection, viewSection);

    this.loadButton.addEventListener("click", () => this.track(this.loadVolume()));
    this.submitButton.addEventListener("click", () => this.track(this.submitRun()));
    this.runSelect.addEventListener("change", () => {
      this.store.selectRun(this.runSelect.value);
      this.renderClusterTable();
      this.track(this.refreshScene());
    });
    this.histogram.onCuspChange = (intensity) => {
      this.store.setDraft({ cutoff: intensity });
      this.cutoffInput.value = String(intensity);
    };
    for (const [input, key] of [
      [this.cutoffInput, "cutoff"],
      [this.epsInput, "eps"],
      [this.minWeightInput, "minWeight"],
      [this.depthInput, "depth"],
    ] as const) {
      input.addEventListener("change", () => {
        this.store.setDraft({ [key]: Number(input.value) });
      });
    }
    this.budgetInput.addEventListener("change", () => {
      this.store.setBudget(Number(this.budgetInput.value));
      this.scene.setBudget(this.store.decimationBudget);
      this.track(this.refreshScene());
    });
  }

  /** Register a UI-triggered promise; errors land in the notify area. */
  track<T>(promise: Promise<T>): Promise<T | undefined> {
    const guarded = promise.catch((err) => {
      this.notify(err instanceof ServiceError ? err.detail : String(err));
      return undefined;
    });
    this.pending.add(guarded);
    void guarded.finally(() => this.pending.delete(guarded));
    return guarded;
  }

  /** Resolves once every tracked operation has settled. */
  async whenIdle(): Promise<void> {
    while (this.pending.size > 0) {
      await Promise.allSettled([...this.pending]);
    }
  }

  notify(message: string): void {
    this.notifyArea.textContent = message;
  }

  async loadVolume(): Promise<void> {
    const info = await this.api.loadVolume(this.volumePath.value);
    this.store.setVolume(info.volume_id);
    this.volumeInfo.textContent = `${info.volume_id} ${info.dims.join("x")}`;
    this.runSelect.innerHTML = "";
    this.clusterTable.tBodies[0]!.innerHTML = "";
    this.scene.clear();

    const payload = await this.api.histogram(info.volume_id);
    this.histogram.setData(payload);
    if (payload.cusp !== null) {
      this.store.setDraft({ cutoff: payload.cusp });
      this.cutoffInput.value = String(payload.cusp);
    }
    this.notify(`loaded ${info.volume_id}`);
  }

  async submitRun(): Promise<void> {
    if (this.submitting) {
      this.notify("a run is already in flight");
      return;
    }
    const volumeId = this.store.volumeId;
    if (!volumeId) {
      this.notify("load a volume first");
      return;
    }
    const params = {
      cutoff: this.store.draft.cutoff,
      eps: this.store.draft.eps,
      min_weight: this.store.draft.minWeight,
    };
    this.submitting = true;
    try {
      const submitted = await this.api.submitCluster(volumeId, params);
      this.notify(`job ${submitted.job_id} ${submitted.status}`);
      const job = await this.api.pollJob(submitted.job_id);
      if (job.status === "failed") {
        // prior runs and their geometry stay untouched
        this.notify(`run failed: ${job.error ?? "unknown error"}`);
        return;
      }
      if (this.store.runHistory.some((r) => r.runId === job.run_id)) {
        this.store.selectRun(job.run_id);
      } else {
        const listing = await this.api.listClusters(job.run_id);
        this.store.appendRun(job.run_id, job.params, [...listing.clusters]);
        this.appendRunOption(this.store.activeRun!);
      }
      this.runSelect.value = job.run_id;
      this.renderClusterTable();
      await this.refreshScene();
    } finally {
      this.submitting = false;
    }
  }

  private appendRunOption(run: RunEntry): void {
    const option = document.createElement("option");
    option.value = run.runId;
    const p = run.params;
    option.textContent =
      `${run.runId}: cutoff=${p.cutoff} eps=${p.eps} mw=${p.min_weight} -> ${run.nClusters} clusters`;
    this.runSelect.appendChild(option);
  }

  renderClusterTable(): void {
    const run = this.store.activeRun;
    const body = this.clusterTable.tBodies[0]!;
    body.innerHTML = "";
    if (!run) return;
    for (const row of run.rows) {
      body.appendChild(this.clusterRow(run, row));
    }
  }

  private clusterRow(run: RunEntry, row: ClusterRow): HTMLTableRowElement {
    const tr = document.createElement("tr");
    tr.dataset.clusterId = String(row.id);

    const toggle = document.createElement("input");
    toggle.type = "checkbox";
    toggle.className = "cluster-toggle";
    toggle.checked = run.visible.has(row.id);
    toggle.addEventListener("change", () => {
      this.store.toggleVisible(row.id, toggle.checked);
      this.track(this.refreshScene());
    });

    const peel = document.createElement("button");
    peel.className = "peel-button";
    peel.textContent = "peel";
    peel.addEventListener("click", () => this.track(this.peelCluster(row.id)));

    for (const cell of [
      toggle,
      String(row.id),
      String(row.size),
      String(row.core_count),
      row.total_intensity.toPrecision(4),
      row.max_intensity.toPrecision(4),
      peel,
    ]) {
      const td = document.createElement("td");
      td.append(cell);
      tr.appendChild(td);
    }
    return tr;
  }

  /** Request a peel at the drafted depth and swap that cluster to shell-only. */
  async peelCluster(clusterId: number): Promise<void> {
    const run = this.store.activeRun;
    if (!run) return;
    const depth = this.store.draft.depth;
    const stats = await this.api.computeShell(run.runId, clusterId, depth);
    this.store.setDisplay(clusterId, { kind: "shell", depth });
    this.store.toggleVisible(clusterId, true);
    const factor =
      stats.reduction_factor === null ? "all interior" : `x${stats.reduction_factor.toFixed(2)}`;
    this.notify(
      `shell of cluster ${clusterId} at depth ${depth}: ` +
        `${stats.shell_size} of ${stats.size} points (${factor})`,
    );
    await this.refreshScene();
  }

  /** Re-fetch everything visible, splitting the point budget across clusters. */
  async refreshScene(): Promise<void> {
    const run = this.store.activeRun;
    if (!run) {
      this.scene.clear();
      return;
    }
    for (const shown of this.scene.shownIds()) {
      if (!run.visible.has(shown)) this.scene.removeCloud(shown);
    }
    const visible = [...run.visible].sort((a, b) => a - b);
    if (visible.length === 0) return;
    const perCluster = Math.max(1, Math.floor(this.store.decimationBudget / visible.length));
    let first: ParsedCloud | null = null;
    for (const clusterId of visible) {
      const mode = this.store.displayOf(clusterId);
      const opts = { target: perCluster, mode: this.decimationMode } as const;
      const cloud =
        mode.kind === "shell"
          ? await this.api.shellPoints(run.runId, clusterId, mode.depth, opts)
          : await this.api.clusterPoints(run.runId, clusterId, opts);
      this.scene.setCloud(clusterId, cloud);
      first = first ?? cloud;
    }
    if (first && this.scene.shownIds().length === visible.length) {
      this.scene.frame(first);
    }
  }
}
