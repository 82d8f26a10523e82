/** Intensity histogram panel with a draggable cusp marker.
 *
 * The service reports bin edges in log10 intensity; the panel keeps that
 * scale for x and compresses counts with log10(1+n) on y. Bars go on a
 * canvas; the marker is a positioned DOM element so it can be grabbed.
 * All coordinate math lives in pure methods, and painting is skipped when
 * no 2D context is available.
 */

import { HistogramPayload } from "./api";

export interface BarRect {
  x: number;
  width: number;
  height: number;
}

const MARKER_GRAB_PX = 8;

export class HistogramPanel {
  readonly canvas: HTMLCanvasElement;
  readonly marker: HTMLDivElement;
  private readonly readout: HTMLSpanElement;

  private edgesLog: number[] = [];
  private counts: number[] = [];
  private markerLog: number | null = null;
  private dragging = false;

  onCuspChange: (intensity: number) => void = () => {};

  constructor(
    readonly container: HTMLElement,
    private width = 420,
    private height = 140,
  ) {
    container.classList.add("histogram-panel");
    container.style.position = "relative";

    this.canvas = document.createElement("canvas");
    this.canvas.width = width;
    this.canvas.height = height;
    container.appendChild(this.canvas);

    this.marker = document.createElement("div");
    this.marker.className = "cusp-marker";
    this.marker.style.position = "absolute";
    this.marker.style.top = "0";
    this.marker.style.width = "2px";
    this.marker.style.height = `${height}px`;
    this.marker.style.cursor = "ew-resize";
    this.marker.style.display = "none";
    container.appendChild(this.marker);

    this.readout = document.createElement("span");
    this.readout.className = "cusp-readout";
    container.appendChild(this.readout);

    this.marker.addEventListener("mousedown", (ev) => {
      ev.preventDefault();
      this.dragging = true;
    });
    window.addEventListener("mousemove", (ev) => {
      if (!this.dragging) return;
      this.dragTo(ev.clientX - this.canvas.getBoundingClientRect().left);
    });
    window.addEventListener("mouseup", () => {
      this.dragging = false;
    });
  }

  setData(payload: HistogramPayload): void {
    this.edgesLog = payload.histogram.edges;
    this.counts = payload.histogram.counts;
    this.setMarker(payload.cusp);
    this.paint();
  }

  /** Move the marker to an intensity (or hide it when none detected). */
  setMarker(intensity: number | null): void {
    if (intensity === null || this.edgesLog.length === 0) {
      this.markerLog = null;
      this.marker.style.display = "none";
      this.readout.textContent = "no cusp detected";
      return;
    }
    const lo = this.edgesLog[0]!;
    const hi = this.edgesLog[this.edgesLog.length - 1]!;
    this.markerLog = Math.min(hi, Math.max(lo, Math.log10(intensity)));
    this.marker.style.display = "block";
    this.marker.style.left = `${this.xFor(this.markerLog)}px`;
    this.readout.textContent = `cusp ${this.markerIntensity()!.toExponential(3)}`;
  }

  markerIntensity(): number | null {
    return this.markerLog === null ? null : 10 ** this.markerLog;
  }

  /** Pixel x for a log10 intensity. */
  xFor(log10v: number): number {
    const lo = this.edgesLog[0]!;
    const hi = this.edgesLog[this.edgesLog.length - 1]!;
    return ((log10v - lo) / (hi - lo)) * this.width;
  }

  /** Inverse of xFor, clamped to the data range. */
  logAt(x: number): number {
    const lo = this.edgesLog[0]!;
    const hi = this.edgesLog[this.edgesLog.length - 1]!;
    const frac = Math.min(1, Math.max(0, x / this.width));
    return lo + frac * (hi - lo);
  }

  /** Bar layout in pixels, one rect per bin. */
  barGeometry(): BarRect[] {
    const n = this.counts.length;
    if (n === 0) return [];
    const peak = Math.log10(1 + Math.max(...this.counts));
    const rects: BarRect[] = [];
    for (let i = 0; i < n; i++) {
      const x0 = this.xFor(this.edgesLog[i]!);
      const x1 = this.xFor(this.edgesLog[i + 1]!);
      const h = peak > 0 ? (Math.log10(1 + this.counts[i]!) / peak) * this.height : 0;
      rects.push({ x: x0, width: x1 - x0, height: h });
    }
    return rects;
  }

  private dragTo(x: number): void {
    if (this.edgesLog.length === 0) return;
    this.markerLog = this.logAt(x);
    this.marker.style.left = `${this.xFor(this.markerLog)}px`;
    const intensity = this.markerIntensity()!;
    this.readout.textContent = `cusp ${intensity.toExponential(3)}`;
    this.paint();
    this.onCuspChange(intensity);
  }

  /** Simulate a grab-and-drag; used by scripted tests in place of real mice. */
  dragMarkerToPixel(x: number): void {
    this.dragging = true;
    this.dragTo(x);
    this.dragging = false;
  }

  private paint(): void {
    let ctx: CanvasRenderingContext2D | null = null;
    try {
      ctx = this.canvas.getContext("2d");
    } catch {
      ctx = null;
    }
    if (!ctx) return; // headless DOM: geometry above is still exercised
    ctx.clearRect(0, 0, this.width, this.height);
    ctx.fillStyle = "#5a7fb5";
    for (const bar of this.barGeometry()) {
      ctx.fillRect(bar.x, this.height - bar.height, Math.max(1, bar.width - 0.5), bar.height);
    }
  }
}
