/** 3D view: one THREE.Points object per displayed cluster.
 *
 * The scene enforces the decimation budget as a hard cap: a cloud that
 * would push the total past the budget is truncated on the way in, whatever
 * the server sent. Per-point alpha is folded into vertex color brightness
 * (PointsMaterial has no per-vertex opacity and a full shader is not worth
 * it here).
 */

import * as THREE from "three";
import { ParsedCloud } from "./pointcloud";

const PALETTE = [0xe4572e, 0x29b6a8, 0xf3a712, 0x5c6bc0, 0xa8c256, 0xd81b60, 0x8d6e63, 0x26c6da];

export type RendererFactory = (canvas: HTMLCanvasElement) => THREE.WebGLRenderer | null;

function defaultRendererFactory(canvas: HTMLCanvasElement): THREE.WebGLRenderer | null {
  try {
    return new THREE.WebGLRenderer({ canvas, antialias: true });
  } catch {
    return null; // headless DOM: keep the scene graph, skip drawing
  }
}

/** Minimal orbit: drag rotates, wheel zooms, shift-drag pans the target. */
export class OrbitState {
  theta = 0.5;
  phi = 1.1;
  radius = 120;
  target = new THREE.Vector3();

  private dragging = false;
  private panning = false;
  private lastX = 0;
  private lastY = 0;

  attach(el: HTMLElement): void {
    el.addEventListener("mousedown", (ev) => {
      this.dragging = true;
      this.panning = ev.shiftKey || ev.button === 2;
      this.lastX = ev.clientX;
      this.lastY = ev.clientY;
    });
    window.addEventListener("mousemove", (ev) => {
      if (!this.dragging) return;
      const dx = ev.clientX - this.lastX;
      const dy = ev.clientY - this.lastY;
      this.lastX = ev.clientX;
      this.lastY = ev.clientY;
      if (this.panning) {
        const scale = this.radius * 0.002;
        this.target.x -= dx * scale;
        this.target.y += dy * scale;
      } else {
        this.theta -= dx * 0.008;
        this.phi = Math.min(Math.PI - 0.05, Math.max(0.05, this.phi - dy * 0.008));
      }
    });
    window.addEventListener("mouseup", () => {
      this.dragging = false;
    });
    el.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      this.radius *= ev.deltaY > 0 ? 1.1 : 1 / 1.1;
      this.radius = Math.min(5000, Math.max(1, this.radius));
    });
  }

  apply(camera: THREE.PerspectiveCamera): void {
    const sinPhi = Math.sin(this.phi);
    camera.position.set(
      this.target.x + this.radius * sinPhi * Math.cos(this.theta),
      this.target.y + this.radius * Math.cos(this.phi),
      this.target.z + this.radius * sinPhi * Math.sin(this.theta),
    );
    camera.lookAt(this.target);
  }
}

export class SceneManager {
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  readonly orbit = new OrbitState();
  readonly canvas: HTMLCanvasElement;

  private renderer: THREE.WebGLRenderer | null;
  private clouds = new Map<number, THREE.Points>();
  private budget: number;

  constructor(container: HTMLElement, budget: number, factory: RendererFactory = defaultRendererFactory) {
    this.budget = budget;
    this.canvas = document.createElement("canvas");
    this.canvas.width = 640;
    this.canvas.height = 480;
    container.appendChild(this.canvas);

    this.camera = new THREE.PerspectiveCamera(50, 640 / 480, 0.1, 10_000);
    this.orbit.attach(this.canvas);
    this.renderer = factory(this.canvas);
    if (this.renderer) {
      this.renderer.setSize(640, 480, false);
      const loop = () => {
        this.orbit.apply(this.camera);
        this.renderer!.render(this.scene, this.camera);
        requestAnimationFrame(loop);
      };
      requestAnimationFrame(loop);
    }
  }

  setBudget(budget: number): void {
    this.budget = budget;
  }

  /** Insert or replace the cloud shown for a cluster, respecting the budget. */
  setCloud(clusterId: number, cloud: ParsedCloud): void {
    this.removeCloud(clusterId);
    const allowance = this.budget - this.totalPoints();
    const n = Math.max(0, Math.min(cloud.count, allowance));
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(cloud.positions.slice(0, 3 * n), 3));
    geometry.setAttribute("color", new THREE.BufferAttribute(this.shade(clusterId, cloud, n), 3));
    const material = new THREE.PointsMaterial({ size: 1.5, vertexColors: true, sizeAttenuation: true });
    const points = new THREE.Points(geometry, material);
    points.name = `cluster-${clusterId}`;
    this.clouds.set(clusterId, points);
    this.scene.add(points);
  }

  private shade(clusterId: number, cloud: ParsedCloud, n: number): Float32Array {
    const base = new THREE.Color(PALETTE[clusterId % PALETTE.length]!);
    const colors = new Float32Array(3 * n);
    for (let i = 0; i < n; i++) {
      const brightness = 0.25 + 0.75 * cloud.alphas[i]!;
      colors[3 * i] = base.r * brightness;
      colors[3 * i + 1] = base.g * brightness;
      colors[3 * i + 2] = base.b * brightness;
    }
    return colors;
  }

  removeCloud(clusterId: number): void {
    const existing = this.clouds.get(clusterId);
    if (!existing) return;
    this.scene.remove(existing);
    existing.geometry.dispose();
    (existing.material as THREE.Material).dispose();
    this.clouds.delete(clusterId);
  }

  clear(): void {
    for (const id of [...this.clouds.keys()]) this.removeCloud(id);
  }

  shownIds(): number[] {
    return [...this.clouds.keys()].sort((a, b) => a - b);
  }

  pointCount(clusterId: number): number {
    const cloud = this.clouds.get(clusterId);
    return cloud ? cloud.geometry.getAttribute("position").count : 0;
  }

  totalPoints(): number {
    let total = 0;
    for (const id of this.clouds.keys()) total += this.pointCount(id);
    return total;
  }

  /** Point the camera at a cloud's centroid, pulled back to see all of it. */
  frame(cloud: ParsedCloud): void {
    if (cloud.count === 0) return;
    const box = new THREE.Box3();
    for (let i = 0; i < cloud.count; i++) {
      box.expandByPoint(
        new THREE.Vector3(cloud.positions[3 * i]!, cloud.positions[3 * i + 1]!, cloud.positions[3 * i + 2]!),
      );
    }
    box.getCenter(this.orbit.target);
    const size = box.getSize(new THREE.Vector3()).length();
    this.orbit.radius = Math.max(10, size * 1.6);
  }
}
