/** Orbit camera: azimuth/elevation/distance around a target. */

import { Vec3, lookAt, perspective } from "./math.js";

export class OrbitCamera {
  azimuth = 0.4;
  elevation = 0.15;
  distance = 3.0;
  target: Vec3 = [0, 0.5, 0];
  fovY = (55 * Math.PI) / 180;

  get position(): Vec3 {
    const ce = Math.cos(this.elevation);
    return [
      this.target[0] + this.distance * ce * Math.sin(this.azimuth),
      this.target[1] + this.distance * Math.sin(this.elevation),
      this.target[2] + this.distance * ce * Math.cos(this.azimuth),
    ];
  }

  get forward(): Vec3 {
    const p = this.position;
    const d: Vec3 = [this.target[0] - p[0], this.target[1] - p[1], this.target[2] - p[2]];
    const n = Math.hypot(d[0], d[1], d[2]);
    return [d[0] / n, d[1] / n, d[2] / n];
  }

  rotate(dx: number, dy: number) {
    this.azimuth -= dx * 0.008;
    this.elevation = Math.max(-1.4, Math.min(1.4, this.elevation + dy * 0.008));
  }

  zoom(factor: number) {
    this.distance = Math.max(0.4, Math.min(20, this.distance * factor));
  }

  viewMatrix(): Float32Array {
    return lookAt(this.position, this.target, [0, 1, 0]);
  }

  projectionMatrix(aspect: number): Float32Array {
    return perspective(this.fovY, aspect, 0.05, 100);
  }
}
