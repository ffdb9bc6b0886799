import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));

export function fixturePath(name: string): string {
  return join(here, "fixtures", name);
}

export function fixtureBytes(name: string): ArrayBuffer {
  const buf = readFileSync(fixturePath(name));
  return buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength);
}

export function fixtureText(name: string): string {
  return readFileSync(fixturePath(name), "utf-8");
}

export interface PoseExpectation {
  order: number[];
  positions: number[];
  rotations: number[];
}

export interface Expected {
  camera: { position: [number, number, number]; target: [number, number, number] };
  t_animated: number;
  pose_t0_group: PoseExpectation;
  pose_t0_full: PoseExpectation;
  pose_wave_group: PoseExpectation;
}

export function loadExpected(): Expected {
  return JSON.parse(fixtureText("expected.json"));
}

export function cameraVectors(expected: Expected) {
  const pos = expected.camera.position;
  const tgt = expected.camera.target;
  const d = [tgt[0] - pos[0], tgt[1] - pos[1], tgt[2] - pos[2]];
  const n = Math.hypot(d[0], d[1], d[2]);
  return {
    camPos: pos as [number, number, number],
    camForward: [d[0] / n, d[1] / n, d[2] / n] as [number, number, number],
  };
}
