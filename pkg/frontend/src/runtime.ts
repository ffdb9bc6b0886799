/** Splat update and draw-order computation, same math as the toolkit:
 * per-vertex blended frames (rotation extracted once per vertex by polar
 * decomposition), then one multiply-add and one quaternion product per
 * splat. Sorting is either exact per splat or per bone group. */

import { AvatarBundle, GroupRange } from "./bundle.js";
import { Mat3, Vec3, mat3ToQuat, polarRotation, quatMultiply } from "./math.js";
import { Pose, Rig } from "./rig.js";

export interface VertexTables {
  lin: Float32Array; // V*9 row-major linear parts
  trans: Float32Array; // V*3
  quat: Float32Array; // V*4
}

export function vertexFrameTables(rig: Rig, pose: Pose): VertexTables {
  const blended = rig.blendVertexMatrices(rig.computeSkinMatrices(pose));
  const v = rig.vertexCount;
  const lin = new Float32Array(9 * v);
  const trans = new Float32Array(3 * v);
  const quat = new Float32Array(4 * v);
  for (let i = 0; i < v; i++) {
    const m = blended[i];
    for (let k = 0; k < 9; k++) lin[9 * i + k] = m[k];
    trans[3 * i] = m[9];
    trans[3 * i + 1] = m[10];
    trans[3 * i + 2] = m[11];
    const q = mat3ToQuat(polarRotation(Array.from(m.slice(0, 9)) as Mat3));
    quat.set(q, 4 * i);
  }
  return { lin, trans, quat };
}

export interface SplatState {
  positions: Float32Array; // N*3
  rotations: Float32Array; // N*4
}

export function updateSplats(bundle: AvatarBundle, tables: VertexTables): SplatState {
  const n = bundle.splatCount;
  const positions = new Float32Array(3 * n);
  const rotations = new Float32Array(4 * n);
  const { lin, trans, quat } = tables;
  const rp = bundle.relPositions;
  const rq = bundle.relRotations;
  for (let i = 0; i < n; i++) {
    const v = bundle.vertex[i];
    const r0 = rp[3 * i], r1 = rp[3 * i + 1], r2 = rp[3 * i + 2];
    const L = 9 * v;
    positions[3 * i] = lin[L] * r0 + lin[L + 1] * r1 + lin[L + 2] * r2 + trans[3 * v];
    positions[3 * i + 1] = lin[L + 3] * r0 + lin[L + 4] * r1 + lin[L + 5] * r2 + trans[3 * v + 1];
    positions[3 * i + 2] = lin[L + 6] * r0 + lin[L + 7] * r1 + lin[L + 8] * r2 + trans[3 * v + 2];
    const x1 = quat[4 * v], y1 = quat[4 * v + 1], z1 = quat[4 * v + 2], w1 = quat[4 * v + 3];
    const x2 = rq[4 * i], y2 = rq[4 * i + 1], z2 = rq[4 * i + 2], w2 = rq[4 * i + 3];
    rotations[4 * i] = w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2;
    rotations[4 * i + 1] = w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2;
    rotations[4 * i + 2] = w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2;
    rotations[4 * i + 3] = w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2;
  }
  return { positions, rotations };
}

export function depths(positions: Float32Array, camPos: Vec3, camForward: Vec3): Float64Array {
  const n = positions.length / 3;
  const d = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    d[i] =
      (positions[3 * i] - camPos[0]) * camForward[0] +
      (positions[3 * i + 1] - camPos[1]) * camForward[1] +
      (positions[3 * i + 2] - camPos[2]) * camForward[2];
  }
  return d;
}

/** Exact back-to-front: depth descending, ties by ascending index. */
export function fullSort(positions: Float32Array, camPos: Vec3, camForward: Vec3): Int32Array {
  const d = depths(positions, camPos, camForward);
  const order = new Int32Array(d.length);
  for (let i = 0; i < d.length; i++) order[i] = i;
  // typed-array sort is not guaranteed stable; break ties by index explicitly
  return order.sort((a, b) => (d[b] - d[a]) || (a - b));
}

/** One centroid-depth key per group; bundle order inside each group. */
export function groupSort(
  positions: Float32Array,
  groups: GroupRange[],
  camPos: Vec3,
  camForward: Vec3,
): Int32Array {
  const nonEmpty = groups.filter((g) => g.end > g.start);
  const keys = new Float64Array(nonEmpty.length);
  nonEmpty.forEach((g, k) => {
    let sx = 0, sy = 0, sz = 0;
    for (let i = g.start; i < g.end; i++) {
      sx += positions[3 * i];
      sy += positions[3 * i + 1];
      sz += positions[3 * i + 2];
    }
    const c = g.end - g.start;
    keys[k] =
      (sx / c - camPos[0]) * camForward[0] +
      (sy / c - camPos[1]) * camForward[1] +
      (sz / c - camPos[2]) * camForward[2];
  });
  const groupOrder = nonEmpty.map((_, k) => k).sort((a, b) => (keys[b] - keys[a]) || (a - b));

  const total = groups.length ? groups[groups.length - 1].end : 0;
  const out = new Int32Array(total);
  let off = 0;
  for (const k of groupOrder) {
    const g = nonEmpty[k];
    for (let i = g.start; i < g.end; i++) out[off++] = i;
  }
  return out;
}
