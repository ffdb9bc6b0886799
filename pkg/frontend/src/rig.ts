/** rig.json parsing, forward kinematics and linear blend skinning,
 * matching the toolkit's math one for one. */

import { Quat, Vec3, quatMultiply, quatNormalize, quatToMat3 } from "./math.js";

export interface JointDef {
  name: string;
  parent: number | null;
  bindRotation: Quat;
  bindTranslation: Vec3;
}

export interface Pose {
  rotations: Float64Array; // J*4 xyzw
  rootTranslation: Vec3;
  rootScale: number;
}

/** Affine transform stored as 12 numbers: row-major 3x3 linear part then
 * translation. Blending these componentwise equals blending 4x4s. */
export type Affine = Float64Array;

export class RigError extends Error {}

export class Rig {
  vertices: Float64Array; // V*3
  joints: JointDef[];
  parents: Int32Array;
  jointIndex: Map<string, number>;
  bindRotations: Float64Array; // J*4, normalized
  bindTranslations: Float64Array; // J*3
  skinJoints: Int32Array; // V*4
  skinWeights: Float64Array; // V*4
  triangles: Int32Array | null;
  bindGlobals: Affine[];
  inverseBind: Affine[];

  constructor(doc: any) {
    if (!doc || !Array.isArray(doc.vertices) || !Array.isArray(doc.joints) || !Array.isArray(doc.skin)) {
      throw new RigError("rig file is structurally invalid");
    }
    const v = doc.vertices.length;
    this.vertices = new Float64Array(3 * v);
    for (let i = 0; i < v; i++) {
      this.vertices[3 * i] = doc.vertices[i][0];
      this.vertices[3 * i + 1] = doc.vertices[i][1];
      this.vertices[3 * i + 2] = doc.vertices[i][2];
    }
    this.joints = doc.joints.map((j: any) => ({
      name: j.name,
      parent: j.parent,
      bindRotation: j.bind_rotation as Quat,
      bindTranslation: j.bind_translation as Vec3,
    }));
    const n = this.joints.length;
    const roots = this.joints.filter((j) => j.parent === null).length;
    if (roots !== 1) throw new RigError(`expected exactly one root joint, found ${roots}`);
    this.parents = new Int32Array(n);
    this.jointIndex = new Map();
    this.bindRotations = new Float64Array(4 * n);
    this.bindTranslations = new Float64Array(3 * n);
    this.joints.forEach((j, i) => {
      if (j.parent !== null && !(j.parent >= 0 && j.parent < i)) {
        throw new RigError(`joint ${i} (${j.name}): parent must precede child`);
      }
      this.parents[i] = j.parent === null ? -1 : j.parent;
      this.jointIndex.set(j.name, i);
      const q = quatNormalize(j.bindRotation);
      this.bindRotations.set(q, 4 * i);
      this.bindTranslations.set(j.bindTranslation, 3 * i);
    });

    this.skinJoints = new Int32Array(4 * v);
    this.skinWeights = new Float64Array(4 * v);
    doc.skin.forEach((pairs: [number, number][], i: number) => {
      if (pairs.length > 4) throw new RigError(`vertex ${i}: more than 4 influences`);
      let sum = 0;
      pairs.forEach(([j, w], k) => {
        if (w < 0) throw new RigError("negative skin weight");
        if (j < 0 || j >= n) throw new RigError("skin joint index out of range");
        this.skinJoints[4 * i + k] = j;
        this.skinWeights[4 * i + k] = w;
        sum += w;
      });
      if (Math.abs(sum - 1) > 1e-4) {
        throw new RigError(`skin weights of vertex ${i} sum to ${sum}, not 1`);
      }
    });

    this.triangles = null;
    if (doc.triangles) {
      this.triangles = new Int32Array(doc.triangles.length * 3);
      doc.triangles.forEach((t: number[], i: number) => this.triangles!.set(t, 3 * i));
    }

    this.bindGlobals = this.forwardKinematics(this.bindRotations, [0, 0, 0], 1);
    this.inverseBind = this.bindGlobals.map(invertAffine);
  }

  get jointCount(): number {
    return this.joints.length;
  }

  get vertexCount(): number {
    return this.vertices.length / 3;
  }

  bindPose(): Pose {
    return {
      rotations: new Float64Array(this.bindRotations),
      rootTranslation: [0, 0, 0],
      rootScale: 1,
    };
  }

  forwardKinematics(rotations: Float64Array, rootTranslation: Vec3, rootScale: number): Affine[] {
    const n = this.jointCount;
    const out: Affine[] = [];
    for (let j = 0; j < n; j++) {
      const q: Quat = [rotations[4 * j], rotations[4 * j + 1], rotations[4 * j + 2], rotations[4 * j + 3]];
      const r = quatToMat3(q);
      const local = new Float64Array(12);
      for (let k = 0; k < 9; k++) local[k] = r[k];
      local[9] = this.bindTranslations[3 * j];
      local[10] = this.bindTranslations[3 * j + 1];
      local[11] = this.bindTranslations[3 * j + 2];
      const parent = this.parents[j];
      if (parent < 0) {
        for (let k = 0; k < 9; k++) local[k] *= rootScale;
        local[9] += rootTranslation[0];
        local[10] += rootTranslation[1];
        local[11] += rootTranslation[2];
        out.push(local);
      } else {
        out.push(composeAffine(out[parent], local));
      }
    }
    return out;
  }

  /** S[j] = global[j] ∘ inverseBind[j]; identity at the bind pose. */
  computeSkinMatrices(pose: Pose): Affine[] {
    if (pose.rotations.length !== 4 * this.jointCount) {
      throw new RigError(`pose has ${pose.rotations.length / 4} rotations, rig has ${this.jointCount} joints`);
    }
    const globals = this.forwardKinematics(pose.rotations, pose.rootTranslation, pose.rootScale);
    return globals.map((g, j) => composeAffine(g, this.inverseBind[j]));
  }

  /** Blended matrix per vertex: M_v = sum_k w_k S[j_k]. */
  blendVertexMatrices(skin: Affine[]): Affine[] {
    const out: Affine[] = [];
    for (let v = 0; v < this.vertexCount; v++) {
      const m = new Float64Array(12);
      for (let k = 0; k < 4; k++) {
        const w = this.skinWeights[4 * v + k];
        if (w === 0) continue;
        const s = skin[this.skinJoints[4 * v + k]];
        for (let i = 0; i < 12; i++) m[i] += w * s[i];
      }
      out.push(m);
    }
    return out;
  }

  /** sha256 over the same canonical byte stream the toolkit hashes. */
  async contentHash(): Promise<Uint8Array> {
    const name_bytes = this.joints.map((j) => new TextEncoder().encode(j.name + "\0"));
    let size = 16 + this.vertices.length * 8 + this.bindRotations.length * 8 +
      this.bindTranslations.length * 8 + this.skinJoints.length * 4 +
      this.skinWeights.length * 8 + this.joints.length * 8;
    if (this.triangles) size += this.triangles.length * 4;
    for (const nb of name_bytes) size += nb.length;

    const buf = new ArrayBuffer(size);
    const view = new DataView(buf);
    let off = 0;
    view.setBigInt64(off, BigInt(this.vertexCount), true); off += 8;
    view.setBigInt64(off, BigInt(this.jointCount), true); off += 8;
    for (const x of this.vertices) { view.setFloat64(off, x, true); off += 8; }
    if (this.triangles) {
      for (const t of this.triangles) { view.setInt32(off, t, true); off += 4; }
    }
    for (let j = 0; j < this.jointCount; j++) {
      new Uint8Array(buf, off, name_bytes[j].length).set(name_bytes[j]);
      off += name_bytes[j].length;
      view.setBigInt64(off, BigInt(this.parents[j]), true); off += 8;
    }
    for (const x of this.bindRotations) { view.setFloat64(off, x, true); off += 8; }
    for (const x of this.bindTranslations) { view.setFloat64(off, x, true); off += 8; }
    for (const x of this.skinJoints) { view.setInt32(off, x, true); off += 4; }
    for (const x of this.skinWeights) { view.setFloat64(off, x, true); off += 8; }

    const digest = await crypto.subtle.digest("SHA-256", buf);
    return new Uint8Array(digest);
  }
}

export function parseRig(text: string): Rig {
  let doc: any;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new RigError(`rig file is not valid JSON: ${e}`);
  }
  return new Rig(doc);
}

export function composeAffine(a: Affine, b: Affine): Affine {
  const out = new Float64Array(12);
  for (let r = 0; r < 3; r++) {
    for (let c = 0; c < 3; c++) {
      out[3 * r + c] =
        a[3 * r] * b[c] + a[3 * r + 1] * b[3 + c] + a[3 * r + 2] * b[6 + c];
    }
    out[9 + r] =
      a[3 * r] * b[9] + a[3 * r + 1] * b[10] + a[3 * r + 2] * b[11] + a[9 + r];
  }
  return out;
}

export function invertAffine(a: Affine): Affine {
  const det =
    a[0] * (a[4] * a[8] - a[5] * a[7]) -
    a[1] * (a[3] * a[8] - a[5] * a[6]) +
    a[2] * (a[3] * a[7] - a[4] * a[6]);
  if (Math.abs(det) < 1e-12) throw new RigError("singular affine transform");
  const inv = 1 / det;
  const l = new Float64Array(9);
  l[0] = (a[4] * a[8] - a[5] * a[7]) * inv;
  l[1] = (a[2] * a[7] - a[1] * a[8]) * inv;
  l[2] = (a[1] * a[5] - a[2] * a[4]) * inv;
  l[3] = (a[5] * a[6] - a[3] * a[8]) * inv;
  l[4] = (a[0] * a[8] - a[2] * a[6]) * inv;
  l[5] = (a[2] * a[3] - a[0] * a[5]) * inv;
  l[6] = (a[3] * a[7] - a[4] * a[6]) * inv;
  l[7] = (a[1] * a[6] - a[0] * a[7]) * inv;
  l[8] = (a[0] * a[4] - a[1] * a[3]) * inv;
  const out = new Float64Array(12);
  out.set(l);
  out[9] = -(l[0] * a[9] + l[1] * a[10] + l[2] * a[11]);
  out[10] = -(l[3] * a[9] + l[4] * a[10] + l[5] * a[11]);
  out[11] = -(l[6] * a[9] + l[7] * a[10] + l[8] * a[11]);
  return out;
}

/** The pose a bundle was bound in: stored limb rotations with the fit
 * similarity folded into the root (mirrors the toolkit's FitResult.to_pose). */
export function fitPoseFromBundle(
  bundle: { fitYaw: number; fitTranslation: Float32Array; fitScale: number; fitRotations: Float32Array },
  rig: Rig,
): Pose {
  const j = rig.jointCount;
  const rotations = new Float64Array(4 * j);
  for (let i = 0; i < 4 * j; i++) rotations[i] = bundle.fitRotations[i];

  let root = 0;
  while (rig.parents[root] >= 0) root++;
  const half = bundle.fitYaw / 2;
  const yawQ: Quat = [0, Math.sin(half), 0, Math.cos(half)];
  const rootQ: Quat = [
    rotations[4 * root], rotations[4 * root + 1],
    rotations[4 * root + 2], rotations[4 * root + 3],
  ];
  rotations.set(quatMultiply(yawQ, rootQ), 4 * root);

  const b0: Vec3 = [
    rig.bindGlobals[root][9], rig.bindGlobals[root][10], rig.bindGlobals[root][11],
  ];
  const c = Math.cos(bundle.fitYaw);
  const s = Math.sin(bundle.fitYaw);
  const rb0: Vec3 = [c * b0[0] + s * b0[2], b0[1], -s * b0[0] + c * b0[2]];
  const t = bundle.fitTranslation;
  return {
    rotations,
    rootTranslation: [
      t[0] - b0[0] + bundle.fitScale * rb0[0],
      t[1] - b0[1] + bundle.fitScale * rb0[1],
      t[2] - b0[2] + bundle.fitScale * rb0[2],
    ],
    rootScale: bundle.fitScale,
  };
}
