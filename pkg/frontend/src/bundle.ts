/** Parser for the avatar bundle binary ("GSAB"), the toolkit's output.
 *
 * Little-endian struct-of-arrays layout; see the toolkit README for the
 * byte-level table. Parsing copies into typed arrays and never mutates
 * the source buffer.
 */

export interface GroupRange {
  bone: number;
  start: number;
  end: number;
}

export interface AvatarBundle {
  rigHash: Uint8Array; // 32 bytes, sha256 of the rig content
  fitYaw: number;
  fitTranslation: Float32Array; // 3
  fitScale: number;
  fitRotations: Float32Array; // J*4, xyzw per joint
  jointCount: number;
  splatCount: number;
  vertexCount: number;
  vertex: Uint32Array; // N
  relPositions: Float32Array; // N*3
  relRotations: Float32Array; // N*4
  scales: Float32Array; // N*3
  colors: Float32Array; // N*3
  opacities: Float32Array; // N
  groups: GroupRange[];
}

export class BundleFormatError extends Error {}

const MAGIC = 0x42415347; // "GSAB" little-endian

class Cursor {
  off = 0;
  constructor(private view: DataView, private buf: ArrayBuffer) {}

  private need(n: number, what: string) {
    if (this.off + n > this.view.byteLength) {
      throw new BundleFormatError(
        `truncated bundle while reading ${what}: need ${this.off + n} bytes, have ${this.view.byteLength}`,
      );
    }
  }

  u32(what: string): number {
    this.need(4, what);
    const v = this.view.getUint32(this.off, true);
    this.off += 4;
    return v;
  }

  f32(what: string): number {
    this.need(4, what);
    const v = this.view.getFloat32(this.off, true);
    this.off += 4;
    return v;
  }

  bytes(n: number, what: string): Uint8Array {
    this.need(n, what);
    const v = new Uint8Array(this.buf.slice(this.off, this.off + n));
    this.off += n;
    return v;
  }

  f32array(n: number, what: string): Float32Array {
    this.need(4 * n, what);
    const v = new Float32Array(this.buf.slice(this.off, this.off + 4 * n));
    this.off += 4 * n;
    return v;
  }

  u32array(n: number, what: string): Uint32Array {
    this.need(4 * n, what);
    const v = new Uint32Array(this.buf.slice(this.off, this.off + 4 * n));
    this.off += 4 * n;
    return v;
  }
}

export function parseBundle(buffer: ArrayBuffer): AvatarBundle {
  const cur = new Cursor(new DataView(buffer), buffer);
  const magic = cur.u32("magic");
  if (magic !== MAGIC) {
    throw new BundleFormatError(`bad magic 0x${magic.toString(16)}, expected "GSAB"`);
  }
  const version = cur.u32("version");
  if (version !== 1) {
    throw new BundleFormatError(`unsupported version ${version} (max supported 1)`);
  }
  const n = cur.u32("splat count");
  const v = cur.u32("vertex count");
  const g = cur.u32("group count");
  const rigHash = cur.bytes(32, "rig hash");
  const fitYaw = cur.f32("fit yaw");
  const fitTranslation = cur.f32array(3, "fit translation");
  const fitScale = cur.f32("fit scale");
  const j = cur.u32("joint count");
  const fitRotations = cur.f32array(4 * j, "fit rotations");
  const vertex = cur.u32array(n, "vertex indices");
  const relPositions = cur.f32array(3 * n, "rel positions");
  const relRotations = cur.f32array(4 * n, "rel rotations");
  const scales = cur.f32array(3 * n, "scales");
  const colors = cur.f32array(3 * n, "colors");
  const opacities = cur.f32array(n, "opacities");
  const table = cur.u32array(3 * g, "group table");
  if (cur.off !== buffer.byteLength) {
    throw new BundleFormatError(
      `trailing garbage: bundle ends at ${cur.off}, file has ${buffer.byteLength} bytes`,
    );
  }

  const groups: GroupRange[] = [];
  for (let k = 0; k < g; k++) {
    groups.push({ bone: table[3 * k], start: table[3 * k + 1], end: table[3 * k + 2] });
  }
  if (g > 0) {
    if (groups[0].start !== 0 || groups[g - 1].end !== n) {
      throw new BundleFormatError("group ranges do not partition the splat array");
    }
    for (let k = 1; k < g; k++) {
      if (groups[k].start !== groups[k - 1].end) {
        throw new BundleFormatError("group ranges do not partition the splat array");
      }
    }
  } else if (n > 0) {
    throw new BundleFormatError("bundle has splats but no groups");
  }
  for (let k = 0; k < n; k++) {
    if (vertex[k] >= v) throw new BundleFormatError("vertex index out of range");
  }

  return {
    rigHash, fitYaw, fitTranslation, fitScale, fitRotations,
    jointCount: j, splatCount: n, vertexCount: v,
    vertex, relPositions, relRotations, scales, colors, opacities, groups,
  };
}

export function hashHex(hash: Uint8Array): string {
  return Array.from(hash).map((b) => b.toString(16).padStart(2, "0")).join("");
}
