/** Small vector/quaternion/matrix helpers mirroring the toolkit's
 * conventions: quaternions (x, y, z, w), column vectors, +Y up. */

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number];
/** Row-major 3x3. */
export type Mat3 = [number, number, number, number, number, number, number, number, number];

export function quatNormalize(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  if (n === 0) throw new Error("zero-norm quaternion");
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export function quatMultiply(a: Quat, b: Quat): Quat {
  const [x1, y1, z1, w1] = a;
  const [x2, y2, z2, w2] = b;
  return [
    w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
    w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
    w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
  ];
}

export function quatToMat3(q: Quat): Mat3 {
  const [x, y, z, w] = q;
  const xx = x * x, yy = y * y, zz = z * z;
  const xy = x * y, xz = x * z, yz = y * z;
  const wx = w * x, wy = w * y, wz = w * z;
  return [
    1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy),
    2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx),
    2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy),
  ];
}

/** Shepperd's method; canonical w >= 0. */
export function mat3ToQuat(m: Mat3): Quat {
  const tr = m[0] + m[4] + m[8];
  let q: Quat;
  const c1 = m[0] - m[4] - m[8];
  const c2 = m[4] - m[0] - m[8];
  const c3 = m[8] - m[0] - m[4];
  const best = Math.max(tr, c1, c2, c3);
  if (best === tr) {
    const s = Math.sqrt(tr + 1) * 2;
    q = [(m[7] - m[5]) / s, (m[2] - m[6]) / s, (m[3] - m[1]) / s, 0.25 * s];
  } else if (best === c1) {
    const s = Math.sqrt(1 + c1) * 2;
    q = [0.25 * s, (m[1] + m[3]) / s, (m[2] + m[6]) / s, (m[7] - m[5]) / s];
  } else if (best === c2) {
    const s = Math.sqrt(1 + c2) * 2;
    q = [(m[1] + m[3]) / s, 0.25 * s, (m[5] + m[7]) / s, (m[2] - m[6]) / s];
  } else {
    const s = Math.sqrt(1 + c3) * 2;
    q = [(m[2] + m[6]) / s, (m[5] + m[7]) / s, 0.25 * s, (m[3] - m[1]) / s];
  }
  q = quatNormalize(q);
  return q[3] < 0 ? [-q[0], -q[1], -q[2], -q[3]] : q;
}

export function quatSlerp(a: Quat, b: Quat, u: number): Quat {
  let q1 = quatNormalize(b);
  const q0 = quatNormalize(a);
  let dot = q0[0] * q1[0] + q0[1] * q1[1] + q0[2] * q1[2] + q0[3] * q1[3];
  if (dot < 0) {
    q1 = [-q1[0], -q1[1], -q1[2], -q1[3]];
    dot = -dot;
  }
  if (dot > 1 - 1e-10) {
    return quatNormalize([
      q0[0] + u * (q1[0] - q0[0]),
      q0[1] + u * (q1[1] - q0[1]),
      q0[2] + u * (q1[2] - q0[2]),
      q0[3] + u * (q1[3] - q0[3]),
    ]);
  }
  const theta = Math.acos(Math.min(dot, 1));
  const s = Math.sin(theta);
  const ka = Math.sin((1 - u) * theta) / s;
  const kb = Math.sin(u * theta) / s;
  return quatNormalize([
    ka * q0[0] + kb * q1[0],
    ka * q0[1] + kb * q1[1],
    ka * q0[2] + kb * q1[2],
    ka * q0[3] + kb * q1[3],
  ]);
}

export function mat3Det(m: Mat3): number {
  return (
    m[0] * (m[4] * m[8] - m[5] * m[7]) -
    m[1] * (m[3] * m[8] - m[5] * m[6]) +
    m[2] * (m[3] * m[7] - m[4] * m[6])
  );
}

export function mat3Inverse(m: Mat3): Mat3 {
  const det = mat3Det(m);
  if (Math.abs(det) < 1e-12) throw new Error("singular 3x3 matrix");
  const inv = 1 / det;
  return [
    (m[4] * m[8] - m[5] * m[7]) * inv,
    (m[2] * m[7] - m[1] * m[8]) * inv,
    (m[1] * m[5] - m[2] * m[4]) * inv,
    (m[5] * m[6] - m[3] * m[8]) * inv,
    (m[0] * m[8] - m[2] * m[6]) * inv,
    (m[2] * m[3] - m[0] * m[5]) * inv,
    (m[3] * m[7] - m[4] * m[6]) * inv,
    (m[1] * m[6] - m[0] * m[7]) * inv,
    (m[0] * m[4] - m[1] * m[3]) * inv,
  ];
}

export function mat3Transpose(m: Mat3): Mat3 {
  return [m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]];
}

export function mat3Mul(a: Mat3, b: Mat3): Mat3 {
  const out = new Array(9) as Mat3;
  for (let r = 0; r < 3; r++) {
    for (let c = 0; c < 3; c++) {
      out[3 * r + c] =
        a[3 * r] * b[c] + a[3 * r + 1] * b[3 + c] + a[3 * r + 2] * b[6 + c];
    }
  }
  return out;
}

export function mat3Apply(m: Mat3, v: Vec3): Vec3 {
  return [
    m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
    m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
    m[6] * v[0] + m[7] * v[1] + m[8] * v[2],
  ];
}

/** Rotation factor of the polar decomposition, Newton iteration
 * X <- (X + X^-T)/2, same scheme as the primary toolkit. */
export function polarRotation(m: Mat3): Mat3 {
  if (Math.abs(mat3Det(m)) < 1e-8) throw new Error("singular linear part");
  let x = m.slice() as Mat3;
  for (let iter = 0; iter < 30; iter++) {
    const invT = mat3Transpose(mat3Inverse(x));
    const next = x.map((v, i) => 0.5 * (v + invT[i])) as Mat3;
    let delta = 0;
    for (let i = 0; i < 9; i++) delta = Math.max(delta, Math.abs(next[i] - x[i]));
    x = next;
    if (delta <= 1e-9) break;
  }
  if (mat3Det(x) < 0) throw new Error("reflective linear part");
  return x;
}

/** 4x4 column-major (WebGL order) perspective and view helpers. */
export function perspective(fovY: number, aspect: number, near: number, far: number): Float32Array {
  const f = 1 / Math.tan(fovY / 2);
  const out = new Float32Array(16);
  out[0] = f / aspect;
  out[5] = f;
  out[10] = (far + near) / (near - far);
  out[11] = -1;
  out[14] = (2 * far * near) / (near - far);
  return out;
}

export function lookAt(eye: Vec3, target: Vec3, up: Vec3): Float32Array {
  const zx = eye[0] - target[0], zy = eye[1] - target[1], zz = eye[2] - target[2];
  let zn = Math.hypot(zx, zy, zz);
  const z: Vec3 = [zx / zn, zy / zn, zz / zn];
  const x: Vec3 = [
    up[1] * z[2] - up[2] * z[1],
    up[2] * z[0] - up[0] * z[2],
    up[0] * z[1] - up[1] * z[0],
  ];
  const xn = Math.hypot(x[0], x[1], x[2]);
  x[0] /= xn; x[1] /= xn; x[2] /= xn;
  const y: Vec3 = [
    z[1] * x[2] - z[2] * x[1],
    z[2] * x[0] - z[0] * x[2],
    z[0] * x[1] - z[1] * x[0],
  ];
  const out = new Float32Array(16);
  out[0] = x[0]; out[4] = x[1]; out[8] = x[2];
  out[1] = y[0]; out[5] = y[1]; out[9] = y[2];
  out[2] = z[0]; out[6] = z[1]; out[10] = z[2];
  out[12] = -(x[0] * eye[0] + x[1] * eye[1] + x[2] * eye[2]);
  out[13] = -(y[0] * eye[0] + y[1] * eye[1] + y[2] * eye[2]);
  out[14] = -(z[0] * eye[0] + z[1] * eye[1] + z[2] * eye[2]);
  out[15] = 1;
  return out;
}
