/** WebGL2 instanced gaussian-splat renderer.
 *
 * Each splat is a camera-facing quad; the vertex shader builds the 3D
 * covariance from (rotation, scale), projects it to a screen-space 2D
 * covariance (EWA approximation), and stretches the quad along its
 * eigenvectors. The fragment shader evaluates exp(-0.5 r^2) and blends
 * back to front (draw order supplied by the CPU sort). Degree-0 color
 * only.
 */

import { AvatarBundle } from "./bundle.js";
import { SplatState } from "./runtime.js";

const VERT = `#version 300 es
precision highp float;

layout(location = 0) in vec2 corner;        // quad corner in [-2, 2]
layout(location = 1) in vec3 center;        // instance: splat center
layout(location = 2) in vec4 rotation;      // instance: quat xyzw
layout(location = 3) in vec3 scale;         // instance: stddevs
layout(location = 4) in vec4 colorOpacity;  // instance: rgb + opacity

uniform mat4 view;
uniform mat4 proj;
uniform vec2 viewport;                      // pixels

out vec4 vColor;
out vec2 vOffset;                           // in stddev units

mat3 quatToMat(vec4 q) {
  float x = q.x, y = q.y, z = q.z, w = q.w;
  return mat3(
    1.0 - 2.0*(y*y + z*z), 2.0*(x*y + w*z), 2.0*(x*z - w*y),
    2.0*(x*y - w*z), 1.0 - 2.0*(x*x + z*z), 2.0*(y*z + w*x),
    2.0*(x*z + w*y), 2.0*(y*z - w*x), 1.0 - 2.0*(x*x + y*y));
}

void main() {
  vec4 camCenter = view * vec4(center, 1.0);
  if (camCenter.z > -0.05) {                 // behind the near plane
    gl_Position = vec4(0.0, 0.0, 2.0, 1.0);
    vColor = vec4(0.0);
    vOffset = vec2(0.0);
    return;
  }

  mat3 R = quatToMat(rotation);
  mat3 S = mat3(scale.x, 0.0, 0.0, 0.0, scale.y, 0.0, 0.0, 0.0, scale.z);
  mat3 M = R * S;
  mat3 cov3d = M * transpose(M);

  // Jacobian of the perspective projection at the splat center
  float fx = proj[0][0] * viewport.x * 0.5;
  float fy = proj[1][1] * viewport.y * 0.5;
  float invZ = 1.0 / camCenter.z;
  mat3 J = mat3(
    fx * invZ, 0.0, 0.0,
    0.0, fy * invZ, 0.0,
    -fx * camCenter.x * invZ * invZ, -fy * camCenter.y * invZ * invZ, 0.0);
  mat3 W = transpose(mat3(view));
  mat3 T = W * cov3d * transpose(W);
  mat3 cov2dFull = J * T * transpose(J);

  float a = cov2dFull[0][0] + 0.3;
  float b = cov2dFull[0][1];
  float d = cov2dFull[1][1] + 0.3;

  // eigen-decomposition of the symmetric 2x2
  float mean = 0.5 * (a + d);
  float root = sqrt(max(0.0, 0.25*(a - d)*(a - d) + b*b));
  float l1 = max(mean + root, 1e-6);
  float l2 = max(mean - root, 1e-6);
  vec2 e1 = normalize(vec2(b, l1 - a));
  if (abs(b) < 1e-9) e1 = (a >= d) ? vec2(1.0, 0.0) : vec2(0.0, 1.0);
  vec2 e2 = vec2(-e1.y, e1.x);

  vec2 pxOffset = corner.x * e1 * sqrt(l1) + corner.y * e2 * sqrt(l2);

  vec4 clip = proj * camCenter;
  vec2 ndcOffset = pxOffset * 2.0 / viewport * clip.w;
  gl_Position = vec4(clip.xy + ndcOffset, clip.zw);
  vColor = colorOpacity;
  vOffset = corner;
}
`;

const FRAG = `#version 300 es
precision highp float;

in vec4 vColor;
in vec2 vOffset;
out vec4 outColor;

void main() {
  float r2 = dot(vOffset, vOffset);
  if (r2 > 4.0) discard;
  float alpha = vColor.a * exp(-0.5 * r2);
  if (alpha < 1.0 / 255.0) discard;
  outColor = vec4(vColor.rgb * alpha, alpha);
}
`;

export class SplatRenderer {
  private gl: WebGL2RenderingContext;
  private program: WebGLProgram;
  private instanceBuffer: WebGLBuffer;
  private instanceData: Float32Array | null = null;
  private capacity = 0;
  private uniforms: { view: WebGLUniformLocation; proj: WebGLUniformLocation; viewport: WebGLUniformLocation };

  constructor(private canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl2", { antialias: false, alpha: false });
    if (!gl) throw new Error("WebGL2 is not available");
    this.gl = gl;

    const compile = (type: number, src: string) => {
      const sh = gl.createShader(type)!;
      gl.shaderSource(sh, src);
      gl.compileShader(sh);
      if (!gl.getShaderParameter(sh, gl.COMPILE_STATUS)) {
        throw new Error(`shader compile failed: ${gl.getShaderInfoLog(sh)}`);
      }
      return sh;
    };
    const program = gl.createProgram()!;
    gl.attachShader(program, compile(gl.VERTEX_SHADER, VERT));
    gl.attachShader(program, compile(gl.FRAGMENT_SHADER, FRAG));
    gl.linkProgram(program);
    if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
      throw new Error(`program link failed: ${gl.getProgramInfoLog(program)}`);
    }
    this.program = program;
    this.uniforms = {
      view: gl.getUniformLocation(program, "view")!,
      proj: gl.getUniformLocation(program, "proj")!,
      viewport: gl.getUniformLocation(program, "viewport")!,
    };

    // static quad corners
    const quad = gl.createBuffer()!;
    gl.bindBuffer(gl.ARRAY_BUFFER, quad);
    gl.bufferData(gl.ARRAY_BUFFER,
      new Float32Array([-2, -2, 2, -2, -2, 2, 2, 2]), gl.STATIC_DRAW);
    gl.enableVertexAttribArray(0);
    gl.vertexAttribPointer(0, 2, gl.FLOAT, false, 0, 0);

    this.instanceBuffer = gl.createBuffer()!;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.instanceBuffer);
    const stride = 14 * 4; // center3 + quat4 + scale3 + colorOpacity4
    const layout: [number, number, number][] = [
      [1, 3, 0], [2, 4, 3], [3, 3, 7], [4, 4, 10],
    ];
    for (const [loc, size, offset] of layout) {
      gl.enableVertexAttribArray(loc);
      gl.vertexAttribPointer(loc, size, gl.FLOAT, false, stride, offset * 4);
      gl.vertexAttribDivisor(loc, 1);
    }

    gl.disable(gl.DEPTH_TEST);
    gl.enable(gl.BLEND);
    // premultiplied alpha, back-to-front
    gl.blendFunc(gl.ONE, gl.ONE_MINUS_SRC_ALPHA);
    gl.clearColor(0.08, 0.09, 0.11, 1);
  }

  /** Upload instances in draw order and issue one instanced draw. */
  draw(bundle: AvatarBundle, state: SplatState, order: Int32Array,
       view: Float32Array, proj: Float32Array) {
    const gl = this.gl;
    const n = order.length;
    if (this.capacity < n) {
      this.instanceData = new Float32Array(14 * n);
      this.capacity = n;
    }
    const data = this.instanceData!;
    const fitScale = bundle.fitScale;
    for (let k = 0; k < n; k++) {
      const i = order[k];
      const o = 14 * k;
      data[o] = state.positions[3 * i];
      data[o + 1] = state.positions[3 * i + 1];
      data[o + 2] = state.positions[3 * i + 2];
      data[o + 3] = state.rotations[4 * i];
      data[o + 4] = state.rotations[4 * i + 1];
      data[o + 5] = state.rotations[4 * i + 2];
      data[o + 6] = state.rotations[4 * i + 3];
      data[o + 7] = bundle.scales[3 * i] * fitScale;
      data[o + 8] = bundle.scales[3 * i + 1] * fitScale;
      data[o + 9] = bundle.scales[3 * i + 2] * fitScale;
      data[o + 10] = bundle.colors[3 * i];
      data[o + 11] = bundle.colors[3 * i + 1];
      data[o + 12] = bundle.colors[3 * i + 2];
      data[o + 13] = bundle.opacities[i];
    }

    const w = this.canvas.width;
    const h = this.canvas.height;
    gl.viewport(0, 0, w, h);
    gl.clear(gl.COLOR_BUFFER_BIT);
    gl.useProgram(this.program);
    gl.uniformMatrix4fv(this.uniforms.view, false, view);
    gl.uniformMatrix4fv(this.uniforms.proj, false, proj);
    gl.uniform2f(this.uniforms.viewport, w, h);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.instanceBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, data.subarray(0, 14 * n), gl.DYNAMIC_DRAW);
    gl.drawArraysInstanced(gl.TRIANGLE_STRIP, 0, 4, n);
  }
}
