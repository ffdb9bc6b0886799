/** Viewer session: loaded avatar + playback state + sorting policy.
 *
 * Pure state machine, no DOM or GL here, so it is unit-testable. The
 * bundle is never mutated; a session can be reloaded at will. Group
 * sorting runs inline every tick (17 keys is nothing); full sorting is
 * meant to run in a worker at reduced cadence, so `tick` accepts an
 * optional externally computed full order and reports its staleness.
 */

import { AvatarBundle, hashHex, parseBundle } from "./bundle.js";
import { AnimationClip, parseClip, sampleAnimation } from "./animation.js";
import { Vec3 } from "./math.js";
import { Pose, Rig, fitPoseFromBundle, parseRig } from "./rig.js";
import { SplatState, fullSort, groupSort, updateSplats, vertexFrameTables } from "./runtime.js";

export type SortMode = "group" | "full";

export class HashMismatchError extends Error {}

export interface FrameResult {
  state: SplatState;
  order: Int32Array;
  t: number;
  /** ticks since the full order was recomputed (0 when fresh or in group mode) */
  sortStaleness: number;
}

export class ViewerSession {
  readonly bundle: AvatarBundle;
  readonly rig: Rig;
  readonly clip: AnimationClip;
  readonly basePose: Pose;

  t = 0;
  playing = false;
  mode: SortMode = "group";

  private lastFullOrder: Int32Array | null = null;
  private fullOrderAge = 0;

  private constructor(bundle: AvatarBundle, rig: Rig, clip: AnimationClip) {
    this.bundle = bundle;
    this.rig = rig;
    this.clip = clip;
    this.basePose = fitPoseFromBundle(bundle, rig);
  }

  /** Parse all three artifacts and verify the bundle/rig pairing. */
  static async load(bundleBuf: ArrayBuffer, rigText: string, clipText: string): Promise<ViewerSession> {
    const bundle = parseBundle(bundleBuf);
    const rig = parseRig(rigText);
    const clip = parseClip(clipText);
    const hash = await rig.contentHash();
    if (hashHex(hash) !== hashHex(bundle.rigHash)) {
      throw new HashMismatchError(
        `bundle was bound against rig ${hashHex(bundle.rigHash).slice(0, 12)}..., ` +
          `the supplied rig hashes to ${hashHex(hash).slice(0, 12)}...`,
      );
    }
    if (bundle.jointCount !== rig.jointCount) {
      throw new HashMismatchError(
        `bundle has ${bundle.jointCount} joints, rig has ${rig.jointCount}`,
      );
    }
    return new ViewerSession(bundle, rig, clip);
  }

  poseAt(t: number): Pose {
    return sampleAnimation(this.clip, this.rig, t, this.basePose);
  }

  /** Evaluate splats at the current time (pure, does not advance time). */
  evaluate(): SplatState {
    return updateSplats(this.bundle, vertexFrameTables(this.rig, this.poseAt(this.t)));
  }

  /** Advance time (if playing), update splats, compute the draw order.
   *
   * In full mode, `externalFullOrder` (from the sort worker) replaces the
   * cached order; otherwise the stale one is reused and its age reported.
   */
  tick(dt: number, camPos: Vec3, camForward: Vec3, externalFullOrder?: Int32Array): FrameResult {
    if (this.playing) {
      const span = this.clip.duration > 0 ? this.clip.duration : 1;
      this.t = this.clip.loop ? (this.t + dt) % span : Math.min(this.t + dt, span);
    }
    const state = this.evaluate();

    let order: Int32Array;
    if (this.mode === "group") {
      order = groupSort(state.positions, this.bundle.groups, camPos, camForward);
      this.fullOrderAge = 0;
    } else {
      if (externalFullOrder && externalFullOrder.length === this.bundle.splatCount) {
        this.lastFullOrder = externalFullOrder;
        this.fullOrderAge = 0;
      } else if (this.lastFullOrder) {
        this.fullOrderAge += 1;
      }
      if (!this.lastFullOrder) {
        this.lastFullOrder = fullSort(state.positions, camPos, camForward);
        this.fullOrderAge = 0;
      }
      order = this.lastFullOrder;
    }
    return { state, order, t: this.t, sortStaleness: this.fullOrderAge };
  }

  setMode(mode: SortMode) {
    this.mode = mode;
    if (mode === "full") this.lastFullOrder = null; // force a fresh sort
  }

  scrub(t: number) {
    this.t = Math.max(0, Math.min(t, this.clip.duration));
    this.lastFullOrder = null;
  }
}
