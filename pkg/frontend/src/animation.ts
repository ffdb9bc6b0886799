/** anim.json parsing and pose sampling.
 *
 * Tracks hold absolute local rotations (slerp between keys, clamp at the
 * ends, wrap when looping). Played over a base pose, the root track
 * composes after the base root rotation and root-translation keys are
 * additive offsets, so a fitted placement survives clip playback.
 */

import { Quat, Vec3, quatMultiply, quatSlerp } from "./math.js";
import { Pose, Rig } from "./rig.js";

export interface Track {
  times: Float64Array;
  rotations: Float64Array; // K*4
}

export interface AnimationClip {
  duration: number;
  loop: boolean;
  tracks: Map<string, Track>;
  rootTranslation: { times: Float64Array; offsets: Float64Array } | null;
}

export class AnimationError extends Error {}

export function parseClip(text: string): AnimationClip {
  let doc: any;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new AnimationError(`animation file is not valid JSON: ${e}`);
  }
  if (typeof doc.duration !== "number" || doc.duration < 0) {
    throw new AnimationError("duration must be a non-negative number");
  }
  const tracks = new Map<string, Track>();
  for (const [name, keys] of Object.entries(doc.tracks ?? {})) {
    const ks = keys as any[];
    const times = new Float64Array(ks.map((k) => k.t));
    const rotations = new Float64Array(4 * ks.length);
    ks.forEach((k, i) => rotations.set(k.rotation, 4 * i));
    for (let i = 1; i < times.length; i++) {
      if (times[i] <= times[i - 1]) {
        throw new AnimationError(`track '${name}': key times must be strictly increasing`);
      }
    }
    if (times.length && times[times.length - 1] > doc.duration + 1e-9) {
      throw new AnimationError(`track '${name}': key beyond clip duration`);
    }
    tracks.set(name, { times, rotations });
  }
  let rootTranslation = null;
  if (doc.root_translation) {
    const ks = doc.root_translation as any[];
    rootTranslation = {
      times: new Float64Array(ks.map((k) => k.t)),
      offsets: new Float64Array(ks.flatMap((k) => k.translation)),
    };
  }
  return { duration: doc.duration, loop: !!doc.loop, tracks, rootTranslation };
}

function bracket(times: Float64Array, t: number): number {
  let lo = 0;
  let hi = times.length;
  while (lo < hi) {
    const mid = (lo + hi) >> 1;
    if (times[mid] <= t) lo = mid + 1;
    else hi = mid;
  }
  return lo - 1;
}

function sampleQuatTrack(track: Track, t: number): Quat {
  const { times, rotations } = track;
  const k = times.length;
  const at = (i: number): Quat => [
    rotations[4 * i], rotations[4 * i + 1], rotations[4 * i + 2], rotations[4 * i + 3],
  ];
  if (t <= times[0]) return at(0);
  if (t >= times[k - 1]) return at(k - 1);
  const i = bracket(times, t);
  if (t === times[i]) return at(i);
  const u = (t - times[i]) / (times[i + 1] - times[i]);
  return quatSlerp(at(i), at(i + 1), u);
}

export function sampleAnimation(clip: AnimationClip, rig: Rig, t: number, basePose?: Pose): Pose {
  if (t < 0) throw new AnimationError("t must be >= 0");
  if (clip.loop && clip.duration > 0) t = t % clip.duration;

  const base = basePose ?? rig.bindPose();
  const pose: Pose = {
    rotations: new Float64Array(base.rotations),
    rootTranslation: [...base.rootTranslation] as Vec3,
    rootScale: base.rootScale,
  };
  let root = 0;
  while (rig.parents[root] >= 0) root++;

  for (const [name, track] of clip.tracks) {
    const j = rig.jointIndex.get(name);
    if (j === undefined) throw new AnimationError(`track '${name}' names no joint in the rig`);
    if (track.times.length === 0) continue;
    const q = sampleQuatTrack(track, t);
    if (j === root) {
      const baseQ: Quat = [
        pose.rotations[4 * j], pose.rotations[4 * j + 1],
        pose.rotations[4 * j + 2], pose.rotations[4 * j + 3],
      ];
      pose.rotations.set(quatMultiply(baseQ, q), 4 * j);
    } else {
      pose.rotations.set(q, 4 * j);
    }
  }

  if (clip.rootTranslation && clip.rootTranslation.times.length) {
    const { times, offsets } = clip.rootTranslation;
    const k = times.length;
    let off: Vec3;
    if (t <= times[0]) off = [offsets[0], offsets[1], offsets[2]];
    else if (t >= times[k - 1]) off = [offsets[3 * (k - 1)], offsets[3 * (k - 1) + 1], offsets[3 * (k - 1) + 2]];
    else {
      const i = bracket(times, t);
      const u = (t - times[i]) / (times[i + 1] - times[i]);
      off = [0, 1, 2].map(
        (c) => offsets[3 * i + c] + u * (offsets[3 * (i + 1) + c] - offsets[3 * i + c]),
      ) as Vec3;
    }
    pose.rootTranslation = [
      pose.rootTranslation[0] + off[0],
      pose.rootTranslation[1] + off[1],
      pose.rootTranslation[2] + off[2],
    ];
  }
  return pose;
}
