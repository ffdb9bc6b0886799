/** Full-sort worker: exact per-splat back-to-front order off the main
 * thread. Positions are copied in (the session keeps its own buffer);
 * the order is transferred back. One job in flight at a time. */

import { Vec3 } from "./math.js";
import { fullSort } from "./runtime.js";

interface SortJob {
  jobId: number;
  positions: Float32Array;
  camPos: Vec3;
  camForward: Vec3;
}

self.onmessage = (e: MessageEvent) => {
  const job = e.data as SortJob;
  const order = fullSort(job.positions, job.camPos, job.camForward);
  (self as unknown as Worker).postMessage(
    { jobId: job.jobId, order },
    [order.buffer],
  );
};
