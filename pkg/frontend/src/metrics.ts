/**
 * Task metrics and the accuracy CSV consumed by the analysis tools.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

export type Direction = 'higher-better' | 'lower-better';

export type MetricName = 'mIoU' | 'RMSE' | 'PSNR';

export const METRIC_DIRECTION: Record<MetricName, Direction> = {
  mIoU: 'higher-better',
  RMSE: 'lower-better',
  PSNR: 'higher-better',
};

/** Mean intersection-over-union over classes present in the reference. */
export function meanIoU(
  pred: ArrayLike<number>,
  truth: ArrayLike<number>,
  numClasses: number,
): number {
  if (pred.length !== truth.length) {
    throw new Error(`label maps differ in size: ${pred.length} vs ${truth.length}`);
  }
  const inter = new Array<number>(numClasses).fill(0);
  const union = new Array<number>(numClasses).fill(0);
  for (let i = 0; i < pred.length; i++) {
    const p = pred[i];
    const t = truth[i];
    if (p === t) inter[p]++;
    union[p]++;
    if (p !== t) union[t]++;
  }
  let sum = 0;
  let present = 0;
  for (let c = 0; c < numClasses; c++) {
    if (union[c] > 0) {
      sum += inter[c] / union[c];
      present++;
    }
  }
  return present > 0 ? sum / present : 0;
}

export function rmse(pred: ArrayLike<number>, truth: ArrayLike<number>): number {
  if (pred.length !== truth.length) {
    throw new Error(`images differ in size: ${pred.length} vs ${truth.length}`);
  }
  let acc = 0;
  for (let i = 0; i < pred.length; i++) {
    const d = pred[i] - truth[i];
    acc += d * d;
  }
  return Math.sqrt(acc / pred.length);
}

export const PSNR_CAP_DB = 100;

/** Peak signal-to-noise ratio in dB against the reference's value range. */
export function psnr(pred: ArrayLike<number>, truth: ArrayLike<number>): number {
  if (pred.length !== truth.length) {
    throw new Error(`images differ in size: ${pred.length} vs ${truth.length}`);
  }
  let lo = Infinity;
  let hi = -Infinity;
  let mse = 0;
  for (let i = 0; i < truth.length; i++) {
    lo = Math.min(lo, truth[i]);
    hi = Math.max(hi, truth[i]);
    const d = pred[i] - truth[i];
    mse += d * d;
  }
  mse /= truth.length;
  const range = hi - lo;
  if (mse === 0 || range === 0) return PSNR_CAP_DB;
  return Math.min(PSNR_CAP_DB, 10 * Math.log10((range * range) / mse));
}

export type AccuracyRow = {
  taskId: number;
  metric: MetricName;
  /** 'full' for the all-channels baseline, else the selection criterion. */
  criterion: string;
  keepCount: number;
  qp: number | null;
  accuracy: number;
};

const CSV_HEADER = 'task_id,metric,direction,criterion,keep_count,qp,accuracy';

export function writeAccuracyCsv(rows: AccuracyRow[], filePath: string): void {
  const lines = [CSV_HEADER];
  for (const r of rows) {
    lines.push(
      [
        r.taskId,
        r.metric,
        METRIC_DIRECTION[r.metric],
        r.criterion,
        r.keepCount,
        r.qp === null ? '' : r.qp,
        formatNumber(r.accuracy),
      ].join(','),
    );
  }
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  const tmp = `${filePath}.tmp${process.pid}`;
  fs.writeFileSync(tmp, lines.join('\n') + '\n');
  fs.renameSync(tmp, filePath);
}

function formatNumber(x: number): string {
  return Number(x.toPrecision(10)).toString();
}
