import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';
import { describe, expect, it } from 'vitest';

import {
  PSNR_CAP_DB,
  meanIoU,
  psnr,
  rmse,
  writeAccuracyCsv,
} from '../src/metrics.js';

describe('meanIoU', () => {
  it('is 1 for identical label maps', () => {
    const labels = [0, 1, 2, 1, 0, 2];
    expect(meanIoU(labels, labels, 3)).toBe(1);
  });

  it('matches a hand-computed confusion case', () => {
    // class 0: inter 1, union 3; class 1: inter 1, union 3
    const pred = [0, 0, 1, 1];
    const truth = [0, 1, 0, 1];
    expect(meanIoU(pred, truth, 2)).toBeCloseTo((1 / 3 + 1 / 3) / 2, 12);
  });

  it('ignores classes absent from both maps', () => {
    expect(meanIoU([0, 0], [0, 0], 5)).toBe(1);
  });
});

describe('rmse and psnr', () => {
  it('rmse of a constant offset is the offset', () => {
    const truth = [1, 2, 3, 4];
    const pred = truth.map((v) => v + 0.25);
    expect(rmse(pred, truth)).toBeCloseTo(0.25, 12);
  });

  it('psnr matches the closed form for a constant offset', () => {
    const truth = [0, 1, 2, 3]; // range 3
    const pred = truth.map((v) => v + 0.3);
    expect(psnr(pred, truth)).toBeCloseTo(10 * Math.log10(9 / 0.09), 10);
  });

  it('psnr caps at the ceiling for exact prediction', () => {
    expect(psnr([1, 2], [1, 2])).toBe(PSNR_CAP_DB);
  });

  it('rejects mismatched sizes', () => {
    expect(() => rmse([1], [1, 2])).toThrow();
    expect(() => psnr([1], [1, 2])).toThrow();
  });
});

describe('accuracy csv', () => {
  it('writes the ingestion schema with blank qp for hard rows', () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'acc-'));
    const file = path.join(dir, 'accuracy.csv');
    writeAccuracyCsv(
      [
        { taskId: 0, metric: 'PSNR', criterion: 'full', keepCount: 3, qp: null, accuracy: 41.25 },
        { taskId: 0, metric: 'PSNR', criterion: 'mi', keepCount: 2, qp: 10, accuracy: 39.5 },
        { taskId: 1, metric: 'RMSE', criterion: 'mi', keepCount: 2, qp: null, accuracy: 0.125 },
      ],
      file,
    );
    const lines = fs.readFileSync(file, 'utf-8').trim().split('\n');
    expect(lines[0]).toBe('task_id,metric,direction,criterion,keep_count,qp,accuracy');
    expect(lines[1]).toBe('0,PSNR,higher-better,full,3,,41.25');
    expect(lines[2]).toBe('0,PSNR,higher-better,mi,2,10,39.5');
    expect(lines[3]).toBe('1,RMSE,lower-better,mi,2,,0.125');
    fs.rmSync(dir, { recursive: true, force: true });
  });
});
