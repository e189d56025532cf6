/**
 * Bridge between a multi-task tfjs model and the on-disk dataset format.
 *
 * `extract` runs the model backbone up to its split point and writes the
 * feature tensor plus every task-head output as FTEN files indexed by a
 * manifest. `evaluate` feeds reconstructed feature files back into the
 * heads and scores them with the real task metrics, emitting the
 * accuracy CSV the analysis tools ingest. No selection or compression
 * happens here — that all lives on the other side of the file formats.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';
import * as tf from '@tensorflow/tfjs';

import {
  Manifest,
  ManifestSample,
  Tensor,
  loadManifest,
  readTensor,
  saveManifest,
  writeTensor,
} from './ften.js';
import {
  AccuracyRow,
  MetricName,
  meanIoU,
  psnr,
  rmse,
  writeAccuracyCsv,
} from './metrics.js';

export class ConfigError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'ConfigError';
  }
}

export class ValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'ValidationError';
  }
}

export interface TaskHead {
  taskId: number;
  metric: MetricName;
  /** Class-score heads (mIoU) set this; outputs are argmaxed over it. */
  classes?: number;
  /** features [1, fh, fw, C] -> [1, oh, ow, 1] or [1, oh, ow, classes] */
  apply(features: tf.Tensor4D): tf.Tensor4D;
}

export interface SplitModel {
  /** input image [1, h, w, ch] -> split-point features [1, fh, fw, C] */
  backbone(input: tf.Tensor4D): tf.Tensor4D;
  heads: TaskHead[];
}

export interface ExtractionConfig {
  model: SplitModel;
  inputs: tf.Tensor4D[];
  outDir: string;
  /** Feature patch side N and output patch side M; outputs must be M/N times larger. */
  patchN: number;
  patchM: number;
}

/**
 * Backbone from a layers model cut at a named layer. Unknown names get
 * a config error listing every layer so typos are cheap to fix.
 */
export function backboneFromLayersModel(
  model: tf.LayersModel,
  splitLayerName: string,
): (input: tf.Tensor4D) => tf.Tensor4D {
  const names = model.layers.map((l) => l.name);
  if (!names.includes(splitLayerName)) {
    throw new ConfigError(
      `layer '${splitLayerName}' not found; available layers: ${names.join(', ')}`,
    );
  }
  const cut = tf.model({
    inputs: model.inputs,
    outputs: model.getLayer(splitLayerName).output,
  });
  return (input) => cut.predict(input) as tf.Tensor4D;
}

function sampleName(index: number): string {
  return String(index).padStart(3, '0');
}

/** [1, h, w, c] NHWC tensor -> {dims: [c, h, w], data} */
function toChw(t: tf.Tensor4D): Tensor {
  const [, h, w, c] = t.shape;
  const chw = tf.tidy(() => t.transpose([0, 3, 1, 2]).reshape([c, h, w]));
  const data = chw.dataSync() as Float32Array;
  chw.dispose();
  return { dims: [c, h, w], data: new Float32Array(data) };
}

/** {dims: [c, h, w]} -> [1, h, w, c] NHWC tensor */
function toNhwc(t: Tensor): tf.Tensor4D {
  const [c, h, w] = t.dims;
  return tf.tidy(() =>
    tf.tensor(t.data, [1, c, h, w]).transpose([0, 2, 3, 1]),
  ) as tf.Tensor4D;
}

function headOutputImage(head: TaskHead, features: tf.Tensor4D): Tensor {
  return tf.tidy(() => {
    const raw = head.apply(features);
    const [, oh, ow, depth] = raw.shape;
    let image: tf.Tensor;
    if (head.classes !== undefined) {
      if (depth !== head.classes) {
        throw new ValidationError(
          `task ${head.taskId}: head emits ${depth} score planes, expected ${head.classes}`,
        );
      }
      image = raw.argMax(-1);
    } else {
      if (depth !== 1) {
        throw new ValidationError(
          `task ${head.taskId}: head output has ${depth} channels, expected 1`,
        );
      }
      image = raw.reshape([oh, ow]);
    }
    const data = new Float32Array(image.dataSync());
    return { dims: [oh, ow], data };
  });
}

function checkPatchRatio(
  config: ExtractionConfig,
  taskId: number,
  featureDims: number[],
  outputDims: number[],
): void {
  const [, fh, fw] = featureDims;
  const [oh, ow] = outputDims;
  const { patchN: n, patchM: m } = config;
  if (m * fh !== n * oh || m * fw !== n * ow) {
    throw new ValidationError(
      `task ${taskId}: output ${oh}x${ow} is not M/N = ${m}/${n} times ` +
        `the feature grid ${fh}x${fw}`,
    );
  }
}

/** Run every input through the split model and write the dataset. Returns the manifest path. */
export function extract(config: ExtractionConfig): string {
  if (config.inputs.length === 0) {
    throw new ConfigError('at least one input image is required');
  }
  const tasks = config.model.heads.map((h) => h.taskId);
  if (new Set(tasks).size !== tasks.length) {
    throw new ConfigError('duplicate task ids among heads');
  }
  const samples: ManifestSample[] = [];
  config.inputs.forEach((input, i) => {
    const features = config.model.backbone(input);
    const featureTensor = toChw(features);
    const featureRel = path.join('features', `${sampleName(i)}.ften`);
    writeTensor(featureTensor, path.join(config.outDir, featureRel));

    const outputs: Record<string, string> = {};
    for (const head of config.model.heads) {
      const image = headOutputImage(head, features);
      checkPatchRatio(config, head.taskId, featureTensor.dims, image.dims);
      const rel = path.join('outputs', `${sampleName(i)}_${head.taskId}.ften`);
      writeTensor(image, path.join(config.outDir, rel));
      outputs[String(head.taskId)] = rel;
    }
    features.dispose();
    samples.push({ sample_id: i, features: featureRel, outputs });
  });

  const manifest: Manifest = {
    patch: { N: config.patchN, M: config.patchM },
    tasks: tasks.slice().sort((a, b) => a - b),
    samples,
  };
  const manifestPath = path.join(config.outDir, 'manifest.json');
  saveManifest(manifest, manifestPath);
  return manifestPath;
}

export interface EvaluationConfig {
  model: SplitModel;
  /** manifest.json written by `extract` */
  originalManifest: string;
  /** Ground-truth FTEN files per task, aligned with the manifest samples. */
  references: Record<number, string[]>;
}

export interface SelectionInfo {
  criterion: string;
  keepCount: number;
  qp: number | null;
}

function scoreTask(
  metric: MetricName,
  classes: number | undefined,
  predictions: Tensor[],
  truths: Tensor[],
): number {
  const perSample = predictions.map((pred, i) => {
    const truth = truths[i];
    switch (metric) {
      case 'mIoU':
        return meanIoU(pred.data, truth.data, classes ?? 0);
      case 'RMSE':
        return rmse(pred.data, truth.data);
      case 'PSNR':
        return psnr(pred.data, truth.data);
    }
  });
  return perSample.reduce((a, b) => a + b, 0) / perSample.length;
}

/**
 * Score the heads on reconstructed features against ground truth, next
 * to the full-feature baseline, and write the accuracy CSV.
 *
 * Reconstructed files must mirror the original manifest's relative
 * feature paths under `reconstructedDir`. Tasks with no reference files
 * are skipped with a warning.
 */
export function evaluate(
  config: EvaluationConfig,
  reconstructedDir: string,
  selection: SelectionInfo,
  outCsv: string,
): AccuracyRow[] {
  const manifest: Manifest = loadManifest(config.originalManifest);
  const baseDir = path.dirname(config.originalManifest);

  const heads = config.model.heads.filter((head) => {
    const refs = config.references[head.taskId];
    if (!refs || refs.length !== manifest.samples.length) {
      console.warn(
        `task ${head.taskId} (${head.metric}): reference files missing, skipping`,
      );
      return false;
    }
    return true;
  });
  if (heads.length === 0) {
    throw new ConfigError('no task has a complete set of reference files');
  }

  const baseline = new Map<number, Tensor[]>(heads.map((h) => [h.taskId, []]));
  const selected = new Map<number, Tensor[]>(heads.map((h) => [h.taskId, []]));
  let channelCount = 0;
  for (const sample of manifest.samples) {
    const original = readTensor(path.join(baseDir, sample.features));
    const recon = readTensor(path.join(reconstructedDir, sample.features));
    if (recon.dims.join(',') !== original.dims.join(',')) {
      throw new ValidationError(
        `sample ${sample.sample_id}: reconstructed dims [${recon.dims}] ` +
          `differ from original [${original.dims}]`,
      );
    }
    channelCount = original.dims[0];
    const origNhwc = toNhwc(original);
    const reconNhwc = toNhwc(recon);
    for (const head of heads) {
      baseline.get(head.taskId)!.push(headOutputImage(head, origNhwc));
      selected.get(head.taskId)!.push(headOutputImage(head, reconNhwc));
    }
    origNhwc.dispose();
    reconNhwc.dispose();
  }

  const rows: AccuracyRow[] = [];
  for (const head of heads) {
    const truths = config.references[head.taskId].map(readTensor);
    rows.push({
      taskId: head.taskId,
      metric: head.metric,
      criterion: 'full',
      keepCount: channelCount,
      qp: null,
      accuracy: scoreTask(head.metric, head.classes, baseline.get(head.taskId)!, truths),
    });
    rows.push({
      taskId: head.taskId,
      metric: head.metric,
      criterion: selection.criterion,
      keepCount: selection.keepCount,
      qp: selection.qp,
      accuracy: scoreTask(head.metric, head.classes, selected.get(head.taskId)!, truths),
    });
  }
  writeAccuracyCsv(rows, outCsv);
  return rows;
}
