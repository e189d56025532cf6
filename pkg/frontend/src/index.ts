export {
  DTYPE_F32,
  DTYPE_U8,
  FormatError,
  Manifest,
  ManifestSample,
  Tensor,
  loadManifest,
  readTensor,
  saveManifest,
  writeTensor,
} from './ften.js';
export {
  AccuracyRow,
  Direction,
  METRIC_DIRECTION,
  MetricName,
  PSNR_CAP_DB,
  meanIoU,
  psnr,
  rmse,
  writeAccuracyCsv,
} from './metrics.js';
export {
  ConfigError,
  EvaluationConfig,
  ExtractionConfig,
  SelectionInfo,
  SplitModel,
  TaskHead,
  ValidationError,
  backboneFromLayersModel,
  evaluate,
  extract,
} from './adapter.js';
