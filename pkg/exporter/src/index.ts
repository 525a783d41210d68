export { Tensor4D, tensor4d, assert4d, nchwToNhwc, concatBatches, ShapeError } from './tensor'
export { npyHeader, encodeNpy } from './npy'
export {
  Layer,
  SequentialModel,
  SelectorError,
  ModelError,
  validateModel,
  resolveLayerIndex,
  loadModel,
} from './model'
export {
  ExportOptions,
  ExportResult,
  exportFeatures,
  loadPatchDir,
  batchInput,
  captureActivations,
} from './exporter'
