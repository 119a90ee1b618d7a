/**
 * The classifier architecture, expressed in tfjs: seven K=5 convolutions
 * (channels 8..128, each followed by 2/2 average pooling) applied per
 * window, global average pooling into a 128-vector per window, a 64-unit
 * GRU over the window sequence, and a 4-class softmax head. 194,596
 * parameters total; 50% dropout on the GRU's input and recurrent gates.
 */

import * as tf from "@tensorflow/tfjs";

import type { FloatModel, Layer } from "./fxf1.js";

export const WINDOW_LEN = 256;
export const CLASS_NAMES = ["Normal", "AF", "Other", "Noise"];
export const CONV_CHANNELS = [8, 16, 32, 64, 64, 128, 128];
export const GRU_UNITS = 64;
export const EXPECTED_PARAMS = 194596;

export function buildModel(seqLen: number, gateDropout = 0.5): tf.Sequential {
  const model = tf.sequential();
  let first = true;
  for (const filters of CONV_CHANNELS) {
    const conv = tf.layers.conv1d({
      filters,
      kernelSize: 5,
      padding: "same",
      activation: "relu",
    });
    model.add(
      tf.layers.timeDistributed(
        first ? { layer: conv, inputShape: [seqLen, WINDOW_LEN, 1] } : { layer: conv },
      ),
    );
    model.add(
      tf.layers.timeDistributed({
        layer: tf.layers.averagePooling1d({ poolSize: 2, strides: 2 }),
      }),
    );
    first = false;
  }
  model.add(tf.layers.timeDistributed({ layer: tf.layers.globalAveragePooling1d({}) }));
  // tfjs GRU is the single-bias, reset-before-matmul variant:
  // 3*(M*H + H*H + H) parameters, verified by the count check below
  model.add(
    tf.layers.gru({
      units: GRU_UNITS,
      dropout: gateDropout,
      recurrentDropout: gateDropout,
    }),
  );
  model.add(tf.layers.dense({ units: CLASS_NAMES.length, activation: "softmax" }));

  const params = model.countParams();
  if (params !== EXPECTED_PARAMS) {
    throw new Error(`architecture drift: ${params} parameters, expected ${EXPECTED_PARAMS}`);
  }
  return model;
}

function toFloat32(t: tf.Tensor): Float32Array {
  return new Float32Array(t.dataSync());
}

/** Pull trained weights out of tfjs into the FXF1 layout. */
export function extractFloatModel(model: tf.Sequential): FloatModel {
  const layers: Layer[] = [];
  let convIdx = 0;

  for (const wrapper of model.layers) {
    const cls = wrapper.getClassName();
    if (cls === "TimeDistributed") {
      const inner = (wrapper as unknown as { layer: tf.layers.Layer }).layer;
      const innerCls = inner.getClassName();
      if (innerCls === "Conv1D") {
        convIdx += 1;
        const [kernel, bias] = wrapper.getWeights();
        const [k, c, n] = kernel.shape as [number, number, number];
        layers.push({
          type: "conv",
          name: `conv${convIdx}`,
          kernelSize: k,
          inChannels: c,
          outChannels: n,
          stride: 1,
          padding: "same",
          activation: "relu",
          // tfjs stores (K, C, N); the engine wants (N, K, C)
          weights: toFloat32(tf.tidy(() => kernel.transpose([2, 0, 1]))),
          bias: toFloat32(bias),
        });
      } else if (innerCls === "AveragePooling1D") {
        layers.push({ type: "pool", name: `pool${convIdx}`, size: 2, stride: 2 });
      } else if (innerCls === "GlobalAveragePooling1D") {
        layers.push({ type: "gap", name: "gap" });
      } else {
        throw new Error(`unexpected wrapped layer ${innerCls}`);
      }
    } else if (cls === "GRU") {
      const [kernel, recurrent, bias] = wrapper.getWeights();
      const m = kernel.shape[0] as number;
      const h = recurrent.shape[0] as number;
      layers.push({
        type: "gru",
        name: "gru",
        inputDim: m,
        hiddenDim: h,
        // tfjs packs gates along columns (M, 3H) in z|r|candidate order;
        // the engine wants (3, H, M) with preact_i = sum_j W[g][i][j] x[j]
        kernel: toFloat32(tf.tidy(() => kernel.reshape([m, 3, h]).transpose([1, 2, 0]))),
        recurrent: toFloat32(tf.tidy(() => recurrent.reshape([h, 3, h]).transpose([1, 2, 0]))),
        bias: toFloat32(bias),
      });
    } else if (cls === "Dense") {
      const [kernel, bias] = wrapper.getWeights();
      const [m, n] = kernel.shape as [number, number];
      layers.push({
        type: "dense",
        name: "dense",
        inDim: m,
        outDim: n,
        weights: toFloat32(tf.tidy(() => kernel.transpose([1, 0]))),
        bias: toFloat32(bias),
      });
      layers.push({ type: "softmax", name: "softmax" });
    } else {
      throw new Error(`unexpected layer ${cls}`);
    }
  }
  return { windowLen: WINDOW_LEN, classNames: CLASS_NAMES, layers };
}
