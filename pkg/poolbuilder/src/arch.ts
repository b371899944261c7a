/** The two tiny CNN architectures used for pool members. */
import * as tf from "@tensorflow/tfjs";
import { CHANNELS, IMAGE_SIZE } from "./data";

/**
 * Architecture 1: two convolutions (6 and 16 filters), each followed by
 * max-pooling, then 120/84/out fully connected layers.
 */
function buildArch1(nOut: number): tf.LayersModel {
  const model = tf.sequential();
  model.add(
    tf.layers.conv2d({
      inputShape: [IMAGE_SIZE, IMAGE_SIZE, CHANNELS],
      filters: 6,
      kernelSize: 5,
      activation: "relu",
    })
  );
  model.add(tf.layers.maxPooling2d({ poolSize: 2 }));
  model.add(tf.layers.conv2d({ filters: 16, kernelSize: 5, activation: "relu" }));
  model.add(tf.layers.maxPooling2d({ poolSize: 2 }));
  model.add(tf.layers.flatten());
  model.add(tf.layers.dense({ units: 120, activation: "relu" }));
  model.add(tf.layers.dense({ units: 84, activation: "relu" }));
  model.add(tf.layers.dense({ units: nOut, activation: "softmax" }));
  return model;
}

/**
 * Architecture 2: three convolutions — max-pool after the first,
 * average-pool after the second and third — and no fully connected
 * layers; the head is an nOut-filter convolution reduced by global
 * average pooling.
 */
function buildArch2(nOut: number): tf.LayersModel {
  const model = tf.sequential();
  model.add(
    tf.layers.conv2d({
      inputShape: [IMAGE_SIZE, IMAGE_SIZE, CHANNELS],
      filters: 32,
      kernelSize: 3,
      padding: "same",
      activation: "relu",
    })
  );
  model.add(tf.layers.maxPooling2d({ poolSize: 2 }));
  model.add(
    tf.layers.conv2d({ filters: 64, kernelSize: 3, padding: "same", activation: "relu" })
  );
  model.add(tf.layers.avgPooling2d({ poolSize: 2 }));
  model.add(tf.layers.conv2d({ filters: nOut, kernelSize: 3, padding: "same" }));
  model.add(tf.layers.avgPooling2d({ poolSize: 2 }));
  model.add(tf.layers.globalAveragePooling2d({}));
  model.add(tf.layers.activation({ activation: "softmax" }));
  return model;
}

export function buildModel(archId: 1 | 2, nOut: number): tf.LayersModel {
  if (nOut < 1) {
    throw new Error("model needs at least one output class");
  }
  return archId === 1 ? buildArch1(nOut) : buildArch2(nOut);
}
