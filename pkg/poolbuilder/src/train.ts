/** Training of pool member CNNs on class subsets. */
import * as tf from "@tensorflow/tfjs";
import { buildModel } from "./arch";
import { augmentImage, Dataset, makeRng, PIXELS } from "./data";
import { ClassifierRecipe, PoolRecipe } from "./recipe";

export interface TrainedClassifier {
  recipe: ClassifierRecipe;
  /** Sorted class subset; model output i corresponds to subset[i]. */
  subset: number[];
  model: tf.LayersModel;
  /** Accuracy over the full 10-class test split via zero-embedding. */
  testAccuracy: number;
}

function subsetIndices(labels: Uint16Array, subset: number[]): number[] {
  const member = new Set(subset);
  const out: number[] = [];
  for (let i = 0; i < labels.length; i++) {
    if (member.has(labels[i])) {
      out.push(i);
    }
  }
  return out;
}

function compileWith(model: tf.LayersModel, lr: number): void {
  model.compile({
    optimizer: tf.train.sgd(lr),
    loss: "sparseCategoricalCrossentropy",
  });
}

/** Batched subset-class probabilities for every example in `images`. */
export function predictAll(model: tf.LayersModel, images: Float32Array, nOut: number): Float32Array {
  const n = images.length / PIXELS;
  const out = new Float32Array(n * nOut);
  const bs = 256;
  for (let start = 0; start < n; start += bs) {
    const count = Math.min(bs, n - start);
    const probs = tf.tidy(() => {
      const x = tf.tensor4d(
        images.subarray(start * PIXELS, (start + count) * PIXELS),
        [count, 32, 32, 3]
      );
      return (model.predict(x) as tf.Tensor).dataSync();
    });
    out.set(probs as Float32Array, start * nOut);
  }
  return out;
}

export function tenClassAccuracy(clf: { subset: number[]; model: tf.LayersModel }, images: Float32Array, labels: Uint16Array): number {
  const nOut = clf.subset.length;
  const probs = predictAll(clf.model, images, nOut);
  let correct = 0;
  for (let i = 0; i < labels.length; i++) {
    let best = 0;
    for (let j = 1; j < nOut; j++) {
      if (probs[i * nOut + j] > probs[i * nOut + best]) {
        best = j;
      }
    }
    if (clf.subset[best] === labels[i]) {
      correct += 1;
    }
  }
  return correct / labels.length;
}

export async function trainClassifier(recipe: PoolRecipe, clf: ClassifierRecipe, data: Dataset, seedOffset: number, log: (msg: string) => void): Promise<TrainedClassifier> {
  const subset = [...clf.class_subset].sort((a, b) => a - b);
  const toLocal = new Map(subset.map((c, i) => [c, i]));
  const indices = subsetIndices(data.trainLabels, subset);
  if (indices.length === 0) {
    throw new Error(`no training examples with labels in {${subset}}`);
  }
  const rng = makeRng(recipe.seed + 7919 * seedOffset);
  const model = buildModel(clf.arch_id, subset.length);
  let lr = recipe.learning_rate;
  compileWith(model, lr);

  const bs = recipe.batch_size;
  const batchImages = new Float32Array(bs * PIXELS);
  const batchLabels = new Int32Array(bs);
  for (let epoch = 1; epoch <= recipe.epochs; epoch++) {
    if (recipe.lr_drop_epochs.includes(epoch)) {
      lr *= 0.1;
      compileWith(model, lr); // plain SGD carries no state across compiles
    }
    // Fisher-Yates shuffle from the run's own rng
    for (let i = indices.length - 1; i > 0; i--) {
      const j = Math.floor(rng() * (i + 1));
      [indices[i], indices[j]] = [indices[j], indices[i]];
    }
    let lossSum = 0;
    let nBatches = 0;
    for (let start = 0; start + 1 < indices.length; start += bs) {
      const count = Math.min(bs, indices.length - start);
      for (let k = 0; k < count; k++) {
        const src = indices[start + k];
        if (recipe.augment) {
          augmentImage(data.trainImages, src * PIXELS, batchImages, k * PIXELS, rng);
        } else {
          batchImages.set(
            data.trainImages.subarray(src * PIXELS, (src + 1) * PIXELS),
            k * PIXELS
          );
        }
        batchLabels[k] = toLocal.get(data.trainLabels[src])!;
      }
      const x = tf.tensor4d(batchImages.subarray(0, count * PIXELS), [count, 32, 32, 3]);
      // tfjs's sparse CE loss expects float targets, which it floors
      const y = tf.tensor1d(Float32Array.from(batchLabels.subarray(0, count)));
      const loss = (await model.trainOnBatch(x, y)) as number;
      x.dispose();
      y.dispose();
      lossSum += loss;
      nBatches += 1;
    }
    log(
      `epoch ${epoch}/${recipe.epochs} lr=${lr.toPrecision(3)} ` +
        `loss=${(lossSum / Math.max(nBatches, 1)).toFixed(4)}`
    );
  }
  const testAccuracy = tenClassAccuracy({ subset, model }, data.testImages, data.testLabels);
  log(`10-class test accuracy ${(100 * testAccuracy).toFixed(2)}%`);
  return { recipe: clf, subset, model, testAccuracy };
}

export async function trainPool(recipe: PoolRecipe, data: Dataset, log: (msg: string) => void = () => {}): Promise<TrainedClassifier[]> {
  const trained: TrainedClassifier[] = [];
  for (let i = 0; i < recipe.classifiers.length; i++) {
    const clf = recipe.classifiers[i];
    const name = clf.name ?? `clf${i}`;
    const tagged = (msg: string) => log(`[${name}] ${msg}`);
    trained.push(await trainClassifier(recipe, clf, data, i, tagged));
  }
  return trained;
}
