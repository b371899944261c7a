/**
 * CIFAR-10 loading (binary batch files) and a synthetic stand-in for
 * smoke runs, plus the geometric augmentation used during training.
 */
import * as fs from "fs";
import * as path from "path";

export const IMAGE_SIZE = 32;
export const CHANNELS = 3;
export const N_CLASSES = 10;
export const PIXELS = IMAGE_SIZE * IMAGE_SIZE * CHANNELS;

export interface Dataset {
  /** Flat [example][row][col][channel], values in [0, 1]. */
  trainImages: Float32Array;
  trainLabels: Uint16Array;
  testImages: Float32Array;
  testLabels: Uint16Array;
}

export class DatasetMissingError extends Error {}

const TRAIN_FILES = [1, 2, 3, 4, 5].map((i) => `data_batch_${i}.bin`);
const TEST_FILE = "test_batch.bin";
const RECORD = 1 + PIXELS; // label byte + CHW pixel bytes

function findDataDir(dir: string): string {
  for (const candidate of [dir, path.join(dir, "cifar-10-batches-bin")]) {
    if (fs.existsSync(path.join(candidate, TEST_FILE))) {
      return candidate;
    }
  }
  throw new DatasetMissingError(
    `CIFAR-10 binary batches not found under ${dir}. Download ` +
      "cifar-10-binary.tar.gz from https://www.cs.toronto.edu/~kriz/cifar.html, " +
      `extract it, and point data_dir (or --data-dir) at the directory ` +
      `containing ${TRAIN_FILES[0]} .. ${TEST_FILE}.`
  );
}

function readBatchFile(file: string, images: Float32Array, labels: Uint16Array, offset: number): number {
  const buf = fs.readFileSync(file);
  if (buf.length % RECORD !== 0) {
    throw new Error(`${file}: size ${buf.length} is not a whole number of records`);
  }
  const n = buf.length / RECORD;
  for (let i = 0; i < n; i++) {
    const rec = i * RECORD;
    labels[offset + i] = buf[rec];
    // file stores channel-major planes; convert to HWC
    for (let c = 0; c < CHANNELS; c++) {
      for (let p = 0; p < IMAGE_SIZE * IMAGE_SIZE; p++) {
        images[(offset + i) * PIXELS + p * CHANNELS + c] =
          buf[rec + 1 + c * IMAGE_SIZE * IMAGE_SIZE + p] / 255;
      }
    }
  }
  return n;
}

export function loadCifar10(dir: string): Dataset {
  const base = findDataDir(dir);
  for (const f of TRAIN_FILES) {
    if (!fs.existsSync(path.join(base, f))) {
      throw new DatasetMissingError(
        `CIFAR-10 directory ${base} is missing ${f}; re-extract the archive.`
      );
    }
  }
  const countIn = (f: string) => fs.statSync(path.join(base, f)).size / RECORD;
  const nTrain = TRAIN_FILES.reduce((sum, f) => sum + countIn(f), 0);
  const trainImages = new Float32Array(nTrain * PIXELS);
  const trainLabels = new Uint16Array(nTrain);
  let offset = 0;
  for (const f of TRAIN_FILES) {
    offset += readBatchFile(path.join(base, f), trainImages, trainLabels, offset);
  }
  const nTest = countIn(TEST_FILE);
  const testImages = new Float32Array(nTest * PIXELS);
  const testLabels = new Uint16Array(nTest);
  readBatchFile(path.join(base, TEST_FILE), testImages, testLabels, 0);
  return { trainImages, trainLabels, testImages, testLabels };
}

/** Deterministic 32-bit RNG (mulberry32). */
export function makeRng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/**
 * Class-dependent colored blobs with noise: learnable by a tiny CNN in
 * one epoch, used for `--smoke` runs and tests.
 */
export function syntheticDataset(nTrain: number, nTest: number, seed: number): Dataset {
  const rng = makeRng(seed);
  const make = (n: number) => {
    const images = new Float32Array(n * PIXELS);
    const labels = new Uint16Array(n);
    for (let i = 0; i < n; i++) {
      const y = i % N_CLASSES;
      labels[i] = y;
      const r = ((y & 1) + 1) / 3;
      const g = (((y >> 1) & 1) + 1) / 3;
      const b = (((y >> 2) & 1) + 1) / 3;
      const stripe = y % 4;
      for (let p = 0; p < IMAGE_SIZE * IMAGE_SIZE; p++) {
        const row = Math.floor(p / IMAGE_SIZE);
        const bright = row % 4 === stripe ? 0.3 : 0.0;
        const base = i * PIXELS + p * CHANNELS;
        images[base] = Math.min(1, r + bright + 0.1 * rng());
        images[base + 1] = Math.min(1, g + bright + 0.1 * rng());
        images[base + 2] = Math.min(1, b + bright + 0.1 * rng());
      }
    }
    return { images, labels };
  };
  const train = make(nTrain);
  const test = make(nTest);
  return {
    trainImages: train.images,
    trainLabels: train.labels,
    testImages: test.images,
    testLabels: test.labels,
  };
}

/**
 * Random crop with 4-pixel zero padding plus horizontal flip, applied
 * per image on the flat HWC array.
 */
export function augmentImage(src: Float32Array, srcOffset: number, dst: Float32Array, dstOffset: number, rng: () => number): void {
  const pad = 4;
  const dy = Math.floor(rng() * (2 * pad + 1)) - pad;
  const dx = Math.floor(rng() * (2 * pad + 1)) - pad;
  const flip = rng() < 0.5;
  for (let row = 0; row < IMAGE_SIZE; row++) {
    const srcRow = row + dy;
    for (let col = 0; col < IMAGE_SIZE; col++) {
      const outCol = flip ? IMAGE_SIZE - 1 - col : col;
      const srcCol = col + dx;
      const out = dstOffset + (row * IMAGE_SIZE + outCol) * CHANNELS;
      if (srcRow < 0 || srcRow >= IMAGE_SIZE || srcCol < 0 || srcCol >= IMAGE_SIZE) {
        dst[out] = dst[out + 1] = dst[out + 2] = 0;
      } else {
        const inp = srcOffset + (srcRow * IMAGE_SIZE + srcCol) * CHANNELS;
        dst[out] = src[inp];
        dst[out + 1] = src[inp + 1];
        dst[out + 2] = src[inp + 2];
      }
    }
  }
}
