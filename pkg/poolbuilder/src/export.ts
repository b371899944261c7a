/**
 * Export trained pool members as response tables plus a manifest in the
 * exact on-disk contract the `lac` toolkit imports.
 */
import * as fs from "fs";
import * as path from "path";
import { Dataset, N_CLASSES, PIXELS } from "./data";
import {
  ClassifierManifestEntry,
  PoolManifest,
  Split,
  writeManifest,
  writeResponseTable,
} from "./format";
import { predictAll, TrainedClassifier } from "./train";

/**
 * Subset-class probabilities zero-embedded into the global 10-class
 * layout, stacked as flat [example][classifier][class].
 */
function buildResponses(trained: TrainedClassifier[], images: Float32Array): { responses: Float32Array; msPerExample: number[] } {
  const n = images.length / PIXELS;
  const responses = new Float32Array(n * trained.length * N_CLASSES);
  const msPerExample: number[] = [];
  trained.forEach((clf, k) => {
    const nOut = clf.subset.length;
    const startedMs = Date.now();
    const probs = predictAll(clf.model, images, nOut);
    msPerExample.push((Date.now() - startedMs) / n);
    for (let i = 0; i < n; i++) {
      const base = (i * trained.length + k) * N_CLASSES;
      for (let j = 0; j < nOut; j++) {
        responses[base + clf.subset[j]] = probs[i * nOut + j];
      }
    }
  });
  return { responses, msPerExample };
}

export function exportResponses(trained: TrainedClassifier[], data: Dataset, outDir: string, poolName: string): PoolManifest {
  fs.mkdirSync(outDir, { recursive: true });
  const costs: number[] = new Array(trained.length).fill(0);
  const splits: Array<[Split, Float32Array, Uint16Array]> = [
    ["train", data.trainImages, data.trainLabels],
    ["test", data.testImages, data.testLabels],
  ];
  for (const [split, images, labels] of splits) {
    const { responses, msPerExample } = buildResponses(trained, images);
    msPerExample.forEach((ms, k) => {
      costs[k] += ms / splits.length;
    });
    writeResponseTable(path.join(outDir, `${split}.rt`), {
      split,
      nExamples: labels.length,
      nClassifiers: trained.length,
      nClasses: N_CLASSES,
      labels,
      responses,
    });
  }
  const classifiers: ClassifierManifestEntry[] = trained.map((clf, k) => ({
    id: k,
    name: clf.recipe.name ?? `clf${k}`,
    cost: costs[k],
    class_subset: clf.subset,
    arch: clf.recipe.arch_id,
    test_accuracy: clf.testAccuracy,
  }));
  const manifest: PoolManifest = { name: poolName, n_classes: N_CLASSES, classifiers };
  writeManifest(outDir, manifest);
  return manifest;
}
