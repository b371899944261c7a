/**
 * Binary response-table format shared with the `lac` toolkit.
 *
 * Layout (little-endian): 8-byte magic "LACRT1\0\0"; u32 n_examples,
 * n_classifiers, n_classes, split tag (0 train, 1 val, 2 test); 8
 * reserved zero bytes (32-byte header); then u16 labels and f32
 * responses in [example][classifier][class] order.
 */
import * as fs from "fs";
import * as path from "path";

export const MAGIC = Buffer.from("LACRT1\0\0", "latin1");
export const HEADER_SIZE = 32;

export type Split = "train" | "val" | "test";
const SPLIT_TAGS: Record<Split, number> = { train: 0, val: 1, test: 2 };
const TAG_SPLITS: Record<number, Split> = { 0: "train", 1: "val", 2: "test" };

export interface ResponseTable {
  split: Split;
  nExamples: number;
  nClassifiers: number;
  nClasses: number;
  labels: Uint16Array;
  /** Flat [example][classifier][class]. */
  responses: Float32Array;
}

export function encodeResponseTable(table: ResponseTable): Buffer {
  const { nExamples, nClassifiers, nClasses } = table;
  if (table.labels.length !== nExamples) {
    throw new Error(`label count ${table.labels.length} != ${nExamples}`);
  }
  const nValues = nExamples * nClassifiers * nClasses;
  if (table.responses.length !== nValues) {
    throw new Error(`response count ${table.responses.length} != ${nValues}`);
  }
  const buf = Buffer.alloc(HEADER_SIZE + 2 * nExamples + 4 * nValues);
  MAGIC.copy(buf, 0);
  buf.writeUInt32LE(nExamples, 8);
  buf.writeUInt32LE(nClassifiers, 12);
  buf.writeUInt32LE(nClasses, 16);
  buf.writeUInt32LE(SPLIT_TAGS[table.split], 20);
  let off = HEADER_SIZE;
  for (let i = 0; i < nExamples; i++) {
    buf.writeUInt16LE(table.labels[i], off);
    off += 2;
  }
  for (let i = 0; i < nValues; i++) {
    buf.writeFloatLE(table.responses[i], off);
    off += 4;
  }
  return buf;
}

export function writeResponseTable(filePath: string, table: ResponseTable): void {
  const tmp = filePath + ".tmp";
  fs.writeFileSync(tmp, encodeResponseTable(table));
  fs.renameSync(tmp, filePath);
}

export function readResponseTable(filePath: string): ResponseTable {
  const buf = fs.readFileSync(filePath);
  if (buf.length < HEADER_SIZE || !buf.subarray(0, 8).equals(MAGIC)) {
    throw new Error(`${filePath}: not a response-table file`);
  }
  const nExamples = buf.readUInt32LE(8);
  const nClassifiers = buf.readUInt32LE(12);
  const nClasses = buf.readUInt32LE(16);
  const tag = buf.readUInt32LE(20);
  const split = TAG_SPLITS[tag];
  if (split === undefined) {
    throw new Error(`${filePath}: unknown split tag ${tag}`);
  }
  const nValues = nExamples * nClassifiers * nClasses;
  const expected = HEADER_SIZE + 2 * nExamples + 4 * nValues;
  if (buf.length !== expected) {
    throw new Error(`${filePath}: size ${buf.length}, expected ${expected}`);
  }
  const labels = new Uint16Array(nExamples);
  for (let i = 0; i < nExamples; i++) {
    labels[i] = buf.readUInt16LE(HEADER_SIZE + 2 * i);
  }
  const responses = new Float32Array(nValues);
  const base = HEADER_SIZE + 2 * nExamples;
  for (let i = 0; i < nValues; i++) {
    responses[i] = buf.readFloatLE(base + 4 * i);
  }
  return { split, nExamples, nClassifiers, nClasses, labels, responses };
}

export interface ClassifierManifestEntry {
  id: number;
  name: string;
  cost: number;
  class_subset: number[];
  arch?: number;
  test_accuracy?: number;
}

export interface PoolManifest {
  name: string;
  n_classes: number;
  classifiers: ClassifierManifestEntry[];
}

export function writeManifest(outDir: string, manifest: PoolManifest): void {
  const file = path.join(outDir, "manifest.json");
  const tmp = file + ".tmp";
  fs.writeFileSync(tmp, JSON.stringify(manifest, null, 2) + "\n");
  fs.renameSync(tmp, file);
}
