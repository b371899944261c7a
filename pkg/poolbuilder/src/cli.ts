#!/usr/bin/env node
/** `pool-builder --recipe recipe.json --out DIR [--smoke]` */
import * as path from "path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { Dataset, DatasetMissingError, loadCifar10, syntheticDataset } from "./data";
import { exportResponses } from "./export";
import { loadRecipe, PoolRecipe } from "./recipe";
import { trainPool } from "./train";

export async function run(argv: string[]): Promise<number> {
  const args = await yargs(hideBin(argv))
    .option("recipe", { type: "string", demandOption: true, describe: "pool recipe JSON" })
    .option("out", { type: "string", demandOption: true, describe: "output directory" })
    .option("data-dir", { type: "string", describe: "CIFAR-10 binary batches directory (overrides recipe data_dir)" })
    .option("smoke", {
      type: "boolean",
      default: false,
      describe: "1-epoch run on a small synthetic dataset; no CIFAR-10 needed",
    })
    .strict()
    .fail((msg, err) => {
      throw err ?? new Error(msg);
    })
    .parseAsync();

  let recipe: PoolRecipe = loadRecipe(args.recipe);
  let data: Dataset;
  if (args.smoke) {
    recipe = { ...recipe, epochs: 1 };
    data = syntheticDataset(640, 320, recipe.seed);
  } else {
    const dir = args.dataDir ?? recipe.data_dir ?? process.env.CIFAR10_DIR ?? ".";
    data = loadCifar10(dir);
  }
  const trained = await trainPool(recipe, data, (msg) => console.log(msg));
  const outDir = path.resolve(args.out);
  const manifest = exportResponses(trained, data, outDir, recipe.name);
  console.log(
    `wrote ${manifest.classifiers.length}-classifier pool to ${outDir} ` +
      `(accuracies: ${manifest.classifiers
        .map((c) => (100 * (c.test_accuracy ?? 0)).toFixed(1))
        .join(", ")}%)`
  );
  return 0;
}

if (require.main === module) {
  run(process.argv).then(
    (code) => process.exit(code),
    (err) => {
      if (err instanceof DatasetMissingError) {
        console.error(`dataset error: ${err.message}`);
        process.exit(2);
      }
      console.error(`error: ${err instanceof Error ? err.message : err}`);
      process.exit(1);
    }
  );
}
