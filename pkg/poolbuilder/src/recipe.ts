/** Pool recipe schema and defaults. */
import * as fs from "fs";
import { z } from "zod";

export const classifierRecipeSchema = z.object({
  name: z.string().optional(),
  class_subset: z.array(z.number().int().min(0).max(9)).nonempty(),
  arch_id: z.union([z.literal(1), z.literal(2)]),
});

export const recipeSchema = z.object({
  name: z.string().default("cifar-pool"),
  classifiers: z.array(classifierRecipeSchema).nonempty(),
  epochs: z.number().int().positive().default(100),
  batch_size: z.number().int().positive().default(128),
  learning_rate: z.number().positive().default(0.01),
  /** Epochs after which the learning rate is multiplied by 0.1. */
  lr_drop_epochs: z.array(z.number().int().positive()).default([50, 75]),
  augment: z.boolean().default(true),
  seed: z.number().int().default(0),
  data_dir: z.string().optional(),
});

export type ClassifierRecipe = z.infer<typeof classifierRecipeSchema>;
export type PoolRecipe = z.infer<typeof recipeSchema>;

export function loadRecipe(path: string): PoolRecipe {
  const raw = JSON.parse(fs.readFileSync(path, "utf8"));
  const recipe = recipeSchema.parse(raw);
  for (const clf of recipe.classifiers) {
    const unique = new Set(clf.class_subset);
    if (unique.size !== clf.class_subset.length) {
      throw new Error(`duplicate class in subset ${clf.class_subset}`);
    }
  }
  return recipe;
}
