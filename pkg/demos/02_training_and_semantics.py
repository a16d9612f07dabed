"""Train a candidate network partially and fully, and extract its semantics.

The semantics of a network is its flattened vector of class probabilities
over a fixed evaluation split, taken at the partial-training checkpoint.  Two
networks that behave alike produce nearby vectors, which is what the
surrogate's distance-based kernel exploits.  Training is deterministic given
a seed, and continuing from a checkpoint is bit-identical to training
straight through.
"""

import numpy as np

from lgpnas.genome import parse
from lgpnas.phenotype import describe, semantics_length, to_phenotype
from lgpnas.smallnet import (
    TrainConfig,
    evaluate,
    extract_semantics,
    generate_synthetic,
    train,
)

data = generate_synthetic(height=12, width=12, samples=160, noise=0.9, seed=5)
print(f"dataset: {data.meta['splits']} images of "
      f"{data.height}x{data.width}x{data.channels}, noise {data.meta['noise']}")

genotype = parse(
    "r[1] := CONV_32_3x3(r[0])\n"
    "r[2] := MAX_POOL(r[1])\n"
    "r[3] := BATCH_NORM(r[2])\n"
    "r[0] := DROPOUT_0.25(r[3])\n"
)
arch = to_phenotype(genotype, data.input_shape, data.num_classes)
print("\narchitecture:\n   " + describe(arch).rstrip().replace("\n", "\n   "))

cfg = TrainConfig(partial_epochs=2, full_epochs=10, seed=11)

partial = train(arch, data.train, cfg, upto_epochs=cfg.partial_epochs)
acc_partial, _ = evaluate(partial, data.val)
semantics = extract_semantics(partial, data.val)
n_val = len(data.val.labels)
print(f"\nafter {cfg.partial_epochs} epochs: validation accuracy {acc_partial:.3f}")
print(f"semantics vector: length {semantics.shape[0]} "
      f"(= {n_val} samples x {data.num_classes} classes = "
      f"{semantics_length(n_val, data.num_classes)})")
print(f"first three probability blocks: {semantics[:6].round(3)}")

final = train(arch, data.train, cfg, upto_epochs=cfg.full_epochs, net=partial)
acc_full, _ = evaluate(final, data.val)
acc_test, _ = evaluate(final, data.test)
print(f"\ncontinued to {cfg.full_epochs} epochs: validation {acc_full:.3f}, "
      f"held-out test {acc_test:.3f}")

straight = train(arch, data.train, cfg, upto_epochs=cfg.full_epochs)
same = all(
    np.array_equal(a.params()[k], b.params()[k])
    for a, b in zip(final.layers, straight.layers)
    for k in a.params()
)
print(f"checkpoint-continue equals straight-through training: {same}")
