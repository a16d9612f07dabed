"""Walk through the program encoding: genes, introns, repair, phenotype.

Architectures are register-transfer programs: each line applies a layer gene
to the contents of one register and stores the result in another.  Register 0
is the output.  Lines with no data-flow path into the final write of register
0 are introns: they ride along in the genome but never reach the network.
"""

import numpy as np

from lgpnas.genome import (
    GenomeConfig,
    mark_effective,
    parse,
    random_genotype,
    repair,
    serialize,
)
from lgpnas.phenotype import describe, to_phenotype

# An 8-line program written by hand.  Three lines are introns, and the first
# line is a dead store: register 0 is rewritten by the last line before
# anything reads it.
PROGRAM = """\
r[0] := CONV_64_3x3(r[1])
r[4] := MAX_POOL(r[3])
r[7] := CONV_32_3x3(r[4])
r[5] := MAX_POOL(r[2])
r[6] := CONV_64_5x5(r[5])
r[3] := AVG_POOL(r[6])
r[5] := MAX_POOL(r[8])
r[0] := BATCH_NORM(r[3])
"""

genotype = parse(PROGRAM, num_registers=9)
effective = mark_effective(genotype)

print("genotype (introns marked):")
for i, line in enumerate(serialize(genotype).splitlines()):
    marker = "  " if i in effective else "//"
    print(f"  {marker} {line}")

print("\nafter repair (introns removed, registers renumbered):")
print("   " + "\n   ".join(serialize(repair(genotype)).splitlines()))

arch = to_phenotype(genotype, input_shape=(16, 16, 1), num_classes=2)
print("\nphenotype on a 16x16x1 input (dense output appended):")
print("   " + describe(arch).rstrip().replace("\n", "\n   "))

# Random genotypes: each functional group (dropout, batch norm, pooling,
# convolution) gets a quarter of the gene mass; the shares split uniformly
# inside each group, so a single conv variant appears with probability 0.25/6.
rng = np.random.default_rng(7)
cfg = GenomeConfig()
sample = random_genotype(cfg, rng)
print("\na random genotype (length drawn from [4, 16]):")
print("   " + "\n   ".join(serialize(sample).splitlines()))
n_eff = len(mark_effective(sample))
print(f"\n{n_eff} of {len(sample)} instructions are effective; "
      f"repair(g) always maps to the same phenotype as g.")
assert to_phenotype(sample, (16, 16, 1), 2) == to_phenotype(repair(sample), (16, 16, 1), 2)
