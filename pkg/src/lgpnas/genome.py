"""Register-transfer program encoding of convolutional network architectures.

A genotype is an ordered list of 2-register instructions of the form
``r[dest] := GENE(r[src])`` over a fixed catalogue of layer genes.  Register 0
is the designated output register: the layer chain that feeds the final write
to ``r[0]`` is the program's effective code, everything else is an intron.
Introns are kept in the genotype (they matter for variation) and removed only
by :func:`repair` / at phenotype construction.

The gene catalogue has four functional groups: convolution (6 genes:
filters 32/64/128 x kernel 3/5), pooling (max, average), batch normalisation,
and dropout (rates 0.25, 0.5).  Random initialization weights each group at a
quarter of the probability mass, split uniformly inside the group.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError, StructuralError

CONV_FILTERS = (32, 64, 128)
CONV_KERNELS = (3, 5)
DROPOUT_RATES = (0.25, 0.5)

GROUP_CONV = "convolution"
GROUP_POOL = "pooling"
GROUP_BATCH_NORM = "batch_norm"
GROUP_DROPOUT = "dropout"

GROUPS = (GROUP_DROPOUT, GROUP_BATCH_NORM, GROUP_POOL, GROUP_CONV)


@dataclass(frozen=True)
class Gene:
    """A single layer gene: opcode plus its fixed hyperparameters."""

    op: str  # conv | max_pool | avg_pool | batch_norm | dropout
    filters: int | None = None
    kernel: int | None = None
    rate: float | None = None

    @property
    def name(self) -> str:
        if self.op == "conv":
            return f"CONV_{self.filters}_{self.kernel}x{self.kernel}"
        if self.op == "max_pool":
            return "MAX_POOL"
        if self.op == "avg_pool":
            return "AVG_POOL"
        if self.op == "batch_norm":
            return "BATCH_NORM"
        return f"DROPOUT_{self.rate}"

    @property
    def group(self) -> str:
        if self.op == "conv":
            return GROUP_CONV
        if self.op in ("max_pool", "avg_pool"):
            return GROUP_POOL
        if self.op == "batch_norm":
            return GROUP_BATCH_NORM
        return GROUP_DROPOUT


def _build_catalog() -> tuple[Gene, ...]:
    genes = [Gene("dropout", rate=r) for r in DROPOUT_RATES]
    genes.append(Gene("batch_norm"))
    genes.extend([Gene("max_pool"), Gene("avg_pool")])
    genes.extend(
        Gene("conv", filters=f, kernel=k) for f in CONV_FILTERS for k in CONV_KERNELS
    )
    return tuple(genes)


GENE_CATALOG: tuple[Gene, ...] = _build_catalog()
GENE_BY_NAME: dict[str, Gene] = {g.name: g for g in GENE_CATALOG}


@dataclass(frozen=True)
class Instruction:
    """2-register instruction ``r[dest] := gene(r[src])``."""

    dest: int
    gene: Gene
    src: int


def _default_proportions() -> dict[str, float]:
    return {g: 0.25 for g in GROUPS}


@dataclass
class GenomeConfig:
    """Sampling parameters for random genotypes."""

    min_len: int = 4
    max_len: int = 16
    num_registers: int = 8
    group_proportions: dict[str, float] = field(default_factory=_default_proportions)

    def validate(self) -> None:
        if self.min_len < 1 or self.min_len > self.max_len:
            raise ConfigError(
                f"invalid length bounds [{self.min_len}, {self.max_len}]"
            )
        if self.num_registers < 1:
            raise ConfigError("num_registers must be >= 1")
        if set(self.group_proportions) != set(GROUPS):
            raise ConfigError(
                f"group_proportions must have exactly the keys {sorted(GROUPS)}"
            )
        total = sum(self.group_proportions.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"group proportions sum to {total!r}, expected 1")
        if any(p < 0 for p in self.group_proportions.values()):
            raise ConfigError("group proportions must be non-negative")

    def gene_probabilities(self) -> np.ndarray:
        """Per-gene probability: group proportion split uniformly in the group."""
        group_sizes = {g: 0 for g in GROUPS}
        for gene in GENE_CATALOG:
            group_sizes[gene.group] += 1
        probs = np.array(
            [self.group_proportions[g.group] / group_sizes[g.group] for g in GENE_CATALOG]
        )
        return probs


@dataclass(frozen=True)
class Genotype:
    """Ordered instruction list with its register count and length bounds."""

    instructions: tuple[Instruction, ...]
    num_registers: int
    min_len: int
    max_len: int

    def __post_init__(self):
        n = len(self.instructions)
        if not (self.min_len <= n <= self.max_len):
            raise ValueError(
                f"length {n} outside bounds [{self.min_len}, {self.max_len}]"
            )
        for ins in self.instructions:
            if not (0 <= ins.dest < self.num_registers and 0 <= ins.src < self.num_registers):
                raise ValueError(
                    f"register id out of range in {ins} (num_registers={self.num_registers})"
                )

    def __len__(self) -> int:
        return len(self.instructions)

    def writes_output(self) -> bool:
        return any(ins.dest == 0 for ins in self.instructions)


def random_gene(cfg: GenomeConfig, rng: np.random.Generator) -> Gene:
    idx = rng.choice(len(GENE_CATALOG), p=cfg.gene_probabilities())
    return GENE_CATALOG[int(idx)]


def random_genotype(cfg: GenomeConfig, rng: np.random.Generator) -> Genotype:
    """Sample a genotype: uniform length, configured gene mix, uniform registers.

    The final instruction's destination is forced to register 0 so every
    sampled program defines an output.
    """
    cfg.validate()
    length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
    probs = cfg.gene_probabilities()
    gene_idx = rng.choice(len(GENE_CATALOG), size=length, p=probs)
    dests = rng.integers(0, cfg.num_registers, size=length)
    srcs = rng.integers(0, cfg.num_registers, size=length)
    dests[-1] = 0
    instructions = tuple(
        Instruction(int(d), GENE_CATALOG[int(g)], int(s))
        for d, g, s in zip(dests, gene_idx, srcs)
    )
    return Genotype(instructions, cfg.num_registers, cfg.min_len, cfg.max_len)


def mark_effective(g: Genotype) -> frozenset[int]:
    """Indices of instructions on the backward data-flow chain to register 0.

    Scans backwards from the last instruction writing register 0 with a
    needed-register set initialised to {0}.  An instruction is effective iff
    its destination is needed at its scan position; its destination is then
    retired and its source becomes needed.  Dead stores (overwritten before
    any read) are therefore non-effective.
    """
    last_out = None
    for i in range(len(g.instructions) - 1, -1, -1):
        if g.instructions[i].dest == 0:
            last_out = i
            break
    if last_out is None:
        raise StructuralError("no instruction writes register 0")
    needed = {0}
    effective = []
    for i in range(last_out, -1, -1):
        ins = g.instructions[i]
        if ins.dest in needed:
            effective.append(i)
            needed.discard(ins.dest)
            needed.add(ins.src)
    return frozenset(effective)


def repair(g: Genotype) -> Genotype:
    """Drop introns and renumber registers compactly (output stays register 0).

    The result maps to the same phenotype as the input.  Its minimum length
    bound is lowered to the effective count when necessary, since repair may
    shrink the program below the sampling bound.
    """
    eff = sorted(mark_effective(g))
    mapping = {0: 0}
    for i in eff:
        ins = g.instructions[i]
        for reg in (ins.src, ins.dest):
            if reg not in mapping:
                mapping[reg] = len(mapping)
    instructions = tuple(
        Instruction(mapping[g.instructions[i].dest], g.instructions[i].gene,
                    mapping[g.instructions[i].src])
        for i in eff
    )
    return Genotype(
        instructions,
        num_registers=len(mapping),
        min_len=min(g.min_len, len(instructions)),
        max_len=g.max_len,
    )


def _ensure_output(instructions: list[Instruction]) -> list[Instruction]:
    """Force the last destination to register 0 when no instruction writes it."""
    if instructions and not any(ins.dest == 0 for ins in instructions):
        last = instructions[-1]
        instructions[-1] = Instruction(0, last.gene, last.src)
    return instructions


def crossover(
    a: Genotype, b: Genotype, rng: np.random.Generator
) -> tuple[Genotype, Genotype]:
    """Two-point segment exchange at shared cut positions.

    Cut points are drawn in ``[0, min(len(a), len(b))]`` and used in both
    parents, so offspring keep their parents' lengths.  Received segments are
    truncated if a length bound would be exceeded (cannot happen with shared
    cuts; kept as a guard) and the output-register write is restored if the
    exchange removed it.
    """
    limit = min(len(a), len(b))
    c1, c2 = sorted(int(x) for x in rng.integers(0, limit + 1, size=2))

    def make_child(keep: Genotype, donor: Genotype) -> Genotype:
        ins = list(keep.instructions[:c1]) + list(donor.instructions[c1:c2]) \
            + list(keep.instructions[c2:])
        if len(ins) > keep.max_len:
            excess = len(ins) - keep.max_len
            del ins[c1 + (c2 - c1) - excess : c1 + (c2 - c1)]
        ins = _ensure_output(ins)
        regs = max(keep.num_registers, donor.num_registers)
        return Genotype(tuple(ins), regs, keep.min_len, keep.max_len)

    return make_child(a, b), make_child(b, a)


@dataclass
class MutationRates:
    micro: float = 0.3
    macro: float = 0.2


def _replace_gene(gene: Gene, rng: np.random.Generator) -> Gene:
    choices = [g for g in GENE_CATALOG if g != gene]
    return choices[int(rng.integers(0, len(choices)))]


def mutate(g: Genotype, rates: MutationRates, rng: np.random.Generator) -> Genotype:
    """Micro (gene/register replacement) and macro (insert/delete) mutation.

    Each operator fires independently with its configured probability.
    Replacements always differ from the replaced value; insert/delete respect
    the length bounds (an impossible variant falls back to the other one).
    """
    ins = list(g.instructions)

    if rng.random() < rates.micro and ins:
        i = int(rng.integers(0, len(ins)))
        target = ins[i]
        mutate_gene = rng.random() < 0.5 or g.num_registers < 2
        if mutate_gene:
            ins[i] = Instruction(target.dest, _replace_gene(target.gene, rng), target.src)
        else:
            which = rng.random() < 0.5
            old = target.dest if which else target.src
            new = int(rng.integers(0, g.num_registers - 1))
            if new >= old:
                new += 1
            if which:
                ins[i] = Instruction(new, target.gene, target.src)
            else:
                ins[i] = Instruction(target.dest, target.gene, new)

    if rng.random() < rates.macro:
        insert = rng.random() < 0.5
        if insert and len(ins) >= g.max_len:
            insert = False
        if not insert and len(ins) <= g.min_len:
            insert = len(ins) < g.max_len
        if insert and len(ins) < g.max_len:
            pos = int(rng.integers(0, len(ins) + 1))
            gene = GENE_CATALOG[int(rng.integers(0, len(GENE_CATALOG)))]
            dest = int(rng.integers(0, g.num_registers))
            src = int(rng.integers(0, g.num_registers))
            ins.insert(pos, Instruction(dest, gene, src))
        elif not insert and len(ins) > g.min_len:
            del ins[int(rng.integers(0, len(ins)))]

    ins = _ensure_output(ins)
    return Genotype(tuple(ins), g.num_registers, g.min_len, g.max_len)


_LINE_RE = re.compile(r"^r\[(\d+)\] := ([A-Z0-9_.x]+)\(r\[(\d+)\]\)$")


def serialize(g: Genotype) -> str:
    """One instruction per line: ``r[<dest>] := <GENE>(r[<src>])``, LF endings."""
    return "".join(
        f"r[{ins.dest}] := {ins.gene.name}(r[{ins.src}])\n" for ins in g.instructions
    )


def parse(
    text: str,
    *,
    num_registers: int | None = None,
    min_len: int | None = None,
    max_len: int | None = None,
) -> Genotype:
    """Parse the serialize format back into a genotype.

    The text carries no register count or length bounds; pass them explicitly
    to round-trip a genotype exactly, otherwise they are inferred as
    (max register id + 1) and (1, line count).
    """
    instructions = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _LINE_RE.match(line)
        if m is None:
            raise ParseError(f"malformed instruction {line!r}", lineno)
        dest, gene_name, src = int(m.group(1)), m.group(2), int(m.group(3))
        gene = GENE_BY_NAME.get(gene_name)
        if gene is None:
            raise ParseError(f"unknown gene {gene_name!r}", lineno)
        instructions.append(Instruction(dest, gene, src))
    if not instructions:
        raise ParseError("no instructions found")
    max_reg = max(max(i.dest, i.src) for i in instructions)
    if num_registers is None:
        num_registers = max_reg + 1
    elif max_reg >= num_registers:
        raise ParseError(f"register id {max_reg} >= num_registers {num_registers}")
    n = len(instructions)
    lo = min_len if min_len is not None else min(1, n)
    hi = max_len if max_len is not None else n
    if not (lo <= n <= hi):
        raise ParseError(f"{n} instructions outside bounds [{lo}, {hi}]")
    return Genotype(tuple(instructions), num_registers, lo, hi)
