import numpy as np
import pytest

from lgpnas.errors import ShapeError, StructuralError
from lgpnas.genome import GenomeConfig, Genotype, Instruction, GENE_BY_NAME, parse, random_genotype, repair
from lgpnas.phenotype import (
    Architecture,
    LayerKind,
    LayerSpec,
    describe,
    infer_shapes,
    semantics_length,
    to_phenotype,
)

from test_genome import chain_genotype


def test_chain_program_phenotype():
    arch = to_phenotype(chain_genotype(), (16, 16, 1), 2)
    assert [layer.label for layer in arch.layers] == [
        "MAX_POOL", "CONV_64_5x5", "AVG_POOL", "BATCH_NORM", "DENSE_OUTPUT",
    ]


def test_single_batch_norm_genotype():
    g = parse("r[0] := BATCH_NORM(r[1])\n")
    arch = to_phenotype(g, (8, 8, 1), 2)
    assert [l.kind for l in arch.layers] == [LayerKind.BATCH_NORM, LayerKind.DENSE_OUTPUT]


def test_excess_pooling_dropped_on_8x8():
    lines = "".join(f"r[0] := MAX_POOL(r[{0 if i else 1}])\n" for i in range(6))
    g = parse(lines)
    arch = to_phenotype(g, (8, 8, 1), 2)
    pools = [l for l in arch.layers if l.kind == LayerKind.MAX_POOL]
    assert len(pools) == 3  # 8 -> 4 -> 2 -> 1, further pooling dropped
    shapes = infer_shapes(arch)
    assert shapes[2] == (1, 1, 1)


def test_to_phenotype_requires_effective_code():
    g = Genotype(
        (Instruction(1, GENE_BY_NAME["MAX_POOL"], 2),),
        num_registers=3, min_len=1, max_len=4,
    )
    with pytest.raises(StructuralError):
        to_phenotype(g, (8, 8, 1), 2)


def test_infer_shapes_conv_same_padding():
    arch = Architecture(
        (LayerSpec(LayerKind.CONV, filters=32, kernel=3), LayerSpec(LayerKind.DENSE_OUTPUT)),
        (64, 64, 3), 2,
    )
    assert infer_shapes(arch)[0] == (64, 64, 32)


def test_infer_shapes_pool_halves_and_floors():
    arch = Architecture(
        (LayerSpec(LayerKind.MAX_POOL), LayerSpec(LayerKind.DENSE_OUTPUT)), (64, 64, 32), 2
    )
    assert infer_shapes(arch)[0] == (32, 32, 32)
    odd = Architecture(
        (LayerSpec(LayerKind.AVG_POOL), LayerSpec(LayerKind.DENSE_OUTPUT)), (5, 5, 4), 2
    )
    assert infer_shapes(odd)[0] == (2, 2, 4)


def test_infer_shapes_error_on_degenerate_pool():
    arch = Architecture(
        (LayerSpec(LayerKind.MAX_POOL), LayerSpec(LayerKind.DENSE_OUTPUT)), (1, 1, 4), 2
    )
    with pytest.raises(ShapeError):
        infer_shapes(arch)


def test_semantics_length():
    assert semantics_length(200, 2) == 400
    assert semantics_length(1, 1) == 1
    assert semantics_length(989, 2) == 1978
    with pytest.raises(ValueError):
        semantics_length(0, 2)


def test_phenotype_deterministic_and_intron_neutral():
    cfg = GenomeConfig()
    rng = np.random.default_rng(31)
    for _ in range(1000):
        g = random_genotype(cfg, rng)
        arch = to_phenotype(g, (16, 16, 1), 2)
        assert arch == to_phenotype(g, (16, 16, 1), 2)
        assert arch == to_phenotype(repair(g), (16, 16, 1), 2)
        infer_shapes(arch)  # every emitted architecture has valid shapes


def test_describe_lists_layers_with_shapes():
    arch = to_phenotype(chain_genotype(), (16, 16, 1), 2)
    text = describe(arch)
    lines = text.strip().split("\n")
    assert lines[0].startswith("input")
    assert "16x16x1" in lines[0]
    assert lines[1].startswith("MAX_POOL")
    assert "8x8x1" in lines[1]
    assert lines[-1].startswith("DENSE_OUTPUT")
    assert lines[-1].rstrip().endswith("2")
