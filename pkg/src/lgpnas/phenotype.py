"""Genotype-to-architecture mapping and shape inference.

The effective instructions of a genotype form a single backward chain into
register 0; their genes, in execution order, become the network's layers.  A
dense output layer sized to the class count is always appended (it is fixed
scaffolding, not an evolvable gene).  Layers that would shrink a spatial
dimension below 1 are dropped with a warning so that every genotype stays
evaluable.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

from .errors import ShapeError
from .genome import Gene, Genotype, mark_effective

logger = logging.getLogger(__name__)


class LayerKind(enum.Enum):
    CONV = "conv"
    MAX_POOL = "max_pool"
    AVG_POOL = "avg_pool"
    BATCH_NORM = "batch_norm"
    DROPOUT = "dropout"
    DENSE_OUTPUT = "dense_output"


_POOL_KINDS = (LayerKind.MAX_POOL, LayerKind.AVG_POOL)


@dataclass(frozen=True)
class LayerSpec:
    """One network layer.  Conv is stride 1 with same padding; pooling is a
    2x2 window with stride 2."""

    kind: LayerKind
    filters: int | None = None
    kernel: int | None = None
    rate: float | None = None

    @property
    def label(self) -> str:
        if self.kind == LayerKind.CONV:
            return f"CONV_{self.filters}_{self.kernel}x{self.kernel}"
        if self.kind == LayerKind.DROPOUT:
            return f"DROPOUT_{self.rate}"
        return self.kind.name


@dataclass(frozen=True)
class Architecture:
    """Validated linear layer sequence ending in the dense output layer."""

    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]  # (height, width, channels)
    num_classes: int


def _gene_to_layer(gene: Gene) -> LayerSpec:
    if gene.op == "conv":
        return LayerSpec(LayerKind.CONV, filters=gene.filters, kernel=gene.kernel)
    if gene.op == "max_pool":
        return LayerSpec(LayerKind.MAX_POOL)
    if gene.op == "avg_pool":
        return LayerSpec(LayerKind.AVG_POOL)
    if gene.op == "batch_norm":
        return LayerSpec(LayerKind.BATCH_NORM)
    return LayerSpec(LayerKind.DROPOUT, rate=gene.rate)


def to_phenotype(
    g: Genotype, input_shape: tuple[int, int, int], num_classes: int
) -> Architecture:
    """Map a genotype to an executable architecture.

    Raises StructuralError (propagated from the effective-code analysis) when
    nothing writes the output register.  Pooling layers that would reduce a
    spatial dimension below 1 are dropped with a logged warning.
    """
    eff = sorted(mark_effective(g))
    h, w, _ = input_shape
    layers: list[LayerSpec] = []
    for i in eff:
        layer = _gene_to_layer(g.instructions[i].gene)
        if layer.kind in _POOL_KINDS and (h < 2 or w < 2):
            logger.warning(
                "dropping %s at instruction %d: %dx%d map cannot be pooled",
                layer.label, i, h, w,
            )
            continue
        if layer.kind in _POOL_KINDS:
            h, w = h // 2, w // 2
        layers.append(layer)
    layers.append(LayerSpec(LayerKind.DENSE_OUTPUT))
    return Architecture(tuple(layers), tuple(input_shape), num_classes)


def infer_shapes(arch: Architecture) -> list[tuple[int, ...]]:
    """Output shape of every layer; the final entry is ``(num_classes,)``.

    Conv preserves height/width (stride 1, same padding) and sets channels to
    its filter count; pooling floors height/width by 2; batch norm and
    dropout preserve shape.
    """
    h, w, c = arch.input_shape
    if h < 1 or w < 1 or c < 1:
        raise ShapeError(f"invalid input shape {arch.input_shape}")
    shapes: list[tuple[int, ...]] = []
    for idx, layer in enumerate(arch.layers):
        if layer.kind == LayerKind.DENSE_OUTPUT:
            if idx != len(arch.layers) - 1:
                raise ShapeError("dense output layer must be last")
            shapes.append((arch.num_classes,))
            continue
        if layer.kind == LayerKind.CONV:
            c = layer.filters
        elif layer.kind in _POOL_KINDS:
            h, w = h // 2, w // 2
            if h < 1 or w < 1:
                raise ShapeError(f"layer {idx} ({layer.label}) pools a map to {h}x{w}")
        shapes.append((h, w, c))
    if not arch.layers or arch.layers[-1].kind != LayerKind.DENSE_OUTPUT:
        raise ShapeError("architecture must end in the dense output layer")
    return shapes


def semantics_length(n_eval_samples: int, num_classes: int) -> int:
    """Length of the flattened class-probability vector: samples x classes."""
    if n_eval_samples <= 0 or num_classes <= 0:
        raise ValueError("n_eval_samples and num_classes must be positive")
    return n_eval_samples * num_classes


def describe(arch: Architecture) -> str:
    """Human-readable summary, one layer per line with its inferred shape."""
    shapes = infer_shapes(arch)
    h, w, c = arch.input_shape
    lines = [f"{'input':<16} {h}x{w}x{c}"]
    for layer, shape in zip(arch.layers, shapes):
        rendered = "x".join(str(d) for d in shape)
        lines.append(f"{layer.label:<16} {rendered}")
    return "\n".join(lines) + "\n"
