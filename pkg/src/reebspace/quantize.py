"""Range quantization for multivariate fields.

Each field i is binned into slabs of width ``w_i`` around ``b_i + k * w_i``,
so slab boundaries sit at ``b_i + (k + 1/2) * w_i``.  Ties at a boundary are
rounded half away from zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence


def quantize_value(value: float, width: float, base: float = 0.0) -> int:
    """Slab index of ``value`` for slab width ``width`` and offset ``base``.

    Rounds half away from zero: the boundary ``base + (k + 1/2) * width``
    belongs to slab ``k + 1`` for positive scaled values and to ``k`` for
    negative ones.
    """
    if width <= 0.0:
        raise ValueError(f"slab width must be positive, got {width}")
    u = (value - base) / width
    if u >= 0.0:
        return int(math.floor(u + 0.5))
    return -int(math.floor(-u + 0.5))


def quantize_array(values, width: float, base: float = 0.0):
    """Vectorized :func:`quantize_value` (numpy array in, int64 array out)."""
    import numpy as np

    if width <= 0.0:
        raise ValueError(f"slab width must be positive, got {width}")
    u = (np.asarray(values, dtype=np.float64) - base) / width
    return np.where(u >= 0.0, np.floor(u + 0.5), -np.floor(-u + 0.5)).astype(np.int64)


@dataclass(frozen=True)
class QuantizationSpec:
    """Per-field slab widths and base offsets."""

    widths: tuple[float, ...]
    bases: tuple[float, ...] = field(default=())

    def __post_init__(self):
        widths = tuple(float(w) for w in self.widths)
        bases = tuple(float(b) for b in self.bases) if self.bases else (0.0,) * len(widths)
        if len(bases) != len(widths):
            raise ValueError("widths and bases must have the same length")
        for w in widths:
            if not (w > 0.0) or not math.isfinite(w):
                raise ValueError(f"slab widths must be positive finite, got {w}")
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "bases", bases)

    @property
    def field_count(self) -> int:
        return len(self.widths)

    def cut_value(self, field_index: int, level: int) -> float:
        """Boundary between slab ``level`` and ``level + 1`` of one field."""
        return self.bases[field_index] + (level + 0.5) * self.widths[field_index]

    def index(self, field_index: int, value: float) -> int:
        return quantize_value(value, self.widths[field_index], self.bases[field_index])

    def refine(self, factor: int) -> "QuantizationSpec":
        """Spec with widths divided by ``factor`` whose slabs nest in ours.

        The base moves by ``(w - w') / 2`` so every coarse boundary is also a
        fine boundary; with the unshifted base that fails for even factors.
        """
        if int(factor) != factor or factor < 1:
            raise ValueError(f"refinement factor must be a positive integer, got {factor}")
        factor = int(factor)
        widths = tuple(w / factor for w in self.widths)
        bases = tuple(b + (w - w / factor) / 2.0 for w, b in zip(self.widths, self.bases))
        return QuantizationSpec(widths, bases)

    def coarse_index_of_refined(self, fine: "QuantizationSpec", field_index: int, fine_level: int) -> int:
        """Slab of ours containing slab ``fine_level`` of a refinement of us."""
        center = fine.bases[field_index] + fine_level * fine.widths[field_index]
        return self.index(field_index, center)


def make_spec(widths: Sequence[float], bases: Sequence[float] | None = None) -> QuantizationSpec:
    return QuantizationSpec(tuple(widths), tuple(bases) if bases is not None else ())
