"""Wave-speed profiles and the resulting wave number field ``k = omega / c``."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class MediumKind(str, Enum):
    HOMOGENEOUS = "homogeneous"
    INCREASING_LAYERS = "increasing_layers"
    ALTERNATING_LAYERS = "alternating_layers"
    DIAGONAL_LAYERS = "diagonal_layers"


# Shade opacities of the ten diagonal bands, starting from the band at the
# bottom-right corner.  Opacity 1 is the darkest shade (c = 1).
DIAGONAL_OPACITIES = (1.0, 0.6, 1.0, 0.2, 1.0, 0.05, 1.0, 0.4, 1.0, 0.8)

N_LAYERS = 10


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class MediumSpec:
    kind: MediumKind = MediumKind.HOMOGENEOUS
    contrast: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", MediumKind(self.kind))
        if self.contrast < 1:
            raise ValueError(f"contrast must be >= 1, got {self.contrast}")
        if self.omega <= 0:
            raise ValueError(f"angular frequency must be positive, got {self.omega}")


def _band(t):
    return np.clip(np.floor(N_LAYERS * t).astype(np.int64), 0, N_LAYERS - 1)


def wave_speed(spec: MediumSpec, point) -> np.ndarray | float:
    """Wave speed at one point or an ``(n, 2)`` array of points."""
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if np.any(pts < 0.0) or np.any(pts > 1.0) or not np.all(np.isfinite(pts)):
        raise DomainError("wave speed is only defined on the closed unit square")
    x, y = pts[:, 0], pts[:, 1]
    rho = float(spec.contrast)

    if spec.kind is MediumKind.HOMOGENEOUS:
        c = np.ones_like(x)
    elif spec.kind is MediumKind.INCREASING_LAYERS:
        b = _band(1.0 - y)  # band 0 at the top
        c = rho - b * (rho - 1.0) / (N_LAYERS - 1)
    elif spec.kind is MediumKind.ALTERNATING_LAYERS:
        b = _band(1.0 - y)
        c = np.where(b % 2 == 0, rho, 1.0)
    elif spec.kind is MediumKind.DIAGONAL_LAYERS:
        # bands of constant x - y, band 0 at the bottom-right corner
        b = _band((1.0 - (x - y)) / 2.0)
        op = np.asarray(DIAGONAL_OPACITIES)
        lightest = op.min()
        c = 1.0 + (1.0 - op[b]) / (1.0 - lightest) * (rho - 1.0)
    else:  # pragma: no cover
        raise ValueError(spec.kind)
    return float(c[0]) if single else c


def wavenumber_field(spec: MediumSpec, mesh) -> np.ndarray:
    """Per-element wave number sampled at the element centroids."""
    return spec.omega / wave_speed(spec, mesh.centroids)
