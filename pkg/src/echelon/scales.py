"""Norm scales: one-parameter families of weighted norms on truncated series.

Each :class:`ScaleFamily` assigns to a multi-index ``alpha`` and a scale
``s`` in ``(0, S)`` a positive weight, and the norm of ``f = sum a_alpha e_alpha``
is

* ``majorant``: ``sum |a_alpha| s^{|alpha|}`` on Taylor slots, an upper bound
  for the sup norm on the polydisk of radius ``s``;
* ``hilbert``: ``sqrt(sum |a_alpha|^2 w_alpha(s)^2)`` with the exact squared
  ``L^2`` norms of monomials on the polydisk of radius ``s`` (Taylor slots)
  or on the annulus ``e^{-s} <= |z| <= e^{s}`` (Fourier slots);
* ``strip``: ``sum |a_i| e^{sigma(i) s}`` on Fourier slots, an upper bound for
  the sup norm on the complex strip ``|Im theta| < s``;
* ``mixed``: product of the strip weight on Fourier slots, ``s^deg`` on
  Taylor slots and ``s^{2 deg}`` on the listed deformation slots.

All weights are nondecreasing in ``s``, so every norm is monotone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ScaleDomainError, SignatureError
from .numbers import magnitude
from .series import TruncatedSeries


class ScaleKind(str, Enum):
    MAJORANT = "majorant"
    HILBERT = "hilbert"
    STRIP = "strip"
    MIXED = "mixed"


@dataclass(frozen=True)
class ScaleFamily:
    """A parametrized family of norms ``|.|_s`` for ``0 < s < S``.

    Parameters
    ----------
    kind : ScaleKind or str
    S : float
        Upper end of the scale interval.
    deformation_slots : tuple of int
        Absolute Taylor slot positions weighted ``s^2`` per degree (mixed kind).
    """

    kind: ScaleKind = ScaleKind.MAJORANT
    S: float = 1.0
    deformation_slots: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", ScaleKind(self.kind))
        object.__setattr__(self, "deformation_slots", tuple(int(k) for k in self.deformation_slots))
        if not self.S > 0:
            raise ScaleDomainError(f"scale bound S must be positive, got {self.S}")
        if self.deformation_slots and self.kind is not ScaleKind.MIXED:
            raise SignatureError("deformation slots are only meaningful for the mixed kind")

    def check(self, s: float):
        if not 0 < s < self.S:
            raise ScaleDomainError(f"scale s={s} outside (0, {self.S})")

    def check_signature(self, signature):
        m, p = signature
        if self.kind is ScaleKind.MAJORANT and m:
            raise SignatureError("majorant scale has no Fourier slots; use 'mixed'")
        if self.kind is ScaleKind.STRIP and p:
            raise SignatureError("strip scale has no Taylor slots; use 'mixed'")

    def log_weights(self, idx: np.ndarray, m: int, s: float) -> np.ndarray:
        """Logarithm of the weight of each row of ``idx`` (``hilbert``: of the squared weight)."""
        idx = np.asarray(idx, dtype=np.int64)
        taylor = idx[:, m:].astype(float)
        ls = math.log(s)
        if self.kind is ScaleKind.HILBERT:
            out = np.zeros(len(idx))
            if taylor.shape[1]:
                out += (math.log(math.pi) + (2 * taylor + 2) * ls - np.log(taylor + 1)).sum(1)
            for j in range(m):
                out += _annulus_log_weight2(idx[:, j], s)
            return out
        return np.log(self.weights(idx, m, s))

    def weights(self, idx, m: int, s: float) -> np.ndarray:
        """Weight of each row of ``idx`` (for ``hilbert``: the squared weight)."""
        idx = np.asarray(idx, dtype=np.int64)
        if self.kind is ScaleKind.HILBERT:
            return np.exp(self.log_weights(idx, m, s))
        out = np.exp(np.abs(idx[:, :m]).sum(1) * s) if m else np.ones(len(idx))
        if idx.shape[1] > m:
            deg = idx[:, m:].sum(1)
            for k in self.deformation_slots:
                deg = deg + idx[:, k]
            out = out * np.power(float(s), deg)
        return out

    def weight(self, idx, m: int, s: float) -> float:
        """Weight of a single index (square root of the squared weight for ``hilbert``)."""
        w = float(self.weights(np.array([idx]), m, s)[0])
        return math.sqrt(w) if self.kind is ScaleKind.HILBERT else w


def _annulus_log_weight2(i: np.ndarray, s: float) -> np.ndarray:
    """log of the squared L^2 norm of z^i on the annulus e^{-s} <= |z| <= e^{s}."""
    i = i.astype(float)
    out = np.empty(len(i))
    special = i == -1
    out[special] = math.log(4 * math.pi * s)
    # pi (e^{a} - e^{-a}) / (i+1) with a = (2i+2)s equals 2 pi sinh(|a|) / |i+1|
    aa = np.abs((2 * i[~special] + 2) * s)
    out[~special] = math.log(math.pi) + aa + np.log1p(-np.exp(-2 * aa)) - np.log(np.abs(i[~special] + 1))
    return out


def norm_at(f: TruncatedSeries, scale: ScaleFamily, s: float) -> float:
    """The norm ``|f|_s`` of a truncated series in a scale family.

    Parameters
    ----------
    f : TruncatedSeries
    scale : ScaleFamily
    s : float
        Scale parameter in ``(0, scale.S)``.

    Returns
    -------
    float

    Raises
    ------
    ScaleDomainError
        If ``s`` is outside ``(0, S)``.
    """
    scale.check(s)
    scale.check_signature(f.signature)
    if f.is_zero:
        return 0.0
    keys = np.array(list(f.coeffs.keys()), dtype=np.int64).reshape(len(f), f.signature.size)
    mags = np.array([magnitude(v) for v in f.coeffs.values()])
    w = scale.weights(keys, f.signature.fourier, s)
    if scale.kind is ScaleKind.HILBERT:
        return float(math.sqrt(np.sum(mags**2 * w)))
    return float(np.sum(mags * w))


def vector_norm_at(fields, scale: ScaleFamily, s: float) -> float:
    """Norm of a tuple of series (vector field components): sum of component norms."""
    return float(sum(norm_at(c, scale, s) for c in fields))


MAJORANT = ScaleFamily(ScaleKind.MAJORANT, 1.0)
