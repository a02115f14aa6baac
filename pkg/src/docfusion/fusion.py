"""Per-step log-linear combination of translation model, document LM and
internal LM, with static, on-the-fly and per-subword scales."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import FormatError


@dataclass(frozen=True, order=True)
class FusionScales:
    tm: float = 1.0
    lm: float = 0.0
    ilm: float = 0.0

    def __post_init__(self):
        vals = (self.tm, self.lm, self.ilm)
        if not all(np.isfinite(vals)) or min(vals) < 0:
            raise ValueError(f"fusion scales must be finite and >= 0, got {vals}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.tm, self.lm, self.ilm)

    @classmethod
    def parse(cls, text: str) -> "FusionScales":
        parts = text.replace(",", " ").split()
        if len(parts) != 3:
            raise ValueError(f"expected three scales, got {text!r}")
        return cls(*(float(p) for p in parts))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(f"{self.tm:.6f} {self.lm:.6f} {self.ilm:.6f}\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FusionScales":
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
        if len(lines) != 1:
            raise FormatError("scales file must contain exactly one line", path, 1)
        try:
            return cls.parse(lines[0])
        except ValueError as exc:
            raise FormatError(str(exc), path, 1) from None


@dataclass(frozen=True)
class ScaleGrid:
    values: tuple[float, ...]
    restricted: bool = False

    def __post_init__(self):
        if not self.values:
            raise ValueError("empty scale grid")
        if list(self.values) != sorted(self.values):
            raise ValueError("grid values must be sorted ascending")

    def triples(self) -> list[FusionScales]:
        """All admissible triples in ascending lexicographic order."""
        if self.restricted:
            return [FusionScales(1.0, v, v) for v in self.values]
        return [FusionScales(*t) for t in itertools.product(self.values, repeat=3)]

    def __len__(self) -> int:
        return len(self.values) if self.restricted else len(self.values) ** 3


def grid_values(step: float = 0.1, upper: float = 1.0) -> tuple[float, ...]:
    n = int(round(upper / step))
    return tuple(round(i * step, 10) for i in range(n + 1))


def restricted_grid(step: float = 0.1, upper: float = 1.0) -> ScaleGrid:
    """lambda0 = 1 and lambda1 = lambda2 in {0, step, ..., upper}."""
    return ScaleGrid(grid_values(step, upper), restricted=True)


def full_grid(step: float = 0.1, upper: float = 1.0) -> ScaleGrid:
    return ScaleGrid(grid_values(step, upper), restricted=False)


def _check_inputs(*dists: np.ndarray) -> None:
    n = len(dists[0])
    for d in dists:
        if len(d) != n:
            raise ValueError("distributions have different lengths")
        if np.isnan(d).any():
            raise ValueError("NaN in input distribution")


def _combine(d_tm, d_lm, d_ilm, l0, l1, l2) -> np.ndarray:
    """Unnormalized fused log-scores; 0 * -inf is treated as 0.

    The LM and ILM terms are grouped before the TM term is added so that
    equal LM and ILM contributions cancel exactly.
    """
    with np.errstate(invalid="ignore"):
        tm = np.where(l0 == 0, 0.0, l0 * d_tm) if np.any(l0) else np.zeros_like(d_tm)
        lm = np.where(l1 == 0, 0.0, l1 * d_lm) if np.any(l1) else np.zeros_like(d_tm)
        if not np.any(l2):
            return tm + lm
        bad = (l2 != 0) & np.isneginf(d_ilm)
        if bad.any():
            num_dead, bad_b = np.broadcast_arrays(np.isneginf(tm) | np.isneginf(lm), bad)
            if not np.all(num_dead[bad_b]):
                raise ValueError("ILM zero under neutralization")
        delta = lm - np.where((l2 == 0) | bad, 0.0, l2 * d_ilm)
        return np.where(bad, -np.inf, tm + delta)


def _normalize(score: np.ndarray) -> np.ndarray:
    m = np.max(score)
    if not np.isfinite(m):
        raise ValueError("fused distribution has no support")
    return score - (m + np.log(np.sum(np.exp(score - m))))


def fuse_step(d_tm: np.ndarray, d_lm: np.ndarray, d_ilm: np.ndarray, s: FusionScales) -> np.ndarray:
    """Normalized log of p_tm^l0 * p_lm^l1 * p_ilm^-l2."""
    _check_inputs(d_tm, d_lm, d_ilm)
    return _normalize(_combine(d_tm, d_lm, d_ilm, s.tm, s.lm, s.ilm))


def fuse_step_context_delta(d_tm: np.ndarray, d_lm_ctx: np.ndarray, d_lm_noctx: np.ndarray,
                            s: FusionScales) -> np.ndarray:
    """Baseline that divides out the document LM's own context-free distribution."""
    return fuse_step(d_tm, d_lm_ctx, d_lm_noctx, s)


class OnTheFlyResult(NamedTuple):
    scores: np.ndarray    # per-token max fused log-prob; not a distribution
    scales: np.ndarray    # (|V|, 3) chosen triple per token


def on_the_fly_step(d_tm: np.ndarray, d_lm: np.ndarray, d_ilm: np.ndarray, grid: ScaleGrid) -> OnTheFlyResult:
    """Score every token under its own best grid triple.

    Ties keep the lexicographically smallest triple.
    """
    _check_inputs(d_tm, d_lm, d_ilm)
    table = np.array([s.as_tuple() for s in grid.triples()])
    l0, l1, l2 = (table[:, j:j + 1] for j in range(3))
    score = _combine(d_tm, d_lm, d_ilm, l0, l1, l2)
    m = np.max(score, axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise ValueError("fused distribution has no support")
    fused = score - (m + np.log(np.sum(np.exp(score - m), axis=1, keepdims=True)))
    # argmax keeps the first maximum, i.e. the smallest triple in grid order
    pick = np.argmax(fused, axis=0)
    return OnTheFlyResult(fused[pick, np.arange(len(d_tm))], table[pick])


def fuse_step_subword(d_tm: np.ndarray, d_lm: np.ndarray, d_ilm: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Fusion with a per-token scale triple; ``table`` has shape (|V|, 3).

    Learned scales may be negative, so no sign check is applied here.
    """
    _check_inputs(d_tm, d_lm, d_ilm)
    return _normalize(_combine(d_tm, d_lm, d_ilm, table[:, 0], table[:, 1], table[:, 2]))
