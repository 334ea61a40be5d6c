"""Global Moran's I with analytic or permutation inference."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .weights import WeightsMatrix

NORMALITY = "normality"
RANDOMIZATION = "randomization"
PERMUTATION = "permutation"

DEFAULT_PERMUTATIONS = 9999
_PERM_CHUNK = 1000


class MoranUndefined(ValueError):
    pass


@dataclass(frozen=True)
class MoranResult:
    I: float
    expectation: float
    variance: float
    z_score: float
    p_value: float
    assumption: str
    n: int
    n_permutations: int = 0

    def as_dict(self) -> dict:
        out = {
            "morans_i": self.I,
            "expectation": self.expectation,
            "variance": self.variance,
            "z_score": self.z_score,
            "p_value": self.p_value,
            "p_display": f"{self.p_value:.4f}",
            "assumption": self.assumption,
            "n": self.n,
        }
        if self.assumption == PERMUTATION:
            out["n_permutations"] = self.n_permutations
        return out


def parse_mode(spec: str) -> tuple[str, int]:
    """``"normality"``, ``"randomization"`` or ``"perm:<n>"`` / ``"permutation"``."""
    spec = spec.strip().lower()
    if spec in (NORMALITY, RANDOMIZATION):
        return spec, 0
    if spec in ("perm", PERMUTATION):
        return PERMUTATION, DEFAULT_PERMUTATIONS
    if spec.startswith("perm:"):
        n = int(spec[5:])
        if n < 2:
            raise ValueError("permutation count must be at least 2")
        return PERMUTATION, n
    raise ValueError(f"unknown Moran mode {spec!r}")


def _statistic(z: np.ndarray, w: np.ndarray, s0: float) -> float:
    n = z.size
    return float(n / s0 * (z @ w @ z) / (z @ z))


def morans_i(values, w: WeightsMatrix) -> float:
    """The statistic alone: sum_ij w_ij z_i z_j / (sigma^2 sum_ij w_ij), z = x - mean."""
    x = np.asarray(values, dtype=float)
    z = x - x.mean()
    if not np.any(z):
        raise MoranUndefined("constant attribute, Moran's I undefined")
    return _statistic(z, w.w, float(w.w.sum()))


def _weight_sums(w: np.ndarray) -> tuple[float, float, float]:
    s0 = float(w.sum())
    s1 = float(0.5 * ((w + w.T) ** 2).sum())
    s2 = float(((w.sum(axis=1) + w.sum(axis=0)) ** 2).sum())
    return s0, s1, s2


def _permutation_chunk(args):
    seed, count, z, w, s0 = args
    rng = np.random.default_rng(seed)
    zp = rng.permuted(np.tile(z, (count, 1)), axis=1)
    n = z.size
    return n / s0 * np.einsum("ij,ij->i", zp @ w.T, zp) / (z @ z)


def _checked_variance(variance: float, scale: float) -> float:
    # e.g. 3 regions that are all mutual neighbours: I is fixed at -1/2
    if not variance > 1e-12 * abs(scale):
        raise MoranUndefined("Moran's I has zero variance under these weights")
    return variance


def moran_i(
    values,
    w: WeightsMatrix,
    mode: str = NORMALITY,
    n_perm: int = DEFAULT_PERMUTATIONS,
    seed: int = 0,
    workers: int = 1,
) -> MoranResult:
    """Global Moran's I and its significance.

    Parameters
    ----------
    values : sequence of float
        One attribute value per region, aligned with ``w``.
    w : WeightsMatrix
    mode : {"normality", "randomization", "permutation"}
        Analytic variance under either assumption, or a Monte-Carlo
        reference distribution from ``n_perm`` random relabellings.
    seed, workers :
        Permutations are drawn in fixed-size chunks from child seeds of
        ``seed``; results do not depend on ``workers``.

    Returns
    -------
    MoranResult
        ``z_score`` is ``(I - E[I]) / sqrt(variance)``; ``p_value`` is
        two-sided.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 3:
        raise MoranUndefined(f"need at least 3 regions, got {n}")
    if w.n != n:
        raise ValueError(f"weights are {w.n}x{w.n} but {n} values were given")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must be finite")
    z = x - x.mean()
    m2 = float(z @ z) / n
    if m2 == 0 or np.ptp(x) == 0:
        raise MoranUndefined("constant attribute, Moran's I undefined")
    s0, s1, s2 = _weight_sums(w.w)
    if s0 == 0:
        raise MoranUndefined("weights matrix has no links")
    I = _statistic(z, w.w, s0)
    expectation = -1.0 / (n - 1)

    if mode == NORMALITY:
        ei2 = (n * n * s1 - n * s2 + 3 * s0 * s0) / ((n * n - 1) * s0 * s0)
        variance = _checked_variance(ei2 - expectation**2, ei2)
        z_score = (I - expectation) / math.sqrt(variance)
        p = 2 * stats.norm.sf(abs(z_score))
        return MoranResult(I, expectation, variance, z_score, float(p), NORMALITY, n)

    if mode == RANDOMIZATION:
        if n < 4:
            raise MoranUndefined("randomization variance needs at least 4 regions")
        b2 = n * float((z**4).sum()) / float(z @ z) ** 2
        num = n * ((n * n - 3 * n + 3) * s1 - n * s2 + 3 * s0 * s0) - b2 * (
            (n * n - n) * s1 - 2 * n * s2 + 6 * s0 * s0
        )
        ei2 = num / ((n - 1) * (n - 2) * (n - 3) * s0 * s0)
        variance = _checked_variance(ei2 - expectation**2, ei2)
        z_score = (I - expectation) / math.sqrt(variance)
        p = 2 * stats.norm.sf(abs(z_score))
        return MoranResult(I, expectation, variance, z_score, float(p), RANDOMIZATION, n)

    if mode == PERMUTATION:
        if n_perm < 2:
            raise ValueError("n_perm must be at least 2")
        sizes = [min(_PERM_CHUNK, n_perm - k) for k in range(0, n_perm, _PERM_CHUNK)]
        seeds = np.random.SeedSequence(seed).spawn(len(sizes))
        jobs = [(s, c, z, w.w, s0) for s, c in zip(seeds, sizes)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_permutation_chunk, jobs))
        else:
            parts = [_permutation_chunk(j) for j in jobs]
        sims = np.concatenate(parts)
        # relative slack keeps exact ties from flipping on rounding noise
        obs = abs(I - expectation)
        extreme = np.abs(sims - expectation) >= obs - 1e-12 * max(1.0, obs)
        p = (int(extreme.sum()) + 1) / (n_perm + 1)
        variance = _checked_variance(float(sims.var(ddof=1)), float(np.mean(sims**2)))
        z_score = (I - expectation) / math.sqrt(variance)
        return MoranResult(I, expectation, variance, z_score, p, PERMUTATION, n, n_perm)

    raise ValueError(f"unknown Moran mode {mode!r}")
