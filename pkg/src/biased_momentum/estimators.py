"""Biased gradient transformers applied at each worker.

Compression operators (top-k, scaled sign) are contractive:
||Q(g) - g||^2 <= (1 - alpha) ||g||^2 with alpha = k/d for top-k and
worst case 1/d for scaled sign.  Clipping rescales to norm tau, with the
exact residual ||clip(g) - g|| = max(||g|| - tau, 0).  The composite
estimator subsamples both layers of a composite problem and is biased even
in expectation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .composite import CompositeProblem, chained_gradient
from .errors import ConfigurationError
from .problems import NoiseSpec, Problem, as_param_vector, full_gradient, worker_gradient
from .rng import pairwise_mean

__all__ = [
    "EstimatorSpec",
    "top_k",
    "scaled_sign",
    "scaled_sign_alpha",
    "clip",
    "composite_estimate",
    "apply_estimator",
    "worker_estimate",
    "measure_eta",
]

KINDS = ("identity", "top_k", "scaled_sign", "clip", "composite")


@dataclass(frozen=True)
class EstimatorSpec:
    """Configuration of one worker-side gradient transformer."""

    kind: str = "identity"
    k: int | None = None
    tau: float | None = None
    s_g: int | None = None
    s_f: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "top_k":
            if self.k is None or self.k < 1:
                raise ConfigurationError("top_k needs k >= 1")
        if self.kind == "clip":
            if self.tau is None or not self.tau > 0:
                raise ConfigurationError("clip needs tau > 0")
        if self.kind == "composite":
            if self.s_g is None or self.s_f is None or self.s_g < 1 or self.s_f < 1:
                raise ConfigurationError("composite needs S_g >= 1 and S_F >= 1")

    def contraction_alpha(self, dimension: int) -> float | None:
        """Worst-case contraction constant, or None for non-compressors."""
        if self.kind == "identity":
            return 1.0
        if self.kind == "top_k":
            if self.k > dimension:
                raise ConfigurationError(f"k={self.k} exceeds dimension {dimension}")
            return self.k / dimension
        if self.kind == "scaled_sign":
            return 1.0 / dimension
        return None

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.k is not None:
            d["k"] = self.k
        if self.tau is not None:
            d["tau"] = self.tau
        if self.s_g is not None:
            d["S_g"] = self.s_g
        if self.s_f is not None:
            d["S_F"] = self.s_f
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorSpec":
        return cls(
            kind=d.get("kind", "identity"),
            k=int(d["k"]) if "k" in d else None,
            tau=float(d["tau"]) if "tau" in d else None,
            s_g=int(d["S_g"]) if "S_g" in d else None,
            s_f=int(d["S_F"]) if "S_F" in d else None,
        )


def top_k(g: np.ndarray, k: int) -> np.ndarray:
    """Keep the k entries of largest magnitude, zero the rest.

    Ties break toward the lowest index (stable sort on -|g|), so the output
    is deterministic.
    """
    g = np.asarray(g, dtype=np.float64)
    d = g.size
    if not 1 <= k <= d:
        raise ConfigurationError(f"k={k} out of range [1, {d}]")
    if k == d:
        return g.copy()
    order = np.argsort(-np.abs(g), kind="stable")
    out = np.zeros_like(g)
    keep = order[:k]
    out[keep] = g[keep]
    return out


def scaled_sign(g: np.ndarray) -> np.ndarray:
    """(||g||_1 / d) * sign(g), with sign(0) = 0 so the operator stays odd."""
    g = np.asarray(g, dtype=np.float64)
    scale = np.sum(np.abs(g)) / g.size
    return scale * np.sign(g)


def scaled_sign_alpha(g: np.ndarray) -> float:
    """Per-input contraction ||g||_1^2 / (d ||g||^2); worst case is 1/d."""
    g = np.asarray(g, dtype=np.float64)
    sq = float(g @ g)
    if sq == 0.0:
        return 1.0
    return float(np.sum(np.abs(g))) ** 2 / (g.size * sq)


def clip(g: np.ndarray, tau: float) -> np.ndarray:
    """min(1, tau/||g||) * g: norm capped at tau, direction preserved."""
    if not tau > 0:
        raise ConfigurationError(f"tau must be > 0, got {tau}")
    g = np.asarray(g, dtype=np.float64)
    norm = float(np.linalg.norm(g))
    if norm <= tau:
        return g.copy()
    return (tau / norm) * g


def composite_estimate(
    p: CompositeProblem,
    i: int,
    x: np.ndarray,
    s_g: int,
    s_f: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Doubly subsampled chained gradient of worker i.

    One uniform without-replacement draw of size s_g serves both the inner
    value and the inner Jacobian; an independent draw of size s_f selects
    the outer gradients.  Full batch sizes reproduce the exact gradient.
    """
    if not isinstance(p, CompositeProblem):
        raise ConfigurationError("composite estimator requires a composite problem")
    if not 1 <= s_g <= p.m_g:
        raise ConfigurationError(f"S_g={s_g} out of range [1, {p.m_g}]")
    if not 1 <= s_f <= p.m_F:
        raise ConfigurationError(f"S_F={s_f} out of range [1, {p.m_F}]")
    idx_g = np.sort(rng.choice(p.m_g, size=s_g, replace=False))
    idx_f = np.sort(rng.choice(p.m_F, size=s_f, replace=False))
    return chained_gradient(p, i, x, idx_g, idx_f)


def apply_estimator(spec: EstimatorSpec, raw: np.ndarray) -> np.ndarray:
    """Transform one raw worker gradient according to the spec."""
    if spec.kind == "identity":
        return np.asarray(raw, dtype=np.float64)
    if spec.kind == "top_k":
        return top_k(raw, spec.k)
    if spec.kind == "scaled_sign":
        return scaled_sign(raw)
    if spec.kind == "clip":
        return clip(raw, spec.tau)
    raise ConfigurationError(
        "composite estimator has no raw-vector form; use worker_estimate"
    )


def worker_estimate(
    p: Problem,
    i: int,
    x: np.ndarray,
    spec: EstimatorSpec,
    noise: NoiseSpec | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """What worker i transmits: estimator applied to its (noisy) gradient.

    For compressor/clip kinds the noise is injected before the operator,
    matching the Top-K(grad + offset + gaussian) experimental pipeline; the
    composite kind draws its index subsets first and then adds any
    configured noise to the chained estimate.
    """
    if spec.kind == "composite":
        if not isinstance(p, CompositeProblem):
            raise ConfigurationError(
                f"composite estimator cannot run on problem kind {p.kind!r}"
            )
        g = composite_estimate(p, i, x, spec.s_g, spec.s_f, rng)
        if noise is not None:
            pert = noise.draw(p.dimension, rng)
            if pert is not None:
                g = g + pert
        return g
    raw = worker_gradient(p, i, x, noise, rng)
    return apply_estimator(spec, raw)


def measure_eta(
    p: Problem,
    x: np.ndarray,
    spec: EstimatorSpec,
    noise: NoiseSpec | None = None,
    samples: int = 1000,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Monte-Carlo (mean, stderr) of ||eta||^2 at a fixed iterate.

    eta is the aggregate error: the pairwise-averaged worker estimates minus
    the exact full gradient at x.
    """
    if samples < 1:
        raise ConfigurationError("samples must be >= 1")
    x = as_param_vector(x, p.dimension)
    if rng is None:
        rng = np.random.default_rng(0 if noise is None else noise.seed)
    exact = full_gradient(p, x)
    vals = np.empty(samples)
    for s in range(samples):
        g = pairwise_mean(
            [worker_estimate(p, i, x, spec, noise, rng) for i in range(p.n_workers)]
        )
        diff = g - exact
        vals[s] = diff @ diff
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return mean, stderr
