"""Top-k Hessian eigenvalues by power iteration with deflation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import hessian_vector_product
from .errors import ConfigError
from .landscape import fmt
from .rng import Xoshiro256

CONVERGENCE_RTOL = 1e-2


@dataclass
class SpectrumReport:
    eigenvalues: list[float]
    iterations: list[int]
    residuals: list[float]
    converged: list[bool]
    vectors: list[np.ndarray] = field(default_factory=list, repr=False)

    def header(self) -> list[str]:
        return ["rank", "eigenvalue", "iterations", "residual", "converged"]

    def rows(self) -> list[list[str]]:
        return [
            [str(i + 1), fmt(lam), str(it), fmt(res), "true" if ok else "false"]
            for i, (lam, it, res, ok) in enumerate(zip(self.eigenvalues, self.iterations, self.residuals, self.converged))
        ]


def _project_out(x: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    for u in basis:
        x = x - (u @ x) * u
    return x


def hessian_spectrum(model, params, batch, k: int = 1, iters: int = 100, seed: int = 0,
                     tol: float = 1e-12) -> SpectrumReport:
    """Estimate the ``k`` largest-magnitude eigenvalues of the loss Hessian.

    Each eigenpair runs at most ``iters`` power iterations on Hessian-vector
    products, projecting previously found eigenvectors out of every iterate.
    Iteration stops early once ``||Hv - lam v|| <= tol * max(1, |lam|)``.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    if iters < 1:
        raise ConfigError("iters must be >= 1")
    w = np.asarray(params, dtype=np.float64)
    p = w.size
    if k > p:
        raise ConfigError(f"cannot extract {k} eigenvalues from {p} parameters")
    found: list[np.ndarray] = []
    results = []
    for idx in range(k):
        rng = Xoshiro256(seed, stream=f"spectrum:{idx}")
        v = _project_out(rng.normal(p), found)
        v /= np.linalg.norm(v)
        lam, residual, used = 0.0, np.inf, 0
        for used in range(1, iters + 1):
            hv = _project_out(hessian_vector_product(model, w, batch, v), found)
            lam = float(v @ hv)
            residual = float(np.linalg.norm(hv - lam * v))
            if residual <= tol * max(1.0, abs(lam)):
                break
            norm = float(np.linalg.norm(hv))
            if norm == 0.0:
                break
            v = _project_out(hv / norm, found)
            v /= np.linalg.norm(v)
        # final Rayleigh quotient and residual on the undeflated operator
        hv = hessian_vector_product(model, w, batch, v)
        lam = float(v @ hv)
        residual = float(np.linalg.norm(hv - lam * v))
        found.append(v)
        ok = residual <= CONVERGENCE_RTOL * abs(lam)
        results.append((lam, used, residual, ok, v))
    results.sort(key=lambda r: -abs(r[0]))
    return SpectrumReport(
        eigenvalues=[r[0] for r in results],
        iterations=[r[1] for r in results],
        residuals=[r[2] for r in results],
        converged=[r[3] for r in results],
        vectors=[r[4] for r in results],
    )


def dense_hessian(model, params, batch) -> np.ndarray:
    """Full Hessian from P Hessian-vector products (small models only)."""
    w = np.asarray(params, dtype=np.float64)
    p = w.size
    if p > 100:
        raise ConfigError("dense Hessian is limited to P <= 100")
    cols = [hessian_vector_product(model, w, batch, e) for e in np.eye(p)]
    h = np.stack(cols, axis=1)
    return 0.5 * (h + h.T)
