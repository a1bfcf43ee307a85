"""Flux nonlinearities with certified ellipticity and Lipschitz constants.

Built-in fluxes act componentwise, so the Jacobian is diagonal and its
eigenvalues are available in closed form.  The upper ellipticity bound is
normalized to one; user-supplied fluxes must be pre-scaled to respect it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# max_q |d/dq sech^2(q)| = 4/(3*sqrt(3)), attained where tanh(q) = 1/sqrt(3)
SECH2_SLOPE_MAX = 4.0 / (3.0 * np.sqrt(3.0))


@dataclass(frozen=True)
class Nonlinearity:
    """A flux q -> A(q) with diagonal Jacobian q -> diag(DA(q)).

    a maps an array of gradient components to the flux, componentwise.
    da returns the diagonal Jacobian entries at the same shape.  lam is
    the declared ellipticity floor, Lam the declared Lipschitz constant
    of DA; both are promises checked by verify_ellipticity, not enforced
    at call time.
    """

    kind: str
    lam: float
    Lam: float
    a: Callable[[np.ndarray], np.ndarray]
    da: Callable[[np.ndarray], np.ndarray]

    def __repr__(self):
        return f"Nonlinearity({self.kind!r}, lam={self.lam}, Lam={self.Lam})"


def builtin(kind: str, lam: float = 1.0) -> Nonlinearity:
    """Built-in fluxes.

    identity: A(q) = q, Jacobian I, lam = 1, Lam = 0.
    tanh_perturbed: A(q) = lam*q + (1-lam)*tanh(q) componentwise, Jacobian
    diag(lam + (1-lam)*sech^2(q)) with eigenvalues confined to [lam, 1]
    and Lipschitz constant (1-lam)*4/(3*sqrt(3)).
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda must lie in (0, 1], got {lam}")
    if kind == "identity":
        return Nonlinearity("identity", 1.0, 0.0, lambda q: np.asarray(q, float), _ones_like)
    if kind == "tanh_perturbed":
        lam = float(lam)

        def a(q):
            q = np.asarray(q, dtype=np.float64)
            return lam * q + (1.0 - lam) * np.tanh(q)

        def da(q):
            q = np.asarray(q, dtype=np.float64)
            return lam + (1.0 - lam) / np.cosh(q) ** 2

        return Nonlinearity("tanh_perturbed", lam, (1.0 - lam) * SECH2_SLOPE_MAX, a, da)
    raise ValueError(f"unknown nonlinearity kind {kind!r}")


def _ones_like(q):
    return np.ones_like(np.asarray(q, dtype=np.float64))


def secant_coefficient(nl: Nonlinearity, q1, q2) -> np.ndarray:
    """Segment average of the Jacobian, int_0^1 DA(theta*q2 + (1-theta)*q1) dtheta.

    For a componentwise flux this average is exactly the difference
    quotient (A(q2) - A(q1)) / (q2 - q1), so no quadrature is involved
    and the [lam, 1] eigenvalue confinement carries over up to rounding.
    Where the endpoints nearly coincide the quotient would cancel
    catastrophically; those entries fall back to DA at the midpoint,
    keeping the result within about 1e-10 of the exact average.
    Returns the diagonal entries at the broadcast shape of q1 and q2.
    """
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    if not (np.all(np.isfinite(q1)) and np.all(np.isfinite(q2))):
        raise ValueError("secant_coefficient needs finite arguments")
    q1, q2 = np.broadcast_arrays(q1, q2)
    dq = q2 - q1
    near = np.abs(dq) <= 1e-6 * np.maximum(np.maximum(np.abs(q1), np.abs(q2)), 1.0)
    quot = (nl.a(q2) - nl.a(q1)) / np.where(near, 1.0, dq)
    return np.where(near, nl.da(0.5 * (q1 + q2)), quot)


@dataclass
class EllipticityReport:
    """Sampled verdict on the ellipticity and Lipschitz declarations."""

    kind: str
    n_samples: int
    radius: float
    seed: int
    min_rayleigh: float
    max_opnorm: float
    max_lipschitz_ratio: float
    passed: bool
    violations: list = field(default_factory=list)

    def to_dict(self):
        return {
            "kind": self.kind,
            "n_samples": self.n_samples,
            "radius": self.radius,
            "seed": self.seed,
            "min_rayleigh": self.min_rayleigh,
            "max_opnorm": self.max_opnorm,
            "max_lipschitz_ratio": self.max_lipschitz_ratio,
            "passed": self.passed,
            "violations": self.violations[:10],
        }


def verify_ellipticity(
    nl: Nonlinearity, n_samples: int, radius: float, seed: int, d: int = 1
) -> EllipticityReport:
    """Randomized check of the declared lam, upper bound 1, and Lam.

    Samples q, q' uniformly in the radius ball and directions xi on the
    unit sphere; PASS needs min Rayleigh quotient >= lam - 1e-12, operator
    norm <= 1 + 1e-12, and Lipschitz ratio <= Lam*(1 + 1e-6).  Violations
    are reported, not raised.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    q = _ball(rng, n_samples, d, radius)
    q2 = _ball(rng, n_samples, d, radius)
    xi = rng.standard_normal((n_samples, d))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)

    diag = nl.da(q)
    rayleigh = np.sum(diag * xi * xi, axis=1)  # xi . DA(q) xi, |xi| = 1
    opnorm = np.linalg.norm(diag * xi, axis=1)
    dq = np.linalg.norm(q2 - q, axis=1)
    ddiag = np.max(np.abs(nl.da(q2) - diag), axis=1)  # diagonal operator norm
    with np.errstate(invalid="ignore", divide="ignore"):
        lip = np.where(dq > 0, ddiag / dq, 0.0)

    violations = []
    for i in np.nonzero(rayleigh < nl.lam - 1e-12)[0][:10]:
        violations.append({"check": "rayleigh", "q": q[i].tolist(), "value": float(rayleigh[i])})
    for i in np.nonzero(opnorm > 1.0 + 1e-12)[0][:10]:
        violations.append({"check": "opnorm", "q": q[i].tolist(), "value": float(opnorm[i])})
    for i in np.nonzero(lip > nl.Lam * (1.0 + 1e-6))[0][:10]:
        violations.append(
            {"check": "lipschitz", "q": q[i].tolist(), "q2": q2[i].tolist(), "value": float(lip[i])}
        )
    return EllipticityReport(
        kind=nl.kind,
        n_samples=int(n_samples),
        radius=float(radius),
        seed=int(seed),
        min_rayleigh=float(np.min(rayleigh)),
        max_opnorm=float(np.max(opnorm)),
        max_lipschitz_ratio=float(np.max(lip)),
        passed=not violations,
        violations=violations,
    )


def _ball(rng, n, d, radius):
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * radius * rng.random((n, 1)) ** (1.0 / d)
