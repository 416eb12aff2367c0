"""Volatility-coefficient models and the divergence / information quantities.

A model maps a covariate row ``x`` and a parameter vector ``theta`` to the
``d x r`` diffusion matrix.  ``sigma`` is vectorised over covariate rows:
it receives an ``(m, d1)`` array and returns ``(m, d, r)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonPositiveDefinite, OutOfBox

EPS_PD = 1e-12
FD_STEP = 1e-5

SigmaFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class VolatilityModel:
    name: str
    d: int
    r: int
    d0: int
    theta_lo: tuple
    theta_hi: tuple
    sigma: SigmaFn
    dsigma_dtheta: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    drift: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    # paths are reflected at this level during simulation (None: no reflection)
    state_floor: Optional[float] = None
    in_domain: Optional[Callable[[np.ndarray], np.ndarray]] = None
    d1: Optional[int] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lo = np.asarray(self.theta_lo, dtype=float)
        hi = np.asarray(self.theta_hi, dtype=float)
        if lo.shape != (self.d0,) or hi.shape != (self.d0,):
            raise ValueError(f"theta box must have {self.d0} coordinates")
        if not np.all(np.isfinite(lo) & np.isfinite(hi)) or np.any(hi <= lo):
            raise ValueError("theta box must be finite with strictly positive widths")
        if self.d1 is None:
            object.__setattr__(self, "d1", self.d)

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.theta_lo, dtype=float), np.asarray(self.theta_hi, dtype=float)

    def with_box(self, lo, hi) -> "VolatilityModel":
        from dataclasses import replace

        return replace(self, theta_lo=tuple(np.atleast_1d(lo).astype(float)),
                       theta_hi=tuple(np.atleast_1d(hi).astype(float)))

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.d0,):
            raise ValueError(f"theta must have {self.d0} coordinates, got shape {theta.shape}")
        lo, hi = self.box
        if np.any(theta < lo) or np.any(theta > hi) or not np.all(np.isfinite(theta)):
            raise OutOfBox(f"theta={theta.tolist()} outside box [{lo.tolist()}, {hi.tolist()}]")
        return theta


def _rows(model: VolatilityModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        x = x.reshape(1, -1) if x.size == model.d1 else x.reshape(-1, model.d1)
    return x


def sigma_batch(model: VolatilityModel, x, theta) -> np.ndarray:
    sig = np.asarray(model.sigma(_rows(model, x), np.atleast_1d(np.asarray(theta, dtype=float))),
                     dtype=float)
    return sig.reshape(-1, model.d, model.r)


def check_spd(S: np.ndarray) -> None:
    """Raise NonPositiveDefinite unless every matrix in the ``(m, d, d)`` stack
    has smallest eigenvalue above EPS_PD times its largest diagonal entry."""
    if not np.all(np.isfinite(S)):
        raise NonPositiveDefinite("S has non-finite entries")
    diag_max = np.max(np.diagonal(S, axis1=-2, axis2=-1), axis=-1)
    if S.shape[-1] == 1:
        lam = S[:, 0, 0]
    else:
        lam = np.linalg.eigvalsh(S)[:, 0]
    bad = (diag_max <= 0) | (lam <= EPS_PD * diag_max)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NonPositiveDefinite(f"S not positive definite at row {i} (min eigenvalue {lam[i]:.3g})")


def S_batch(model: VolatilityModel, x, theta, check_box: bool = True) -> np.ndarray:
    """Stack of ``S = sigma sigma^T`` over covariate rows, shape ``(m, d, d)``."""
    if check_box:
        theta = model.check_theta(theta)
    sig = sigma_batch(model, x, theta)
    S = sig @ np.swapaxes(sig, -1, -2)
    check_spd(S)
    return S


def eval_S(model: VolatilityModel, x, theta) -> np.ndarray:
    return S_batch(model, np.asarray(x, dtype=float).reshape(1, -1), theta)[0]


def eval_Q(model: VolatilityModel, x, theta_a, theta_b) -> float:
    """Divergence Tr(Sa^-1 Sb - I) - log det(Sa^-1 Sb); zero iff Sa == Sb."""
    Sa = eval_S(model, x, theta_a)
    Sb = eval_S(model, x, theta_b)
    if np.array_equal(Sa, Sb):
        return 0.0
    L = np.linalg.cholesky(Sa)
    Linv = np.linalg.inv(L)
    u = np.linalg.eigvalsh(Linv @ Sb @ Linv.T)
    e = u - 1.0
    return float(np.sum(e - np.log1p(e)))


def dS_dtheta(model: VolatilityModel, x, theta, analytic: Optional[bool] = None) -> np.ndarray:
    """Derivatives of S in each parameter coordinate, shape ``(d0, d, d)``.

    Uses the model's analytic sigma derivative when available (or when
    ``analytic`` is True); otherwise central differences of S.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    xr = np.asarray(x, dtype=float).reshape(1, -1)
    if analytic is None:
        analytic = model.dsigma_dtheta is not None
    if analytic:
        if model.dsigma_dtheta is None:
            raise ValueError(f"model {model.name!r} has no analytic derivative")
        sig = sigma_batch(model, xr, theta)[0]
        dsig = np.asarray(model.dsigma_dtheta(xr, theta), dtype=float).reshape(model.d0, model.d, model.r)
        prod = dsig @ sig.T
        return prod + np.swapaxes(prod, -1, -2)
    out = np.empty((model.d0, model.d, model.d))
    for j in range(model.d0):
        step = FD_STEP * max(1.0, abs(theta[j]))
        up, dn = theta.copy(), theta.copy()
        up[j] += step
        dn[j] -= step
        sp = sigma_batch(model, xr, up)[0]
        sm = sigma_batch(model, xr, dn)[0]
        out[j] = (sp @ sp.T - sm @ sm.T) / (up[j] - dn[j])
    return out


def eval_Xi(model: VolatilityModel, x, theta, analytic: Optional[bool] = None) -> np.ndarray:
    """Information matrix Tr(dS_i S^-1 dS_j S^-1); the Hessian of Q at theta."""
    S = eval_S(model, x, theta)
    dS = dS_dtheta(model, x, theta, analytic=analytic)
    L = np.linalg.cholesky(S)
    Sinv = np.linalg.inv(L).T @ np.linalg.inv(L)
    A = dS @ Sinv
    xi = np.einsum("iab,jba->ij", A, A)
    return 0.5 * (xi + xi.T)


# -- built-in models ---------------------------------------------------------

def _model1_sigma(x, theta):
    return np.power(1.0 + x[:, :1] ** 2, theta[0])[:, :, None]


def _model1_dsigma(x, theta):
    base = 1.0 + x[:, 0] ** 2
    return (np.log(base) * np.power(base, theta[0])).reshape(-1, 1, 1, 1)


def _cir_sigma(x, theta):
    return np.sqrt(theta[0] * x[:, :1])[:, :, None]


def _cir_dsigma(x, theta):
    return (0.5 * np.sqrt(x[:, 0] / theta[0])).reshape(-1, 1, 1, 1)


def _positive(x):
    return np.all(x > 0, axis=-1)


def model1(theta_lo=0.0, theta_hi=1.0) -> VolatilityModel:
    """sigma(x, theta) = (1 + x^2)^theta, covariate = state."""
    return VolatilityModel("model1", 1, 1, 1, (float(theta_lo),), (float(theta_hi),),
                           _model1_sigma, _model1_dsigma)


def cir(theta_lo=1e-3, theta_hi=1.0) -> VolatilityModel:
    """Square-root diffusion sigma(x, theta) = sqrt(theta x) on x > 0."""
    return VolatilityModel("cir", 1, 1, 1, (float(theta_lo),), (float(theta_hi),),
                           _cir_sigma, _cir_dsigma, state_floor=1e-8, in_domain=_positive)


BUILTIN_MODELS = {"model1": model1, "cir": cir}


def get_model(name: str, theta_box=None) -> VolatilityModel:
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(BUILTIN_MODELS)}") from None
    return factory() if theta_box is None else factory(*theta_box)
