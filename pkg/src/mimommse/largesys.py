"""Deterministic equivalents of the MMSE mutual information.

For transmit correlation ``C`` (already including the precoder, i.e.
``K^H C_T K``) and receive correlation ``C_R``, the pair ``(delta, delta_t)``
is the unique positive solution of::

    delta   = Tr[C   (sigma2 (I + delta_t C  ))^{-1}] / t
    delta_t = Tr[C_R (sigma2 (I + delta   C_R))^{-1}] / t

Both traces use ``1/t``. Everything below depends on the spectra of ``C``
and ``C_R`` only, except the diagonal of ``T_T`` which needs the eigenvectors
of ``C``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegeneratePointError, DomainError, StabilityError
from .matcore import as_cmatrix, herm_eig

__all__ = [
    "FixedPointSolution",
    "ApproxReport",
    "solve_fixed_point",
    "solve_spectral",
    "i_hat",
    "j_bar",
    "j_bar_reduced",
    "i_bar",
    "quadform_variance_prediction",
    "diagonal_objective",
    "grad_lambda",
]

MAX_ITER = 10_000
STEP_TOL = 1e-13
RESIDUAL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FixedPointSolution:
    """Solved fixed point and the derived deterministic equivalents.

    ``d``/``d_r`` are the (descending) eigenvalues of the transmit and receive
    correlations, ``t_diag``/``t_r_diag`` the diagonal resolvent approximants
    in those eigenbases. ``T_T`` and ``T_R`` are built lazily because most
    callers only need spectra.
    """

    delta: float
    delta_tilde: float
    gamma: float
    gamma_tilde: float
    sigma2: float
    residual: float
    iterations: int
    d: np.ndarray
    d_r: np.ndarray
    t_diag: np.ndarray
    t_r_diag: np.ndarray
    u: np.ndarray = None
    u_r: np.ndarray = None

    @property
    def t(self):
        return self.d.size

    @property
    def r(self):
        return self.d_r.size

    @property
    def stability(self):
        return 1.0 - self.sigma2**2 * self.gamma * self.gamma_tilde

    @property
    def T_T(self):
        if self.u is None:
            return np.diag(self.t_diag).astype(np.complex128)
        return (self.u * self.t_diag) @ self.u.conj().T

    @property
    def T_R(self):
        if self.u_r is None:
            return np.diag(self.t_r_diag).astype(np.complex128)
        return (self.u_r * self.t_r_diag) @ self.u_r.conj().T

    def diag_T_T(self):
        """Real diagonal of ``T_T`` without forming the full matrix."""
        if self.u is None:
            return self.t_diag.copy()
        return np.einsum("jk,k,jk->j", self.u, self.t_diag, self.u.conj()).real


@dataclass(frozen=True)
class ApproxReport:
    """Large-system approximations in nats."""

    i_hat: float
    j_bar: float
    i_bar: float
    per_stream: np.ndarray

    def to_dict(self):
        return {
            "i_hat": self.i_hat,
            "j_bar": self.j_bar,
            "i_bar": self.i_bar,
            "per_stream": self.per_stream.tolist(),
        }


def _delta_map(d, delta_tilde, sigma2, t):
    # ndarray.sum skips the np.sum dispatch overhead, which dominates for small t
    return float((d / (sigma2 * (1.0 + delta_tilde * d))).sum()) / t


def _residual(d, d_r, delta, delta_tilde, sigma2, t):
    r1 = abs(delta - _delta_map(d, delta_tilde, sigma2, t))
    r2 = abs(delta_tilde - _delta_map(d_r, delta, sigma2, t))
    return max(r1 / delta if delta > 0 else r1, r2 / delta_tilde if delta_tilde > 0 else r2)


def _iterate(d, d_r, sigma2, t, delta0=None, max_iter=MAX_ITER):
    """Alternating substitution with damping engaged on residual increase.

    ``delta_tilde`` is always recomputed from the current ``delta``, so the
    second equation holds to rounding and the residual of the first equation
    comes for free from the next map evaluation.
    """
    delta = float(np.sum(d)) / t / sigma2 if delta0 is None else float(delta0)
    delta_tilde = _delta_map(d_r, delta, sigma2, t)
    damping = 1.0
    step = np.inf
    prev_res = np.inf
    for it in range(max_iter + 1):
        mapped = _delta_map(d, delta_tilde, sigma2, t)
        diff = abs(mapped - delta)
        res = diff / delta if delta > 0 else diff
        if step < STEP_TOL and res < RESIDUAL_TOL:
            return delta, delta_tilde, _residual(d, d_r, delta, delta_tilde, sigma2, t), it
        if res > prev_res:
            damping = 0.5
        prev_res = res
        new_delta = damping * mapped + (1.0 - damping) * delta
        step = abs(new_delta - delta) / new_delta if new_delta > 0 else abs(new_delta - delta)
        delta = new_delta
        delta_tilde = _delta_map(d_r, delta, sigma2, t)
    raise ConvergenceError("fixed point iteration did not converge", res, max_iter)


def solve_spectral(d, d_r, sigma2, delta0=None, max_iter=MAX_ITER, u=None, u_r=None):
    """Solve the fixed point given the two spectra directly.

    ``d`` may be any nonnegative vector (for instance the diagonal of a
    structured ``Lambda``); it is not reordered.
    """
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    d = np.clip(np.asarray(d, dtype=float), 0.0, None)
    d_r = np.clip(np.asarray(d_r, dtype=float), 0.0, None)
    t = d.size
    if not np.sum(d_r) > 0:
        raise DomainError("receive correlation must have positive trace")
    delta, delta_tilde, res, iters = _iterate(d, d_r, sigma2, t, delta0, max_iter)
    t_diag = 1.0 / (sigma2 * (1.0 + delta_tilde * d))
    t_r_diag = 1.0 / (sigma2 * (1.0 + delta * d_r))
    gamma = float(np.sum(d**2 * t_diag**2)) / t
    gamma_tilde = float(np.sum(d_r**2 * t_r_diag**2)) / t
    return FixedPointSolution(
        delta=delta,
        delta_tilde=delta_tilde,
        gamma=gamma,
        gamma_tilde=gamma_tilde,
        sigma2=float(sigma2),
        residual=res,
        iterations=iters,
        d=d,
        d_r=d_r,
        t_diag=t_diag,
        t_r_diag=t_r_diag,
        u=u,
        u_r=u_r,
    )


def solve_fixed_point(c_t_eff, c_r, sigma2, delta0=None, max_iter=MAX_ITER):
    """Solve the fixed point for transmit correlation ``c_t_eff`` and ``c_r``.

    ``c_t_eff`` is the correlation seen through the precoder, ``K^H C_T K``.
    ``delta0`` overrides the starting point ``Tr(c_t_eff)/(t sigma2)``.
    """
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    eig_t = herm_eig(as_cmatrix(c_t_eff, square=True))
    eig_r = herm_eig(as_cmatrix(c_r, square=True))
    return solve_spectral(
        eig_t.eigvals,
        eig_r.eigvals,
        sigma2,
        delta0=delta0,
        max_iter=max_iter,
        u=eig_t.eigvecs,
        u_r=eig_r.eigvecs,
    )


def i_hat(fp):
    """First-order approximation ``-sum_j log(sigma2 T_T,jj)`` and its per-stream terms."""
    per_stream = -np.log(fp.sigma2 * fp.diag_T_T())
    return float(np.sum(per_stream)), per_stream


def _check_stability(fp):
    if not fp.stability > 0:
        raise StabilityError(f"stability margin {fp.stability:.3e} is not positive")


def j_bar(fp):
    """Variance correction term, general (non-diagonal) form.

    Uses the diagonals of ``sigma2 T_T`` and of its square; for a diagonal
    effective correlation it collapses to ``j_bar_reduced``.
    """
    _check_stability(fp)
    s = fp.sigma2
    if fp.delta_tilde == 0 or not np.any(fp.d > 0):
        return 0.0
    if fp.u is None:
        diag1 = s * fp.t_diag
        diag2 = diag1**2
    else:
        w = np.abs(fp.u) ** 2
        diag1 = w @ (s * fp.t_diag)
        diag2 = w @ (s * fp.t_diag) ** 2
    factor = (1.0 - diag2 / diag1) ** 2
    pref = fp.gamma_tilde / (2.0 * fp.delta_tilde**2 * fp.stability)
    return float(pref * np.mean(factor))


def j_bar_reduced(fp):
    """``(1/2) p / (1 - p)`` with ``p = sigma2^2 gamma gamma_tilde``."""
    _check_stability(fp)
    p = fp.sigma2**2 * fp.gamma * fp.gamma_tilde
    return 0.5 * p / (1.0 - p)


def i_bar(fp):
    """Corrected approximation report, ``i_bar = i_hat + j_bar``."""
    ih, per_stream = i_hat(fp)
    jb = j_bar(fp)
    return ApproxReport(i_hat=ih, j_bar=jb, i_bar=ih + jb, per_stream=per_stream)


def quadform_variance_prediction(fp, u):
    """Predicted variance of ``u Q u^H`` for the resolvent in the eigenbasis.

    ``u`` is a unit-norm vector expressed in the eigenbasis of the transmit
    correlation (the ordering of ``fp.d``).
    """
    _check_stability(fp)
    u = np.asarray(u, dtype=np.complex128)
    if abs(np.linalg.norm(u) - 1.0) > 1e-10:
        raise DomainError("u must have unit norm")
    s2 = fp.sigma2**2
    quad = float(np.sum(np.abs(u) ** 2 * fp.t_diag**2 * fp.d))
    return s2 * fp.gamma_tilde / fp.stability * quad**2 / fp.t


def diagonal_objective(lam, d_r, sigma2, fp=None):
    """Surrogate ``sum_j log(1 + lam_j delta_t) + (1/2) p / (1 - p)`` for diagonal ``Lambda``.

    Returns ``(i_hat, j_bar, fp)`` so that callers can reuse the solved point.
    """
    lam = np.asarray(lam, dtype=float)
    if fp is None:
        fp = solve_spectral(lam, d_r, sigma2)
    ih = float(np.sum(np.log1p(lam * fp.delta_tilde)))
    return ih, j_bar_reduced(fp), fp


def grad_lambda(lam, d_r, sigma2, fp=None, corrected=True):
    """Gradient of the diagonal surrogate with respect to ``lam``.

    The fixed point is differentiated implicitly: with ``a = sigma2^2 gamma``
    and ``b = sigma2^2 gamma_t`` the linearized system is
    ``[[1, a/sigma2], [b/sigma2, 1]] (d delta, d delta_t) = (df/dlam_j, 0)``
    whose determinant is the stability margin. ``corrected=False`` drops the
    correction term and differentiates ``i_hat`` only.
    """
    lam = np.clip(np.asarray(lam, dtype=float), 0.0, None)
    d_r = np.asarray(d_r, dtype=float)
    if fp is None:
        fp = solve_spectral(lam, d_r, sigma2)
    t = lam.size
    s = float(sigma2)
    dt, de = fp.delta_tilde, fp.delta
    g, gt = fp.gamma, fp.gamma_tilde
    det = 1.0 - s**2 * g * gt
    if det < 1e-14:
        raise DegeneratePointError(f"implicit system is singular (det={det:.3e})")

    den = 1.0 + dt * lam
    # explicit sensitivity of the delta map to lam_j
    f_lam = 1.0 / (t * s * den**2)
    d_delta = f_lam / det
    d_delta_t = -s * gt * f_lam / det

    grad = dt / den + np.sum(lam / den) * d_delta_t
    if not corrected:
        return grad

    den_r = 1.0 + de * d_r
    dgamma_explicit = 2.0 * lam / (t * s**2 * den**3)
    dgamma_d_dt = -2.0 * np.sum(lam**3 / den**3) / (t * s**2)
    dgamma_t_d_de = -2.0 * np.sum(d_r**3 / den_r**3) / (t * s**2)
    dgamma = dgamma_explicit + dgamma_d_dt * d_delta_t
    dgamma_t = dgamma_t_d_de * d_delta
    p = s**2 * g * gt
    dp = s**2 * (gt * dgamma + g * dgamma_t)
    return grad + 0.5 * dp / (1.0 - p) ** 2
