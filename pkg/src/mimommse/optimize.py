"""Precoder design against the large-system surrogates and the true EMI.

Structured precoders have the form ``K = U D^{-1/2} Lambda^{1/2}`` where
``C_T = U D U^H`` (eigenvalues descending), so that ``K^H C_T K = Lambda``.
The power constraint ``Tr(K K^H)/t <= 1`` then reads
``sum_j lam_j / d_j <= t``.
"""

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import largesys
from .channel import power
from .errors import ConstraintError, DomainError, RankDeficiencyError
from .matcore import as_cmatrix, herm_eig, rng_stream
from .mcsim import draw_gaussians, emi_from_gaussians, emi_estimate

__all__ = [
    "GeneralPrecoder",
    "StructuredPrecoder",
    "PGOptions",
    "TraceEntry",
    "OptimResult",
    "assemble_precoder",
    "structured_objective",
    "projected_gradient",
    "default_starts",
    "multistart",
    "antenna_selection_values",
    "antenna_selection_iid",
    "optimize_true_emi",
    "rotation_dominance_check",
    "problem1_objective",
    "prop3_dominance_check",
]

FEAS_TOL = 1e-12
RANK_TOL = 1e-14
LOG2 = math.log(2.0)


@dataclass(frozen=True, eq=False)
class GeneralPrecoder:
    """Arbitrary ``t x t`` precoder."""

    K: np.ndarray

    def __post_init__(self):
        k = as_cmatrix(self.K, square=True)
        if power(k) > 1.0 + FEAS_TOL:
            raise ConstraintError(f"precoder power {power(k):.6g} exceeds 1")
        object.__setattr__(self, "K", k)

    def matrix(self, c_t=None):
        return self.K


@dataclass(frozen=True, eq=False)
class StructuredPrecoder:
    """Powers ``lam`` on the eigenmodes of ``C_T``, aligned with descending eigenvalues."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if np.any(lam < 0):
            raise ConstraintError("lam must be nonnegative")
        object.__setattr__(self, "lam", lam)

    def check(self, d):
        _check_feasible(self.lam, d)

    def matrix(self, c_t):
        return assemble_precoder(c_t, self.lam)


@dataclass(frozen=True)
class PGOptions:
    max_iter: int = 500
    step0: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    grad_tol: float = 1e-8
    max_backtracks: int = 60
    # probe step for finite-difference gradients of Monte Carlo objectives
    fd_step: float = 1e-4


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    objective: float
    gradient_norm: float
    projected: bool


@dataclass(eq=False)
class OptimResult:
    lambda_opt: np.ndarray
    objective: float
    trace: list
    converged: bool
    iterations: int
    precoder: np.ndarray = None
    std_error: float = None
    start_index: int = 0
    elapsed: float = 0.0
    info: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "lambda_opt": None if self.lambda_opt is None else np.asarray(self.lambda_opt).tolist(),
            "objective": self.objective,
            "converged": self.converged,
            "iterations": self.iterations,
            "start_index": self.start_index,
            "elapsed": self.elapsed,
            "trace": [
                {
                    "iteration": e.iteration,
                    "objective": e.objective,
                    "gradient_norm": e.gradient_norm,
                    "projected": e.projected,
                }
                for e in self.trace
            ],
        }
        if self.std_error is not None:
            out["std_error"] = self.std_error
        if self.precoder is not None:
            k = np.asarray(self.precoder)
            out["precoder"] = {"rows": k.shape[0], "cols": k.shape[1], "re": k.real.ravel().tolist(), "im": k.imag.ravel().tolist()}
        out.update(self.info)
        return out


def _spectra(c_t, c_r):
    eig = herm_eig(c_t)
    return eig, herm_eig(c_r).eigvals


def _check_feasible(lam, d):
    lam = np.asarray(lam, dtype=float)
    d = np.asarray(d, dtype=float)
    if lam.shape != d.shape:
        raise DomainError(f"lam has {lam.size} entries, expected {d.size}")
    if np.any(lam < 0):
        raise ConstraintError("lam must be nonnegative")
    bad = (lam > 0) & (d <= RANK_TOL)
    if np.any(bad):
        raise RankDeficiencyError(f"positive power on null eigenmodes {np.flatnonzero(bad).tolist()}")
    used = lam > 0
    load = float(np.sum(lam[used] / d[used])) / d.size
    if load > 1.0 + FEAS_TOL:
        raise ConstraintError(f"power constraint violated: {load:.6g} > 1")
    return load


def assemble_precoder(c_t, lam):
    """``K = U D^{-1/2} diag(lam)^{1/2}`` from the descending eigendecomposition of ``c_t``."""
    eig = herm_eig(c_t)
    lam = np.asarray(lam, dtype=float)
    _check_feasible(lam, eig.eigvals)
    scale = np.zeros_like(lam)
    used = lam > 0
    scale[used] = np.sqrt(lam[used] / eig.eigvals[used])
    return eig.eigvecs * scale


def structured_objective(lam, c_r, sigma2, corrected=True):
    """Structured surrogate in nats for powers ``lam``.

    ``sum_j log(1 + lam_j delta_t) + (1/2) p/(1-p)`` with
    ``p = sigma2^2 gamma gamma_t``; ``corrected=False`` keeps only the first sum.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ConstraintError("lam must be nonnegative")
    d_r = herm_eig(c_r).eigvals
    ih, jb, _ = largesys.diagonal_objective(lam, d_r, sigma2)
    return ih + jb if corrected else ih


class _Surrogate:
    """Diagonal surrogate with warm-started fixed points."""

    def __init__(self, d_r, sigma2, corrected=True, scale=1.0):
        self.d_r = d_r
        self.sigma2 = sigma2
        self.corrected = corrected
        self.scale = scale
        self._delta = None
        self._last = None

    def _solve(self, lam):
        fp = largesys.solve_spectral(lam, self.d_r, self.sigma2, delta0=self._delta)
        self._delta = fp.delta if fp.delta > 0 else None
        return fp

    def value(self, lam):
        # the line search evaluates the accepted point just before its gradient is needed
        key = lam.tobytes()
        if self._last is not None and self._last[0] == key:
            return self._last[1], self._last[2]
        fp = self._solve(lam)
        ih, jb, _ = largesys.diagonal_objective(lam, self.d_r, self.sigma2, fp=fp)
        f = self.scale * (ih + jb if self.corrected else ih)
        self._last = (key, f, fp)
        return f, fp

    def value_grad(self, lam):
        f, fp = self.value(lam)
        g = largesys.grad_lambda(lam, self.d_r, self.sigma2, fp=fp, corrected=self.corrected)
        return f, self.scale * g


def _ascent_direction(g, alpha, d, active):
    """Gradient with its outward normal component removed on the boundary.

    The constraint surface is ``sum_j alpha_j^2 / d_j = t`` with normal
    ``alpha / d``. Stepping along this direction and then rescaling radially
    is first-order ascent; rescaling a raw gradient step is not, because the
    radial direction differs from the normal when the ``d_j`` differ.
    """
    g = np.where(active, g, 0.0)
    load = float(np.sum(alpha[active] ** 2 / d[active])) / d.size
    if load >= 1.0 - 1e-12:
        n = np.where(active, alpha / np.where(active, d, 1.0), 0.0)
        nn = float(n @ n)
        gn = float(g @ n)
        if nn > 0 and gn > 0:
            g = g - gn / nn * n
    return g


def _radial_project(alpha, d, active):
    load = float(np.sum(alpha[active] ** 2 / d[active])) / d.size
    if load > 1.0:
        return alpha / math.sqrt(load), True
    return alpha, False


def _ascent(oracle, alpha0, d, active, options, resample=False):
    """Projected gradient ascent in ``alpha`` with Armijo backtracking.

    ``oracle(it)`` returns ``(fun_grad, fun)`` for iteration ``it``;
    ``fun_grad(alpha) -> (value, grad)``. With ``resample=True`` the oracle is
    queried anew each iteration (stochastic objectives) and the current point
    is re-evaluated; otherwise the accepted trial value is carried forward so
    the objective trace never decreases.
    """
    alpha = np.where(active, alpha0, 0.0)
    fun_grad, fun = oracle(0)
    f, g = fun_grad(alpha)
    trace = []
    step = options.step0
    converged = False
    projected = False
    it = 0
    for it in range(options.max_iter + 1):
        if resample and it > 0:
            fun_grad, fun = oracle(it)
            f, g = fun_grad(alpha)
        p = _ascent_direction(g, alpha, d, active)
        pg = float(np.linalg.norm(p))
        trace.append(TraceEntry(it, float(f), pg, projected))
        if pg < options.grad_tol:
            converged = True
            break
        if it == options.max_iter:
            break
        accepted = False
        for _ in range(options.max_backtracks):
            cand, proj = _radial_project(np.where(active, alpha + step * p, 0.0), d, active)
            fc = fun(cand)
            gain = float(g @ (cand - alpha))
            if fc >= f + options.armijo * max(gain, 0.0) and fc >= f:
                accepted = True
                break
            step *= options.backtrack
        if not accepted:
            if resample:
                continue
            # no ascent at rounding level: stationary for practical purposes
            converged = pg < math.sqrt(options.grad_tol)
            break
        alpha, projected = cand, proj
        if not resample:
            f, g = fc, fun_grad(alpha)[1]
        step = min(2.0 * step, options.step0 * 1e3)
    return alpha, f, trace, converged, it


def projected_gradient(lam0, c_t, c_r, sigma2, options=None, corrected=True, units="nats"):
    """Maximize the structured surrogate from ``lam0`` by projected gradient ascent.

    Iterates on ``alpha = sqrt(lam)``; after each step, a point outside the
    ellipsoid ``sum_j alpha_j^2 / d_j <= t`` is rescaled radially onto it.
    ``corrected=False`` maximizes ``i_hat`` instead of ``i_bar``. With
    ``units="bits"`` the objective and gradient are divided by ``log 2``.
    """
    options = options or PGOptions()
    start = time.perf_counter()
    eig, d_r = _spectra(as_cmatrix(c_t, square=True), as_cmatrix(c_r, square=True))
    d = eig.eigvals
    lam0 = np.asarray(lam0, dtype=float)
    _check_feasible(lam0, d)
    active = d > RANK_TOL
    scale = 1.0 / LOG2 if units == "bits" else 1.0
    sur = _Surrogate(d_r, sigma2, corrected=corrected, scale=scale)

    def fun(alpha):
        return sur.value(alpha**2)[0]

    def fun_grad(alpha):
        f, g_lam = sur.value_grad(alpha**2)
        return f, 2.0 * alpha * g_lam

    alpha, f, trace, converged, it = _ascent(lambda it: (fun_grad, fun), np.sqrt(lam0), d, active, options)
    lam = alpha**2
    return OptimResult(
        lambda_opt=lam,
        objective=float(f),
        trace=trace,
        converged=converged,
        iterations=it,
        precoder=assemble_precoder(c_t, lam),
        elapsed=time.perf_counter() - start,
    )


def _on_modes(d, mask):
    """Equal power on the modes in ``mask`` (others zero), on the constraint boundary."""
    lam = np.zeros_like(d)
    lam[mask] = d.size / np.sum(1.0 / d[mask])
    return lam


def default_starts(d, n_random=0, seed=0):
    """Start points: matched ``lam = d``, equal power on all modes, equal power on
    the ``s`` strongest modes for ``s = 1..t-1``, then ``n_random`` random
    boundary points."""
    d = np.asarray(d, dtype=float)
    active = d > RANK_TOL
    idx = np.flatnonzero(active)
    starts = [np.where(active, d, 0.0), _on_modes(d, active)]
    for s in range(1, idx.size):
        mask = np.zeros_like(active)
        mask[idx[:s]] = True
        starts.append(_on_modes(d, mask))
    rng = rng_stream(seed, 0)
    for _ in range(n_random):
        share = rng.dirichlet(np.ones(idx.size))
        lam = np.zeros_like(d)
        lam[idx] = share * d.size * d[idx]
        starts.append(lam)
    return starts


def multistart(c_t, c_r, sigma2, options=None, n_random=0, seed=0, corrected=True, starts=None):
    """Best projected-gradient result over several starts.

    Ties go to the lowest start index.
    """
    d = herm_eig(c_t).eigvals
    if starts is None:
        starts = default_starts(d, n_random=n_random, seed=seed)
    best = None
    t0 = time.perf_counter()
    for i, lam0 in enumerate(starts):
        res = projected_gradient(lam0, c_t, c_r, sigma2, options, corrected=corrected)
        res.start_index = i
        if best is None or res.objective > best.objective:
            best = res
    best.elapsed = time.perf_counter() - t0
    return best


def antenna_selection_values(t, sigma2):
    """Closed-form i.i.d. value of ``i_hat`` with ``s`` equal-power antennas, ``s = 1..t``."""
    if t < 1 or not sigma2 > 0:
        raise DomainError("need t >= 1 and sigma2 > 0")
    s = np.arange(1, t + 1, dtype=float)
    a = t / s - 1.0 + sigma2
    return s * np.log((a + np.sqrt(a * a + 4.0 * sigma2)) / (2.0 * sigma2))


def antenna_selection_iid(t, sigma2):
    """Optimal number of active antennas and its value (nats); ties favor larger ``s``."""
    vals = antenna_selection_values(t, sigma2)
    best = vals.max()
    s_opt = int(np.flatnonzero(vals >= best - 1e-12 * abs(best))[-1]) + 1
    return s_opt, float(vals[s_opt - 1])


def _true_emi_problem(model, structured):
    """Parameterization ``theta -> K`` and its feasible-set data for the MC optimizer."""
    t = model.t
    if structured:
        eig = herm_eig(model.c_t)
        d = eig.eigvals
        active = d > RANK_TOL
        inv_root = np.where(active, 1.0 / np.sqrt(np.where(active, d, 1.0)), 0.0)
        base = eig.eigvecs * inv_root

        def to_k(alpha):
            return base * alpha

        theta0 = np.where(active, np.sqrt(np.where(active, d, 0.0)), 0.0)
        return to_k, theta0, d, active

    def to_k(theta):
        return (theta[: t * t] + 1j * theta[t * t :]).reshape(t, t)

    theta0 = np.concatenate([np.eye(t).ravel(), np.zeros(t * t)])
    # power(K) = sum theta^2 / t; with 2t^2 parameters the load sum(theta^2/d)/(2t^2)
    # matches it for d = 1/(2t)
    d = np.full(2 * t * t, 1.0 / (2 * t))
    return to_k, theta0, d, np.ones(2 * t * t, dtype=bool)


def optimize_true_emi(model, structured=True, n_mc=1000, seed=0, options=None, theta0=None):
    """Stochastic projected gradient on the Monte Carlo MMSE mutual information.

    At iteration ``k`` a fresh batch of ``n_mc`` Gaussian matrices is drawn
    (realization streams ``k*n_mc .. (k+1)*n_mc - 1``) and reused for every
    finite-difference probe and line-search trial of that iteration. The
    structured variant moves ``alpha`` with ``K = U D^{-1/2} diag(alpha)``, the
    general one all real and imaginary parts of ``K``. The returned objective
    is a fresh estimate on realizations disjoint from the training draws.
    """
    options = options or PGOptions(max_iter=100, grad_tol=1e-6)
    start = time.perf_counter()
    t, r = model.t, model.r
    to_k, th0, d, active = _true_emi_problem(model, structured)
    theta = th0 if theta0 is None else np.asarray(theta0, dtype=float)
    theta, _ = _radial_project(theta, d, active)
    h = options.fd_step
    noisy = []

    def oracle(it):
        x = draw_gaussians(r, t, n_mc, seed, start=it * n_mc)

        def per_real(th):
            return emi_from_gaussians(x, model, to_k(th))

        def fun(th):
            return float(np.mean(per_real(th)))

        def fun_grad(th):
            base = per_real(th)
            grads = np.zeros((n_mc, th.size))
            for j in np.flatnonzero(active):
                e = np.zeros_like(th)
                e[j] = h
                # probes may leave the feasible set by h; the sample objective is defined there
                grads[:, j] = (per_real(th + e) - per_real(th - e)) / (2.0 * h)
            g = grads.mean(axis=0)
            g_se = grads.std(axis=0, ddof=1) / math.sqrt(n_mc)
            if not noisy and np.linalg.norm(g_se) > np.linalg.norm(g):
                warnings.warn("Monte Carlo gradient noise exceeds the gradient norm", RuntimeWarning, stacklevel=3)
                noisy.append(it)
            return float(np.mean(base)), g

        return fun_grad, fun

    theta, _, trace, converged, it = _ascent(oracle, theta, d, active, options, resample=True)
    k = to_k(theta)
    if power(k) > 1.0:
        k = k / math.sqrt(power(k))
    # evaluation streams are disjoint from the (max_iter+1)*n_mc training streams
    final = emi_estimate(model, k, n_mc, seed, start=(options.max_iter + 1) * n_mc)
    lam = np.where(active, theta**2, 0.0) if structured else None
    return OptimResult(
        lambda_opt=lam,
        objective=final.mean,
        std_error=final.std_error,
        trace=trace,
        converged=converged,
        iterations=it,
        precoder=k,
        elapsed=time.perf_counter() - start,
        info={"noisy_gradient_iteration": noisy[0] if noisy else None},
    )


def rotation_dominance_check(k, c_t, c_r, sigma2):
    """Compare a precoder ``K`` with its rotation ``K_d = K W``.

    ``W`` diagonalizes ``K^H C_T K``. Returns
    ``(i_hat(K), i_hat(K_d), j_bar(K), j_bar(K_d))``.
    """
    k = GeneralPrecoder(k).K
    c_t = as_cmatrix(c_t, square=True)
    c_eff = k.conj().T @ c_t @ k
    w = herm_eig(c_eff).eigvecs
    k_d = k @ w
    c_eff_d = k_d.conj().T @ c_t @ k_d
    fp = largesys.solve_fixed_point(c_eff, c_r, sigma2)
    fp_d = largesys.solve_fixed_point(np.diag(np.diag(c_eff_d).real), c_r, sigma2)
    return (
        largesys.i_hat(fp)[0],
        largesys.i_hat(fp_d)[0],
        largesys.j_bar(fp),
        largesys.j_bar(fp_d),
    )


# names used by the published interface
problem1_objective = structured_objective
prop3_dominance_check = rotation_dominance_check
