"""Seeded Monte Carlo estimates of the true MMSE quantities.

Realization ``i`` of a run with seed ``s`` always draws its Gaussian matrix
from stream ``(s, i)``, so results do not depend on how realizations are
split across workers. Per-realization values are reduced with a fixed
pairwise tree, which keeps serial and parallel runs bit-identical.
"""

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .channel import effective_transmit_correlation, sample_channels
from .errors import NumericalError
from .matcore import batched_inverse_diag, hermitian_sqrt, rng_stream, sample_circular_gaussian

__all__ = [
    "McEstimate",
    "pairwise_sum",
    "draw_gaussians",
    "sinr_samples",
    "sinr_from_channels",
    "emi_samples",
    "emi_estimate",
    "emi_from_gaussians",
    "quadform_samples",
    "quadform_variance_estimate",
    "write_samples_csv",
]

DEFAULT_N = 1000
SINR_SLACK = 1e-10


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_realizations: int
    seed: int

    def to_json(self):
        d = asdict(self)
        return json.dumps(
            {"mean": d["mean"], "std_error": d["std_error"], "n": d["n_realizations"], "seed": d["seed"]}
        )


def pairwise_sum(x):
    """Sum along axis 0 by a balanced binary tree over the leading index."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n == 0:
        return np.zeros(x.shape[1:])
    while n > 1:
        half = n // 2
        head = x[: 2 * half : 2] + x[1 : 2 * half : 2]
        x = np.concatenate([head, x[2 * half :]]) if n % 2 else head
        n = x.shape[0]
    return x[0]


def _estimate(values, seed):
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n < 2:
        raise ValueError("need at least two realizations")
    mean = float(pairwise_sum(values)) / n
    var = float(pairwise_sum((values - mean) ** 2)) / (n - 1)
    return McEstimate(mean=mean, std_error=math.sqrt(var / n), n_realizations=n, seed=int(seed))


def _chunks(n, workers):
    bounds = np.linspace(0, n, max(1, workers) + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _map_chunks(fn, n, workers):
    """Run ``fn(start, stop)`` over contiguous chunks and concatenate in order."""
    chunks = _chunks(n, workers)
    if workers <= 1 or len(chunks) == 1:
        parts = [fn(a, b) for a, b in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), chunks))
    return np.concatenate(parts, axis=0)


def _draw_range(rows, cols, seed, start, stop):
    out = np.empty((stop - start, rows, cols), dtype=np.complex128)
    for i in range(start, stop):
        out[i - start] = sample_circular_gaussian(rows, cols, rng_stream(seed, i))
    return out


def draw_gaussians(rows, cols, n, seed, start=0, workers=1):
    """Stack of ``n`` CN(0,1) matrices, realization ``i`` from stream ``(seed, start + i)``."""
    return _map_chunks(lambda a, b: _draw_range(rows, cols, seed, start + a, start + b), n, workers)


def sinr_from_channels(h, k, sigma2):
    """Per-stream MMSE SINRs for a stack of channels ``h`` and precoder ``k``.

    ``beta_j = 1 / (sigma2 [Q_T]_jj) - 1`` with
    ``Q_T = (K^H H^H H K + sigma2 I)^{-1}``; the diagonal of ``Q_T`` comes from a
    batched Cholesky factorization.
    """
    hk = h @ k
    gram = np.conj(np.swapaxes(hk, -1, -2)) @ hk
    gram = gram + sigma2 * np.eye(k.shape[1])
    q_diag = batched_inverse_diag(gram)
    beta = 1.0 / (sigma2 * q_diag) - 1.0
    worst = beta.min() if beta.size else 0.0
    if worst < -SINR_SLACK:
        raise NumericalError(f"negative SINR {worst:.3e} beyond rounding slack")
    return np.clip(beta, 0.0, None), q_diag


def _check_precoder(model, k):
    k = np.asarray(k, dtype=np.complex128)
    # raises on shape or power-constraint violation
    effective_transmit_correlation(model, k)
    return k


def sinr_samples(model, k, n=DEFAULT_N, seed=0, workers=1):
    """``(n, t)`` array of MMSE SINRs over ``n`` seeded channel realizations."""
    k = _check_precoder(model, k)

    def block(a, b):
        h = sample_channels(model, b - a, seed, start=a)
        return sinr_from_channels(h, k, model.sigma2)[0]

    return _map_chunks(block, n, workers)


def emi_samples(model, k, n=DEFAULT_N, seed=0, workers=1, start=0):
    """Per-realization mutual information, computed two ways.

    Returns ``(via_sinr, via_resolvent)``: ``sum_j log(1 + beta_j)`` and
    ``-sum_j log(sigma2 [Q_T]_jj)``.
    """
    k = _check_precoder(model, k)

    def block(a, b):
        h = sample_channels(model, b - a, seed, start=start + a)
        beta, q_diag = sinr_from_channels(h, k, model.sigma2)
        return np.stack(
            [np.sum(np.log1p(beta), axis=1), -np.sum(np.log(model.sigma2 * q_diag), axis=1)], axis=1
        )

    both = _map_chunks(block, n, workers)
    return both[:, 0], both[:, 1]


def emi_estimate(model, k=None, n=DEFAULT_N, seed=0, workers=1, start=0):
    """Ergodic MMSE mutual information (nats) with its standard error.

    ``k=None`` means no precoding. ``start`` offsets the realization streams.
    """
    if k is None:
        k = np.eye(model.t)
    values, _ = emi_samples(model, k, n, seed, workers, start)
    return _estimate(values, seed)


def emi_from_gaussians(x, model, k):
    """Per-realization mutual information from pre-drawn ``(n, r, t)`` Gaussians.

    Used by optimizers that reuse the same draws across many precoder
    probes (common random numbers).
    """
    root_t = hermitian_sqrt(model.c_t)
    root_r = hermitian_sqrt(model.c_r)
    h = root_r @ x @ root_t / math.sqrt(model.t)
    beta, _ = sinr_from_channels(h, np.asarray(k, dtype=np.complex128), model.sigma2)
    return np.sum(np.log1p(beta), axis=1)


def quadform_samples(d, d_r, u, sigma2, n=DEFAULT_N, seed=0, workers=1):
    """Samples of ``u Q u^H`` with ``Q = (Y Y^H + sigma2 I)^{-1}``.

    ``Y = D^{1/2} X D_r^{1/2} / sqrt(t)`` is the ``t x r`` channel expressed in
    the eigenbases of the two correlations.
    """
    d = np.clip(np.asarray(d, dtype=float), 0.0, None)
    d_r = np.clip(np.asarray(d_r, dtype=float), 0.0, None)
    u = np.asarray(u, dtype=np.complex128)
    t, r = d.size, d_r.size
    scale = np.sqrt(d)[:, None] * np.sqrt(d_r)[None, :] / math.sqrt(t)

    def block(a, b):
        y = _draw_range(t, r, seed, a, b) * scale
        a_mat = y @ np.conj(np.swapaxes(y, -1, -2)) + sigma2 * np.eye(t)
        rhs = np.broadcast_to(u.conj()[:, None], (b - a, t, 1))
        z = np.linalg.solve(a_mat, rhs)[..., 0]
        return np.real(z @ u)

    return _map_chunks(block, n, workers)


def quadform_variance_estimate(d, d_r, u, sigma2, n=DEFAULT_N, seed=0, workers=1):
    """Sample variance of ``u Q u^H``; ``std_error`` is the delta-method error of the variance."""
    x = quadform_samples(d, d_r, u, sigma2, n, seed, workers)
    m = x.shape[0]
    mean = float(pairwise_sum(x)) / m
    dev2 = (x - mean) ** 2
    var = float(pairwise_sum(dev2)) / (m - 1)
    fourth = float(pairwise_sum(dev2**2)) / m
    se = math.sqrt(max(fourth - var**2, 0.0) / m)
    return McEstimate(mean=var, std_error=se, n_realizations=m, seed=int(seed))


def write_samples_csv(path, samples, header=None):
    """One row per realization."""
    samples = np.atleast_2d(np.asarray(samples))
    if samples.shape[0] == 1 and samples.shape[1] > 1 and header is None:
        samples = samples.T
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(header)
        for row in samples:
            w.writerow([repr(float(v)) for v in row])
