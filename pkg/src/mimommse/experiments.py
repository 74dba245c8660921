"""Experiment configurations, figure reproductions, timing and the self-test.

Figures are written as CSV (one row per grid point) preceded by a comment
line carrying the configuration hash and seed. Every quantity is computed
in nats; figure files carry a ``_bits`` twin for each information column.
"""

import csv
import hashlib
import io
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import largesys
from .channel import ChannelModel, ClusterSpec, clustered_correlation, matrix_from_json, normalize_trace
from .matcore import herm_eig, rng_stream
from .mcsim import emi_estimate
from .optimize import (
    PGOptions,
    antenna_selection_iid,
    antenna_selection_values,
    assemble_precoder,
    default_starts,
    multistart,
    optimize_true_emi,
    structured_objective,
    projected_gradient,
    rotation_dominance_check,
)

__all__ = [
    "SCHEMES",
    "ExperimentConfig",
    "sigma2_from_snr_db",
    "figure_config",
    "run_figure",
    "run_scheme",
    "run_timing",
    "selftest",
    "FAULTS",
]

LOG2 = math.log(2.0)
SCHEMES = ("none", "ibar_structured", "ihat_structured", "true_structured", "true_general", "antenna_selection")


def sigma2_from_snr_db(snr_db):
    """Noise variance for unit signal and channel power."""
    return 10.0 ** (-float(snr_db) / 10.0)


def _correlation(spec, n):
    """Correlation matrix from a config entry: ``"iid"``, a cluster dict or a matrix dict."""
    if spec is None or spec == "iid":
        return np.eye(n, dtype=np.complex128)
    if isinstance(spec, ClusterSpec):
        return clustered_correlation(spec)
    if "re" in spec:
        m = matrix_from_json(spec)
        if m.shape != (n, n):
            raise ValueError(f"correlation matrix must be {n}x{n}, got {m.shape}")
        return normalize_trace(m)
    return clustered_correlation(ClusterSpec(float(spec["mean_angle"]), float(spec["angle_std"]), n))


@dataclass(frozen=True)
class ExperimentConfig:
    t: int = 4
    r: int = 4
    snr_grid_db: tuple = (10.0,)
    correlation: dict = field(
        default_factory=lambda: {
            "transmit": {"mean_angle": math.pi / 4, "angle_std": 0.5},
            "receive": {"mean_angle": math.pi / 12, "angle_std": 0.5},
        }
    )
    n_mc: int = 1000
    seed: int = 42
    scheme: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        if not self.snr_grid_db:
            raise ValueError("snr_grid_db must not be empty")
        if self.n_mc < 2:
            raise ValueError("n_mc must be at least 2")
        if self.t < 1 or self.r < 1:
            raise ValueError("t and r must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_dict(self):
        d = asdict(self)
        d["snr_grid_db"] = list(self.snr_grid_db)
        return d

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def model(self, snr_db):
        corr = self.correlation or {}
        c_t = _correlation(corr.get("transmit"), self.t)
        c_r = _correlation(corr.get("receive"), self.r)
        return ChannelModel(c_t, c_r, sigma2_from_snr_db(snr_db))


_FIG1 = dict(
    t=4,
    r=4,
    snr_grid_db=tuple(float(s) for s in range(0, 21, 2)),
    correlation={
        "transmit": {"mean_angle": math.pi / 4, "angle_std": 0.5},
        "receive": {"mean_angle": math.pi / 12, "angle_std": 0.5},
    },
    n_mc=1000,
)
_FIG2 = dict(
    t=4,
    r=4,
    snr_grid_db=(0.0, 6.0),
    correlation={
        "transmit": {"mean_angle": math.pi / 4, "angle_std": 0.5},
        "receive": {"mean_angle": math.pi / 12, "angle_std": 0.4},
    },
    n_mc=1000,
)
_FIG3 = dict(t=8, r=8, snr_grid_db=tuple(float(s) for s in range(0, 21, 2)), correlation={"transmit": "iid", "receive": "iid"}, n_mc=1000)
_FIG4 = dict(t=8, r=8, snr_grid_db=(15.0,), correlation={"transmit": "iid", "receive": "iid"}, n_mc=1000)
_FIG5 = dict(
    t=4,
    r=4,
    snr_grid_db=(0.0, 5.0, 10.0, 15.0, 20.0),
    correlation={
        "transmit": {"mean_angle": math.pi / 4, "angle_std": 0.5},
        "receive": {"mean_angle": math.pi / 12, "angle_std": 0.4},
    },
    n_mc=1000,
)
FIGURE_DEFAULTS = {1: _FIG1, 2: _FIG2, 3: _FIG3, 4: _FIG4, 5: _FIG5}

# sweep of the squared transmit angular spread for figure 2
FIG2_SPREAD2 = tuple(round(0.05 * k, 2) for k in range(1, 21))


def figure_config(fig_id, **overrides):
    if fig_id not in FIGURE_DEFAULTS:
        raise ValueError(f"figure id must be one of {sorted(FIGURE_DEFAULTS)}, got {fig_id}")
    cfg = ExperimentConfig(**FIGURE_DEFAULTS[fig_id])
    return cfg.with_overrides(**overrides)


def _approx(model, k=None):
    c_eff = model.c_t if k is None else k.conj().T @ model.c_t @ k
    return largesys.i_bar(largesys.solve_fixed_point(c_eff, model.c_r, model.sigma2))


def _s_uniform(t, s):
    lam = np.zeros(t)
    lam[:s] = t / s
    return lam


def _fig1(cfg):
    rows = []
    for snr in cfg.snr_grid_db:
        m = cfg.model(snr)
        mc = emi_estimate(m, None, cfg.n_mc, cfg.seed)
        rep = _approx(m)
        rows.append(dict(snr_db=snr, i_mc=mc.mean, i_mc_stderr=mc.std_error, i_hat=rep.i_hat, i_bar=rep.i_bar))
    return rows


def _fig2(cfg):
    rows = []
    corr = dict(cfg.correlation)
    tx = dict(corr["transmit"])
    for spread2 in FIG2_SPREAD2:
        tx["angle_std"] = math.sqrt(spread2)
        sub = replace(cfg, correlation={"transmit": dict(tx), "receive": corr["receive"]})
        for snr in cfg.snr_grid_db:
            m = sub.model(snr)
            mc = emi_estimate(m, None, cfg.n_mc, cfg.seed)
            rep = _approx(m)
            rows.append(
                dict(
                    sigma_phi_t2=spread2,
                    snr_db=snr,
                    i_mc=mc.mean,
                    i_mc_stderr=mc.std_error,
                    i_hat=rep.i_hat,
                    i_bar=rep.i_bar,
                    rel_err_hat=abs(mc.mean - rep.i_hat) / mc.mean,
                    rel_err_bar=abs(mc.mean - rep.i_bar) / mc.mean,
                )
            )
    return rows


def _selection_row(cfg, m, s):
    k = np.diag(np.sqrt(_s_uniform(cfg.t, s))).astype(np.complex128)
    mc = emi_estimate(m, k, cfg.n_mc, cfg.seed)
    rep = _approx(m, k)
    return mc, rep


def _fig3(cfg):
    rows = []
    for snr in cfg.snr_grid_db:
        m = cfg.model(snr)
        closed = antenna_selection_values(cfg.t, m.sigma2)
        row = dict(snr_db=snr)
        for s in (6, 8):
            if s > cfg.t:
                continue
            mc, rep = _selection_row(cfg, m, s)
            row[f"i_hat_s{s}"] = float(closed[s - 1])
            row[f"i_bar_s{s}"] = rep.i_bar
            row[f"i_mc_s{s}"] = mc.mean
            row[f"i_mc_s{s}_stderr"] = mc.std_error
        rows.append(row)
    return rows


def _fig4(cfg):
    rows = []
    snr = cfg.snr_grid_db[0]
    m = cfg.model(snr)
    closed = antenna_selection_values(cfg.t, m.sigma2)
    for s in range(1, cfg.t + 1):
        mc, rep = _selection_row(cfg, m, s)
        rows.append(
            dict(s=s, snr_db=snr, i_hat=float(closed[s - 1]), i_bar=rep.i_bar, i_mc=mc.mean, i_mc_stderr=mc.std_error)
        )
    return rows


def run_scheme(cfg, snr_db, scheme, options=None):
    """Precoder produced by ``scheme`` at ``snr_db`` plus the optimizer result (or ``None``)."""
    m = cfg.model(snr_db)
    if scheme == "none":
        return np.eye(cfg.t, dtype=np.complex128), None
    if scheme in ("ibar_structured", "ihat_structured"):
        res = multistart(m.c_t, m.c_r, m.sigma2, options, corrected=scheme == "ibar_structured")
        return res.precoder, res
    if scheme in ("true_structured", "true_general"):
        res = optimize_true_emi(m, structured=scheme == "true_structured", n_mc=cfg.n_mc, seed=cfg.seed, options=options)
        return res.precoder, res
    if scheme == "antenna_selection":
        s, _ = antenna_selection_iid(cfg.t, m.sigma2)
        d = herm_eig(m.c_t).eigvals
        lam = default_starts(d)[1] if s == cfg.t else default_starts(d)[1 + s]
        return assemble_precoder(m.c_t, lam), None
    raise ValueError(f"unknown scheme {scheme!r}")


FIG5_SCHEMES = ("none", "ibar_structured", "ihat_structured", "true_structured", "true_general")


def _fig5(cfg, schemes=FIG5_SCHEMES, true_options=None):
    rows = []
    for snr in cfg.snr_grid_db:
        m = cfg.model(snr)
        row = dict(snr_db=snr)
        for scheme in schemes:
            opts = true_options if scheme.startswith("true") else None
            k, _ = run_scheme(cfg, snr, scheme, opts)
            # a common evaluation stream block, disjoint from any training draws
            mc = emi_estimate(m, k, cfg.n_mc, cfg.seed, start=2**40)
            row[f"{scheme}"] = mc.mean
            row[f"{scheme}_stderr"] = mc.std_error
        rows.append(row)
    return rows


_INFO_COLUMNS = ("i_mc", "i_hat", "i_bar")


def _with_bits(rows):
    out = []
    for row in rows:
        new = dict(row)
        for key, val in row.items():
            if key.endswith("stderr") or key in ("snr_db", "s", "sigma_phi_t2") or key.startswith("rel_err"):
                continue
            new[f"{key}_bits"] = val / LOG2
        out.append(new)
    return out


def _format(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def rows_to_csv(rows, cfg, fig_id):
    buf = io.StringIO()
    buf.write(f"# figure={fig_id} config_hash={cfg.config_hash()} seed={cfg.seed}\n")
    if rows:
        cols = list(rows[0].keys())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_format(row[c]) for c in cols])
    return buf.getvalue()


def run_figure(fig_id, out_path=None, cfg=None, **overrides):
    """Compute the data of figure ``fig_id`` and return it as CSV text.

    ``cfg`` replaces the figure defaults entirely; ``overrides`` patch single
    fields (for instance ``seed`` or ``n_mc``). Figure 5 also accepts
    ``schemes`` and ``true_options``.
    """
    schemes = overrides.pop("schemes", FIG5_SCHEMES)
    true_options = overrides.pop("true_options", None)
    cfg = figure_config(fig_id, **overrides) if cfg is None else cfg.with_overrides(**overrides)
    if fig_id == 5:
        rows = _fig5(cfg, schemes, true_options)
    else:
        rows = {1: _fig1, 2: _fig2, 3: _fig3, 4: _fig4}[fig_id](cfg)
    text = rows_to_csv(_with_bits(rows), cfg, fig_id)
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            fh.write(text)
    return text


TIMING_SCHEMES = ("ibar_structured", "ihat_structured", "true_structured")


def run_timing(cfg=None, schemes=TIMING_SCHEMES, options=None, snr_db=None):
    """Wall-clock seconds of one optimizer run per scheme, all from the same start.

    The surrogate schemes run one projected-gradient ascent and the Monte
    Carlo scheme one stochastic ascent, with identical options.
    """
    cfg = cfg or figure_config(5)
    options = options or PGOptions()
    snr = cfg.snr_grid_db[0] if snr_db is None else snr_db
    m = cfg.model(snr)
    d = herm_eig(m.c_t).eigvals
    out = {}
    for scheme in schemes:
        t0 = time.perf_counter()
        if scheme == "ibar_structured":
            projected_gradient(d, m.c_t, m.c_r, m.sigma2, options, corrected=True)
        elif scheme == "ihat_structured":
            projected_gradient(d, m.c_t, m.c_r, m.sigma2, options, corrected=False)
        elif scheme == "true_structured":
            optimize_true_emi(m, True, cfg.n_mc, cfg.seed, options)
        elif scheme == "true_general":
            optimize_true_emi(m, False, cfg.n_mc, cfg.seed, options)
        else:
            raise ValueError(f"scheme {scheme!r} has no timing run")
        out[scheme] = time.perf_counter() - t0
    out["hardware"] = f"{platform.machine()} {platform.processor() or 'unknown cpu'} python {platform.python_version()}"
    return out


# --------------------------------------------------------------------------
# self-test

FAULTS = ("jbar-drop-sigma4", "objective-log2")


def _random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    a = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return normalize_trace(a @ a.conj().T / rank)


def _jbar_reduced_fault(fp):
    p = fp.sigma2**2 * fp.gamma * fp.gamma_tilde
    return 0.5 * fp.gamma * fp.gamma_tilde / (1.0 - p)


def _objective_fault(lam, c_r, sigma2):
    d_r = herm_eig(c_r).eigvals
    ih, jb, _ = largesys.diagonal_objective(lam, d_r, sigma2)
    return ih / LOG2 + jb


def _check_fixed_points(rng):
    worst = 0.0
    for _ in range(25):
        t = int(rng.choice([2, 4, 8, 16]))
        r = int(rng.choice([2, 4, 8, 16]))
        s2 = float(10 ** rng.uniform(-3, 1))
        fp = largesys.solve_fixed_point(_random_psd(rng, t), _random_psd(rng, r), s2)
        worst = max(worst, fp.residual)
        if fp.stability <= 0 or fp.delta <= 0 or fp.delta_tilde <= 0:
            return False, f"invalid fixed point at t={t} r={r} sigma2={s2:.4g}"
    return worst < 1e-12, f"max residual {worst:.2e}"


def _check_gradient(rng):
    worst = 0.0
    for _ in range(10):
        t = int(rng.choice([2, 4, 8]))
        s2 = float(10 ** rng.uniform(-1.5, 0.5))
        d_r = herm_eig(_random_psd(rng, t)).eigvals
        lam = rng.uniform(0.1, 2.0, t)
        g = largesys.grad_lambda(lam, d_r, s2)
        for j in range(t):
            h = 1e-6 * max(1.0, lam[j])
            e = np.zeros(t)
            e[j] = h
            fp_ = sum(largesys.diagonal_objective(lam + e, d_r, s2)[:2])
            fm_ = sum(largesys.diagonal_objective(lam - e, d_r, s2)[:2])
            fd = (fp_ - fm_) / (2 * h)
            worst = max(worst, abs(g[j] - fd) / abs(fd))
    return worst <= 1e-5, f"max relative error {worst:.2e}"


def _check_rotation_dominance(rng):
    for _ in range(25):
        t = 4
        c_t, c_r = _random_psd(rng, t), _random_psd(rng, t)
        s2 = float(10 ** rng.uniform(-1.5, 0.5))
        k = rng.standard_normal((t, t)) + 1j * rng.standard_normal((t, t))
        k *= math.sqrt(rng.uniform(0.2, 1.0) * t / np.sum(np.abs(k) ** 2))
        ih, ihd, jb, jbd = rotation_dominance_check(k, c_t, c_r, s2)
        if ih > ihd + 1e-10 or jb > jbd + 1e-10:
            return False, f"violation: i_hat {ih:.6g}>{ihd:.6g} or j_bar {jb:.6g}>{jbd:.6g}"
    return True, "no violations"


def _check_jbar_dual_path(rng, reduced):
    worst = 0.0
    for _ in range(10):
        t = 4
        s2 = float(10 ** rng.uniform(-1.5, 0.5))
        lam = rng.uniform(0.0, 2.0, t)
        fp = largesys.solve_fixed_point(np.diag(lam), _random_psd(rng, t), s2)
        worst = max(worst, abs(largesys.j_bar(fp) - reduced(fp)))
    return worst <= 1e-12, f"max difference {worst:.2e}"


def _check_cross_module(rng, objective):
    worst = 0.0
    for _ in range(10):
        t = 4
        c_t, c_r = _random_psd(rng, t), _random_psd(rng, t)
        s2 = float(10 ** rng.uniform(-1.5, 0.5))
        d = herm_eig(c_t).eigvals
        share = rng.dirichlet(np.ones(t)) * rng.uniform(0.3, 1.0)
        lam = share * t * d
        k = assemble_precoder(c_t, lam)
        ref = largesys.i_bar(largesys.solve_fixed_point(k.conj().T @ c_t @ k, c_r, s2)).i_bar
        worst = max(worst, abs(objective(lam, c_r, s2) - ref))
    return worst <= 1e-10, f"max difference {worst:.2e}"


def _check_antenna_selection(rng):
    for t in (2, 3, 4, 8):
        for snr in (-5.0, 5.0, 15.0, 25.0):
            s2 = sigma2_from_snr_db(snr)
            s_opt, val = antenna_selection_iid(t, s2)
            brute = [structured_objective(_s_uniform(t, s), np.eye(t), s2, corrected=False) for s in range(1, t + 1)]
            best = int(np.argmax(brute)) + 1
            if abs(brute[s_opt - 1] - val) > 1e-10 or abs(max(brute) - val) > 1e-10:
                return False, f"t={t} snr={snr}: closed form {s_opt}/{val:.10g} vs brute force {best}/{max(brute):.10g}"
    return True, "closed form matches brute force"


def selftest(faults=(), seed=20240601):
    """Run the property suite; returns a list of ``(name, passed, detail)``.

    ``faults`` injects deliberate implementation errors (see ``FAULTS``) so
    that the suite can be shown to catch them.
    """
    unknown = set(faults) - set(FAULTS)
    if unknown:
        raise ValueError(f"unknown faults {sorted(unknown)}")
    reduced = _jbar_reduced_fault if "jbar-drop-sigma4" in faults else largesys.j_bar_reduced
    objective = _objective_fault if "objective-log2" in faults else structured_objective
    checks = [
        ("fixed-point residuals", lambda rng: _check_fixed_points(rng)),
        ("gradient vs finite differences", lambda rng: _check_gradient(rng)),
        ("precoder rotation dominance", lambda rng: _check_rotation_dominance(rng)),
        ("correction term dual path", lambda rng: _check_jbar_dual_path(rng, reduced)),
        ("structured objective cross-module identity", lambda rng: _check_cross_module(rng, objective)),
        ("antenna selection closed form", lambda rng: _check_antenna_selection(rng)),
    ]
    report = []
    for i, (name, fn) in enumerate(checks):
        rng = rng_stream(seed, i)
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crash is a failure, reported with its cause
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        report.append((name, bool(ok), f"{detail} (seed={seed}, stream={i})"))
    return report
