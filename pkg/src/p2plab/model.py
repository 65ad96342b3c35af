"""Analytical speedup model for restructured near-field data.

Speedups are always base time over restructured time, so values above 1 mean
the restructured (redundant) layout is faster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .cachesim import FITS, SPILLS, locality_speedup

COMPONENTS = ("collect", "transfer", "compute", "update")
PRINTED, COLUMN = "printed", "column"


def _check_share(share: float):
    if not (0.0 <= share <= 1.0) or math.isnan(share):
        raise ValueError(f"share must lie in [0, 1], got {share}")


def _check_positive(name: str, x: float):
    if not (x > 0) or not math.isfinite(x):
        raise ValueError(f"{name} must be positive and finite, got {x}")


def composite_speedup(share: float, x: float) -> float:
    """Speedup of a whole when a part holding ``share`` of its time runs ``x`` times faster."""
    _check_share(share)
    _check_positive("x", x)
    return 1.0 / (share / x + (1.0 - share))


def total_speedup(share_p2p: float, x_p2p: float) -> float:
    return composite_speedup(share_p2p, x_p2p)


def normalize_shares(shares) -> np.ndarray:
    s = np.asarray(shares, dtype=float)
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError(f"shares must be finite and >= 0, got {s.tolist()}")
    tot = s.sum()
    if tot <= 0:
        raise ValueError("shares sum to zero")
    return s / tot


def p2p_speedup(shares, xs) -> float:
    """Weighted harmonic mean of component speedups; shares must sum to 1 (within 1e-6)."""
    s = np.asarray(shares, dtype=float)
    x = np.asarray(xs, dtype=float)
    if s.shape != x.shape:
        raise ValueError("shares and speedups differ in length")
    if np.any(s < 0):
        raise ValueError(f"negative share in {s.tolist()}")
    if abs(s.sum() - 1.0) > 1e-6:
        raise ValueError(f"shares sum to {s.sum():.9g}, not 1")
    for xi in x:
        _check_positive("component speedup", xi)
    s = s / s.sum()
    return float(1.0 / np.sum(s / x))


def memop_speedup(complexity_base, complexity_rest, v_base, v_rest) -> float:
    for name, v in (("complexity_base", complexity_base), ("complexity_rest", complexity_rest),
                    ("v_base", v_base), ("v_rest", v_rest)):
        _check_positive(name, v)
    return (complexity_base / complexity_rest) * (v_base / v_rest)


def transfer_speedup(v_base, v_rest) -> float:
    _check_positive("v_base", v_base)
    _check_positive("v_rest", v_rest)
    return v_base / v_rest


def compute_speedup(x_complexity_kernel=1.0, x_locality=1.0, x_launch=1.0) -> float:
    for name, v in (("x_complexity_kernel", x_complexity_kernel),
                    ("x_locality", x_locality), ("x_launch", x_launch)):
        _check_positive(name, v)
    return x_complexity_kernel * x_locality * x_launch


def dbim_transfer_speedup(N, t) -> float:
    _check_positive("N", N)
    _check_positive("t", t)
    return 1.0 / (1.0 + 6.0 * t * t / N)


def dbim_compute_speedup(N, t, rf: int = 2, variant: str = PRINTED) -> float:
    """Compute-phase factor for the pattern-table layout.

    ``printed``: the closed form 1 + 288t^2 / (32N + 288t^2 + 9N/t).
    ``column``: ratio of the restructured and base cost sums,
    (32N + rf*288t^2 + 9Nt^2) / (32N + 288t^2 + 9Nt^2).
    """
    _check_positive("N", N)
    _check_positive("t", t)
    t2 = float(t) * t
    if variant == PRINTED:
        return 1.0 + 288.0 * t2 / (32.0 * N + 288.0 * t2 + 9.0 * N / t)
    if variant == COLUMN:
        if rf < 1:
            raise ValueError(f"rf must be >= 1, got {rf}")
        return 1.0 + (rf - 1) * 288.0 * t2 / (32.0 * N + 288.0 * t2 + 9.0 * N * t2)
    raise ValueError(f"unknown variant {variant!r}")


def local_share_adjust(x_local: float, share_local: float) -> float:
    """Component speedup when only the local-interaction part (``share_local``) speeds up."""
    _check_positive("x_local", x_local)
    if not (0.0 < share_local <= 1.0):
        raise ValueError(f"share_local must lie in (0, 1], got {share_local}")
    return 1.0 / (share_local / x_local + (1.0 - share_local))


# ---------------------------------------------------------------- shares

@dataclass(frozen=True)
class ShareFunction:
    component: str
    a: float
    b: float

    def raw(self, t) -> float:
        return self.a + self.b * math.log(t)

    def __call__(self, t) -> tuple[float, bool]:
        """``(share, clamped)`` with the share clamped to [0, 1]."""
        if t < 1:
            raise ValueError(f"t must be >= 1, got {t}")
        v = self.raw(t)
        c = min(1.0, max(0.0, v))
        return c, c != v


SHARE_TABLES = {
    "dbim": {
        "transfer": ShareFunction("transfer", 0.5, -0.087),
        "compute": ShareFunction("compute", 0.5, 0.087),   # 1 - transfer
    },
    "photons": {
        "collect": ShareFunction("collect", 0.05, -0.005),
        "transfer": ShareFunction("transfer", 0.5, -0.087),
        "compute": ShareFunction("compute", 0.0, 0.18),
        "update": ShareFunction("update", 0.5, -0.11),
        "nearfield": ShareFunction("nearfield", 0.4, 0.14),
    },
}
_ALIASES = {"kernel": "compute", "collection": "collect", "near-field": "nearfield",
            "p2p": "nearfield"}


def share_function(profile: str, component: str, t, table=None) -> tuple[float, bool]:
    """Default time share of one component at leaf size ``t``; returns ``(share, clamped)``."""
    tab = (table or SHARE_TABLES).get(profile)
    if tab is None:
        raise ValueError(f"unknown profile {profile!r}")
    comp = _ALIASES.get(component, component)
    if comp not in tab:
        raise ValueError(f"unknown component {component!r} for profile {profile!r}")
    return tab[comp](t)


@dataclass(frozen=True)
class ShareFit:
    a: float
    b: float
    rms: float

    def function(self, component: str) -> ShareFunction:
        return ShareFunction(component, self.a, self.b)


def fit_log_share(points) -> ShareFit:
    """Least squares of share against ln t."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (t, share) points")
    t, s = pts[:, 0], pts[:, 1]
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    if np.unique(t).size < 2:
        raise ValueError("degenerate design: all t values are equal")
    A = np.stack([np.ones_like(t), np.log(t)], axis=1)
    coef, *_ = np.linalg.lstsq(A, s, rcond=None)
    res = s - A @ coef
    return ShareFit(float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res * res))))


# ---------------------------------------------------------------- trend metrics

def trend_metrics(predicted, measured) -> tuple[float, float, float]:
    """``(pearson, spearman, mean_abs_rel_err)``; relative error is taken against ``measured``."""
    p = np.asarray(predicted, dtype=float)
    m = np.asarray(measured, dtype=float)
    if p.shape != m.shape or p.ndim != 1 or p.size < 2:
        raise ValueError("need two equal-length sequences of at least two values")
    if np.ptp(p) == 0 or np.ptp(m) == 0:
        raise ValueError("correlation undefined for a constant sequence")
    if np.any(m == 0):
        raise ValueError("measured values must be non-zero for relative error")
    pearson = float(stats.pearsonr(p, m)[0])
    spearman = float(stats.spearmanr(p, m)[0])
    err = float(np.mean(np.abs(p - m) / np.abs(m)))
    return pearson, spearman, err


# ---------------------------------------------------------------- parameters

@dataclass(frozen=True)
class DbimParams:
    N: int
    L: int
    t: int
    rf: int = 2

    def __post_init__(self):
        if self.rf < 1:
            raise ValueError(f"rf must be >= 1, got {self.rf}")
        if self.N != 4 ** self.L * self.t:
            raise ValueError(f"N = {self.N} differs from 4^L * t = {4 ** self.L * self.t}")

    @classmethod
    def from_nt(cls, N: int, t: int, rf: int = 2) -> "DbimParams":
        L = round(math.log(N / t, 4))
        return cls(N, L, t, rf)


@dataclass(frozen=True)
class PhotonsParams:
    t: float
    leafs: float
    interactions: float
    E2: float
    max_E2: float
    launches_base: int = 1
    launches_rest: int = 1
    share_local: float = 1.0

    def __post_init__(self):
        for name in ("t", "leafs", "interactions", "E2", "max_E2", "launches_base", "launches_rest"):
            _check_positive(name, getattr(self, name))
        if not (0.0 < self.share_local <= 1.0):
            raise ValueError(f"share_local must lie in (0, 1], got {self.share_local}")


@dataclass(frozen=True)
class LocalityInputs:
    D_base: float
    V_base: float
    D_rest: float
    V_rest: float
    capacity: float | None
    footprint: float | None = None
    calibration: float = 1.0
    regime: str = "auto"   # or FITS / SPILLS to force one branch

    def speedup(self) -> tuple[float, str]:
        """``(calibration * X_locality, regime used)``."""
        x, regime = locality_speedup(self.D_base, self.V_base, self.D_rest, self.V_rest,
                                     self.capacity, self.footprint)
        if self.regime not in ("auto", regime):
            d = self.D_base / self.D_rest
            v = self.V_base / self.V_rest
            x, regime = (d * v, FITS) if self.regime == FITS else (v / d, SPILLS)
        return x * self.calibration, regime


# Cost expressions for the particle workload (local interactions)

def photons_costs(p: PhotonsParams, verbatim: bool = False) -> dict:
    """Base and restructured cost terms per component.

    ``verbatim`` uses an update-memory coefficient of 48000t; the default uses
    48t, matching the 48-byte-per-particle scale of the other rows.
    """
    t, L, I, E2, M = p.t, p.leafs, p.interactions, p.E2, p.max_E2
    upd = 48000.0 if verbatim else 48.0
    return {
        "collect_complexity": (3 * L * t + 2 * I, 6 * t * I),
        "collect_memory": (L * (152 * t + 24394), L * (24 * E2 * (1 + 4 * t) + 104 * t + 8376)),
        "transfer_memory": (16 * L * (3 * t + 1 + M + 3 * t * M), 8 * I * (9 * t + 1.5)),
        "kernel_complexity": (4 + 6 * t + 3 * t * t, 2 + 6 * t + 3 * t * t),
        "kernel_dispersion": (t * t + 2 * t + 2, None),
        "update_complexity": (I * (2 + 15 * t), I * (2 + 15 * t)),
        "update_memory": (8 * I + L * (376 + 104 * E2 + upd * t), 8 * I + L * (376 + 24 * E2)),
    }


def cost_ratios(p: PhotonsParams, verbatim: bool = False) -> dict:
    """Speedup of each row recomputed as base column over restructured column."""
    out = {}
    for k, (b, r) in photons_costs(p, verbatim).items():
        if r is not None:
            out[k] = b / r
    return out


# Near-field share of total runtime for the pattern-table workload, by t
DBIM_P2P_SHARE = {16: 0.13, 64: 0.48, 256: 0.82}


def dbim_p2p_share(t) -> float:
    ts = sorted(DBIM_P2P_SHARE)
    return float(np.interp(math.log(t), [math.log(k) for k in ts], [DBIM_P2P_SHARE[k] for k in ts]))


@dataclass
class SpeedupBreakdown:
    mode: str
    X_collect: float
    X_transfer: float
    X_compute: float
    X_update: float
    X_p2p: float
    X_total: float
    shares: dict
    share_p2p: float
    regime: str = ""
    flags: list = field(default_factory=list)
    factors: dict = field(default_factory=dict)

    def xs(self) -> tuple:
        return (self.X_collect, self.X_transfer, self.X_compute, self.X_update)

    def recompute_p2p(self) -> float:
        s = np.array([self.shares[c] for c in COMPONENTS])
        return float(1.0 / np.sum(s / np.array(self.xs())))

    def row(self) -> dict:
        return {"x_collect": self.X_collect, "x_transfer": self.X_transfer,
                "x_compute": self.X_compute, "x_update": self.X_update,
                "x_p2p": self.X_p2p, "x_total": self.X_total, "regime": self.regime}


def _shares(profile, t, measured, flags):
    raw = {}
    for c in COMPONENTS:
        if measured and c in measured:
            fn = measured[c]
            if isinstance(fn, ShareFunction):
                v, cl = fn(t)
            else:
                v, cl = float(fn), False
        elif c in SHARE_TABLES[profile]:
            v, cl = share_function(profile, c, t)
        else:
            v, cl = 0.0, False
        if cl:
            flags.append(f"clamped:{c}")
        raw[c] = v
    return raw


def predict_dbim(params: DbimParams, measured_shares: dict | None = None,
                 variant: str = COLUMN, share_p2p: float | None = None) -> SpeedupBreakdown:
    """Transfer and compute only; collect and update are absent for this workload."""
    flags = []
    raw = _shares("dbim", params.t, measured_shares, flags)
    raw["collect"] = raw["update"] = 0.0
    if not (measured_shares and "compute" in measured_shares):
        raw["compute"] = 1.0 - raw["transfer"]
    shares = dict(zip(COMPONENTS, normalize_shares([raw[c] for c in COMPONENTS]).tolist()))
    xt = dbim_transfer_speedup(params.N, params.t)
    xc = dbim_compute_speedup(params.N, params.t, params.rf, variant)
    if variant == PRINTED:
        flags.append("compute:printed-closed-form")
    x_p2p = float(1.0 / (shares["transfer"] / xt + shares["compute"] / xc))
    sp = dbim_p2p_share(params.t) if share_p2p is None else share_p2p
    return SpeedupBreakdown("dbim", 1.0, xt, xc, 1.0, x_p2p, total_speedup(sp, x_p2p),
                            shares, sp, "", flags,
                            {"variant": variant, "raw_shares": raw})


def predict_photons(params: PhotonsParams, locality: LocalityInputs | None = None,
                    measured_shares: dict | None = None, verbatim: bool = False,
                    x_complexity_kernel: float = 1.0, share_p2p: float | None = None,
                    ratios: dict | None = None) -> SpeedupBreakdown:
    """Four-component prediction.

    ``ratios`` may override any of ``collect``, ``transfer``, ``update`` with a
    fixed component speedup (e.g. all ones for an identity check).
    """
    flags = []
    raw = _shares("photons", params.t, measured_shares, flags)
    shares = dict(zip(COMPONENTS, normalize_shares([raw[c] for c in COMPONENTS]).tolist()))
    cr = cost_ratios(params, verbatim)
    ratios = ratios or {}
    xc_ = ratios.get("collect", cr["collect_complexity"] * cr["collect_memory"])
    xt = ratios.get("transfer", cr["transfer_memory"])
    xu = ratios.get("update", cr["update_complexity"] * cr["update_memory"])
    if locality is None:
        x_loc, regime = 1.0, ""
    else:
        x_loc, regime = locality.speedup()
    x_launch = params.launches_base / params.launches_rest
    x_local = compute_speedup(x_complexity_kernel, x_loc, x_launch)
    xk = ratios.get("compute", local_share_adjust(x_local, params.share_local))
    x_p2p = p2p_speedup([shares[c] for c in COMPONENTS], [xc_, xt, xk, xu])
    if share_p2p is None:
        share_p2p, cl = share_function("photons", "nearfield", params.t)
        if cl:
            flags.append("clamped:nearfield")
    factors = {"x_locality": x_loc, "x_launch": x_launch, "x_complexity_kernel": x_complexity_kernel,
               "x_local": x_local, "share_local": params.share_local, "raw_shares": raw,
               "cost_ratios": cr}
    return SpeedupBreakdown("photons", xc_, xt, xk, xu, x_p2p, total_speedup(share_p2p, x_p2p),
                            shares, share_p2p, regime, flags, factors)


def predict(mode: str, params, measured_shares=None, locality=None, **kw) -> SpeedupBreakdown:
    if mode == "dbim":
        return predict_dbim(params, measured_shares, **kw)
    if mode == "photons":
        return predict_photons(params, locality, measured_shares, **kw)
    raise ValueError(f"unknown mode {mode!r}")


__all__ = ["composite_speedup", "p2p_speedup", "total_speedup", "memop_speedup",
           "transfer_speedup", "compute_speedup", "dbim_transfer_speedup",
           "dbim_compute_speedup", "share_function", "local_share_adjust", "fit_log_share",
           "trend_metrics", "predict", "predict_dbim", "predict_photons", "SpeedupBreakdown",
           "ShareFunction", "ShareFit", "DbimParams", "PhotonsParams", "LocalityInputs",
           "cost_ratios", "photons_costs", "FITS", "SPILLS", "PRINTED", "COLUMN"]
