"""Fit models for relaxation, dephasing, RB decays, and reset histograms.

Times are microseconds throughout. Each fitter is a bounded nonlinear least
squares with a small multi-start ladder (decay problems are mildly
multi-modal in the time constants); results carry the parameter covariance
of the winning start, a sum-of-squares diagnostic, and string flags for the
degenerate regimes a caller should know about (unidentifiable decay,
exchange degeneracy, component collapse).
"""

from __future__ import annotations

import dataclasses
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .errors import FitError

_RATE_CAP = 1e3  # 1/us; fastest representable decay rate in the fits


# ---------------------------------------------------------------------------
# relaxation: exponential with a quasiparticle-burst factor
# ---------------------------------------------------------------------------


def relaxation_model(t, a, b, t_exp, t_qp, n_qp):
    """P_e(t) = A exp(-t/T_exp) exp{n_qp [exp(-t/T_qp) - 1]} + B."""
    t = np.asarray(t, dtype=float)
    return a * np.exp(-t / t_exp) * np.exp(n_qp * (np.exp(-t / t_qp) - 1.0)) + b


@dataclass(frozen=True)
class RelaxationFit:
    """Double-exponential relaxation parameters plus the 1/e time."""

    a: float
    b: float
    t_exp: float
    t_qp: float
    n_qp: float
    t1_eff: float  # us; nan when the curve never reaches 1/e (see flags)
    covariance: np.ndarray
    sse: float
    flags: tuple = ()

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)


def _validate_decay_input(t, values, min_points):
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if t.shape != values.shape or t.ndim != 1:
        raise ValueError("t and values must be 1-D arrays of equal length")
    if len(t) < min_points:
        raise ValueError(f"need at least {min_points} samples, got {len(t)}")
    if np.any(np.diff(t) <= 0) or t[0] < 0:
        raise ValueError("time samples must be non-negative and increasing")
    return t, values


def _multi_start_fit(model, t, values, starts, bounds):
    best = None
    for p0 in starts:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                popt, pcov = curve_fit(
                    model, t, values, p0=p0, bounds=bounds, maxfev=20000
                )
        except (RuntimeError, ValueError):
            continue
        sse = float(np.sum((model(t, *popt) - values) ** 2))
        if best is None or sse < best[2]:
            best = (popt, pcov, sse)
    if best is None:
        raise FitError("least-squares fit did not converge from any start")
    return best


def _one_over_e_bisection(a, b, t_exp, t_qp, n_qp, t_hi):
    """Bisection for the time where the fitted curve reaches a/e + b."""
    target = a / math.e + b
    if relaxation_model(t_hi, a, b, t_exp, t_qp, n_qp) > target:
        return math.nan  # never decays to 1/e inside the allowed span
    lo, hi = 0.0, float(t_hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if relaxation_model(mid, a, b, t_exp, t_qp, n_qp) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(hi, 1.0):
            break
    return 0.5 * (lo + hi)


def fit_t1_double_exponential(t_us, p_e) -> RelaxationFit:
    """Fit the relaxation model and extract the effective (1/e) T1.

    Requires >= 10 samples whose time axis spans at least two decades. The
    time constants are multi-started; the 1/e time is solved by bisection on
    the fitted curve and flagged (nan) if the curve stays above 1/e out to
    ten times the data span.
    """
    t, values = _validate_decay_input(t_us, p_e, min_points=10)
    positive = t[t > 0]
    if len(positive) == 0 or t.max() / positive.min() < 100.0:
        raise ValueError("time samples must span at least two decades")

    span = float(t.max())
    head = float(np.mean(values[:3]))
    tail = float(np.mean(values[-3:]))
    a0 = max(head - tail, 1e-3)
    starts = [
        (a0, tail, te, tq, nq)
        for te in (span / 10.0, span / 3.0, span)
        for tq in (span / 50.0, span / 12.0, span / 4.0)
        for nq in (0.2, 1.5)
    ]
    bounds = (
        [1e-12, -1.0, 1e-6, 1e-6, 0.0],
        [10.0, 1.0, 1e7, 1e7, 50.0],
    )
    popt, pcov, sse = _multi_start_fit(relaxation_model, t, values, starts, bounds)
    a, b, t_exp, t_qp, n_qp = (float(x) for x in popt)

    flags = ()
    t1_eff = _one_over_e_bisection(a, b, t_exp, t_qp, n_qp, 10.0 * span)
    if math.isnan(t1_eff):
        flags = ("one-over-e-unreached",)
    return RelaxationFit(a=a, b=b, t_exp=t_exp, t_qp=t_qp, n_qp=n_qp,
                         t1_eff=t1_eff, covariance=pcov, sse=sse, flags=flags)


# ---------------------------------------------------------------------------
# dephasing: exponential-plus-Gaussian envelope under fixed T1
# ---------------------------------------------------------------------------


def dephasing_model(t, c, d, t1_de, gamma_exp, gamma_g):
    """C exp(-t/(2 T1)) exp(-gamma_exp t - (gamma_g t)^2) + D."""
    t = np.asarray(t, dtype=float)
    return c * np.exp(-t / (2.0 * t1_de)) * np.exp(-gamma_exp * t - (gamma_g * t) ** 2) + d


@dataclass(frozen=True)
class DephasingFit:
    """Envelope fit; t_phi_g is the headline pure-dephasing time."""

    c: float
    d: float
    t1_de: float  # fixed input, echoed for the report
    t_phi_exp: float  # may be inf when the exponential term vanishes
    t_phi_g: float
    covariance: np.ndarray
    sse: float
    flags: tuple = ()

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)


def fit_dephasing_envelope(t_us, env, t1_de) -> DephasingFit:
    """Fit (C, D, exponential rate, Gaussian rate) with T1 held fixed.

    Rates are fitted (not times) so a vanishing exponential component lands
    on the closed boundary and reports t_phi_exp = inf. A correlation above
    0.95 between the two rates marks the exchange-degenerate regime.
    """
    t, values = _validate_decay_input(t_us, env, min_points=6)
    if not t1_de > 0:
        raise ValueError("t1_de must be positive")

    span = float(t.max())
    head = float(np.mean(values[:3]))
    tail = float(np.mean(values[-3:]))
    c0 = max(head - tail, 1e-3)

    def model(tt, c, d, gamma_exp, gamma_g):
        return dephasing_model(tt, c, d, t1_de, gamma_exp, gamma_g)

    starts = [
        (c0, tail, ge, gg)
        for ge in (0.0, 1.0 / span, 5.0 / span)
        for gg in (1.0 / span, 3.0 / span, 10.0 / span)
    ]
    bounds = ([1e-12, -1.0, 0.0, 1e-9], [10.0, 1.0, _RATE_CAP, _RATE_CAP])
    popt, pcov, sse = _multi_start_fit(model, t, values, starts, bounds)
    c, d, gamma_exp, gamma_g = (float(x) for x in popt)

    flags = ()
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = math.sqrt(abs(pcov[2, 2] * pcov[3, 3]))
        corr = pcov[2, 3] / denom if denom > 0 else 0.0
    if np.isfinite(corr) and abs(corr) > 0.95:
        flags = ("exchange-degeneracy",)

    t_phi_exp = math.inf if gamma_exp < 1e-12 else 1.0 / gamma_exp
    return DephasingFit(c=c, d=d, t1_de=float(t1_de), t_phi_exp=t_phi_exp,
                        t_phi_g=1.0 / gamma_g, covariance=pcov, sse=sse,
                        flags=flags)


# ---------------------------------------------------------------------------
# randomized-benchmarking decay
# ---------------------------------------------------------------------------


def rb_model(m, a, b, p):
    return a * np.power(p, np.asarray(m, dtype=float)) + b


@dataclass(frozen=True)
class RbFit:
    """A p^m + B decay; f_avg = 1 - (1 - p)/2."""

    a: float
    b: float
    p: float
    f_avg: float
    covariance: np.ndarray
    sse: float
    interleaved: dict | None = None
    flags: tuple = ()

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)


def fit_rb_decay(lengths, survivals) -> RbFit:
    """Fit the exponential Clifford decay; reject unidentifiable data.

    Sequence lengths may repeat (several random sequences per length); at
    least three distinct lengths are required. A survival trace constant at
    full amplitude is the perfect-gate limit (p = 1); constant anywhere else
    leaves p unidentifiable and raises FitError, as does a fitted decay
    amplitude too small to pin the rate.
    """
    m = np.asarray(lengths, dtype=float)
    s = np.asarray(survivals, dtype=float)
    if m.shape != s.shape or m.ndim != 1:
        raise ValueError("lengths and survivals must be 1-D arrays of equal length")
    if len(np.unique(m)) < 3:
        raise ValueError("need at least 3 distinct sequence lengths")
    if np.any(m < 1):
        raise ValueError("sequence lengths must be >= 1")

    if np.ptp(s) < 1e-9:
        if np.mean(s) > 1.0 - 1e-6:
            return RbFit(a=0.5, b=0.5, p=1.0, f_avg=1.0,
                         covariance=np.zeros((3, 3)), sse=0.0,
                         flags=("constant-survival",))
        raise FitError(
            "survival is constant below full amplitude; decay rate unidentifiable"
        )

    starts = [(max(float(np.ptp(s)), 0.01), float(s.min()), p0)
              for p0 in (0.9, 0.99, 0.999, 0.9999)]
    bounds = ([0.0, 0.0, 1e-9], [1.0, 1.0, 1.0])
    popt, pcov, sse = _multi_start_fit(rb_model, m, s, starts, bounds)
    a, b, p = (float(x) for x in popt)
    if a < 1e-6:
        raise FitError("decay amplitude vanished in the fit; p unidentifiable")
    if not 0.0 < p <= 1.0:
        raise FitError(f"fitted p = {p} outside (0, 1]")
    return RbFit(a=a, b=b, p=p, f_avg=1.0 - (1.0 - p) / 2.0, covariance=pcov,
                 sse=sse)


def interleaved_fidelity(p_ref: float, p_int: float) -> float:
    """Interleaved-RB gate fidelity 1 - (1 - p_int/p_ref)/2.

    A p_int above p_ref is statistically inconsistent; it is reported as a
    negative gate error via a warning rather than clamped.
    """
    if not 0.0 < p_ref <= 1.0:
        raise ValueError("p_ref must lie in (0, 1]")
    if not 0.0 <= p_int <= 1.0:
        raise ValueError("p_int must lie in [0, 1]")
    error = (1.0 - p_int / p_ref) / 2.0
    if p_int > p_ref:
        warnings.warn(
            f"interleaved decay p_int={p_int} exceeds reference p_ref={p_ref}: "
            f"negative gate error {error:.3e}",
            stacklevel=2,
        )
    return 1.0 - error


def attach_interleaved(reference: RbFit, p_int: float) -> RbFit:
    """Combine a reference fit with an interleaved decay constant."""
    fidelity = interleaved_fidelity(reference.p, p_int)
    payload = {"p_int": float(p_int), "gate_fidelity": fidelity}
    return dataclasses.replace(reference, interleaved=payload)


# ---------------------------------------------------------------------------
# reset-fidelity estimation from readout histograms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResetEstimate:
    """Two-Gaussian decomposition of the rotated readout signal."""

    mu_g: float
    mu_e: float
    sigma_g: float
    sigma_e: float
    weight_e: float
    fidelity: float
    flags: tuple = ()


def _mixture_inits(x: np.ndarray) -> tuple:
    """16 deterministic EM starting points: one k-means, 15 threshold splits.

    The quantile ladder reaches up to a 98/2 split, so a small excited blob
    gets at least one start already sitting on the right answer; best final
    log-likelihood picks the winner.
    """
    starts = []
    centers = np.percentile(x, [5.0, 95.0])
    for _ in range(64):  # Lloyd iterations on a line
        assign = np.abs(x[:, None] - centers[None, :]).argmin(axis=1)
        updated = np.array([
            x[assign == k].mean() if np.any(assign == k) else centers[k]
            for k in range(2)
        ])
        if np.allclose(updated, centers, rtol=0, atol=1e-12):
            break
        centers = updated
    starts.append(np.sort(centers))
    for q in np.linspace(0.02, 0.98, 15):
        starts.append(np.percentile(x, [50.0 * q, 50.0 + 50.0 * q]))

    weights, means, variances = [], [], []
    overall_var = max(float(np.var(x)), 1e-12)
    for lo_c, hi_c in starts:
        threshold = 0.5 * (lo_c + hi_c)
        mask = x > threshold
        frac = min(max(float(mask.mean()), 1e-3), 1.0 - 1e-3)
        lo = x[~mask] if np.any(~mask) else x
        hi = x[mask] if np.any(mask) else x
        weights.append([1.0 - frac, frac])
        means.append([float(lo.mean()), float(hi.mean())])
        variances.append([
            max(float(lo.var()), 1e-3 * overall_var),
            max(float(hi.var()), 1e-3 * overall_var),
        ])
    return np.array(weights), np.array(means), np.array(variances)


def _em_all_restarts(x: np.ndarray, cx: np.ndarray, cw: np.ndarray,
                     floor: float, max_iter: int = 300):
    """Two-component 1-D EM on binned samples, all restarts in parallel.

    ``cx``/``cw`` are occupied histogram centers and counts; inits come from
    the raw samples. Returns (weights, means, variances, log-likelihood) of
    the best restart and whether its likelihood had stopped moving.
    """
    w, mu, var = _mixture_inits(x)
    total = cw.sum()
    prev_ll = np.full(len(w), -np.inf)
    ll = prev_ll
    for _ in range(max_iter):
        # (restarts, 2, bins) responsibilities in the log domain
        log_comp = (
            -0.5 * (np.log(2.0 * np.pi * var[:, :, None])
                    + (cx[None, None, :] - mu[:, :, None]) ** 2 / var[:, :, None])
            + np.log(w[:, :, None])
        )
        lse = np.logaddexp(log_comp[:, 0, :], log_comp[:, 1, :])
        ll = (cw[None, :] * lse).sum(axis=1)
        resp = np.exp(log_comp - lse[:, None, :]) * cw[None, None, :]
        bulk = np.maximum(resp.sum(axis=2), 1e-300)
        w = bulk / total
        mu = (resp * cx[None, None, :]).sum(axis=2) / bulk
        var = (resp * (cx[None, None, :] - mu[:, :, None]) ** 2).sum(axis=2) / bulk
        var = np.maximum(var, floor)
        w = np.clip(w, 1e-12, 1.0 - 1e-12)
        w /= w.sum(axis=1, keepdims=True)
        if np.all(np.abs(ll - prev_ll) < 1e-10 * (np.abs(ll) + 1.0)):
            break
        prev_ll = ll
    best = int(np.argmax(ll))
    # only the winning restart needs a settled likelihood; losing restarts
    # may still be crawling along degenerate plateaus
    converged = abs(ll[best] - prev_ll[best]) < 1e-7 * (abs(ll[best]) + 1.0)
    return w[best], mu[best], var[best], float(ll[best]), converged


def _single_gaussian_loglike(cx: np.ndarray, cw: np.ndarray, floor: float) -> tuple:
    total = cw.sum()
    mu = float((cw * cx).sum() / total)
    var = max(float((cw * (cx - mu) ** 2).sum() / total), floor)
    ll = float((cw * (-0.5 * (np.log(2.0 * np.pi * var) + (cx - mu) ** 2 / var))).sum())
    return mu, var, ll


def estimate_reset_fidelity(signal, excited_component: str = "upper") -> ResetEstimate:
    """Residual excited population by a two-component Gaussian mixture.

    Expectation-maximization with a k-means start plus a deterministic
    15-point threshold ladder (16 restarts, best log-likelihood wins); the
    component playing the excited state is chosen by center ordering
    (``excited_component`` is "upper" or "lower"). If a single Gaussian
    explains the data better (BIC), the residual population is reported as
    zero with an "unimodal" flag; a variance floor guards against component
    collapse, which is flagged.
    """
    if excited_component not in ("upper", "lower"):
        raise ValueError('excited_component must be "upper" or "lower"')
    x = np.asarray(signal, dtype=float).ravel()
    if len(x) < 1000:
        raise ValueError(f"need at least 1000 samples, got {len(x)}")

    floor = 1e-6 * max(float(np.var(x)), 1e-12)
    counts, edges = np.histogram(x, bins=512)
    centers = 0.5 * (edges[:-1] + edges[1:])
    occupied = counts > 0
    cx, cw = centers[occupied], counts[occupied].astype(float)

    w, mu, var, ll2, converged = _em_all_restarts(x, cx, cw, floor)
    if not converged:
        raise FitError("EM did not converge for the two-component mixture")
    mu1, var1, ll1 = _single_gaussian_loglike(cx, cw, floor)

    n = len(x)
    bic1 = -2.0 * ll1 + 2.0 * math.log(n)
    bic2 = -2.0 * ll2 + 5.0 * math.log(n)
    if bic1 <= bic2:
        sigma = math.sqrt(var1)
        return ResetEstimate(mu_g=mu1, mu_e=mu1, sigma_g=sigma, sigma_e=sigma,
                             weight_e=0.0, fidelity=1.0, flags=("unimodal",))

    sigmas = np.sqrt(var)
    lower, upper = np.argsort(mu)
    excited = upper if excited_component == "upper" else lower
    ground = lower if excited_component == "upper" else upper
    weight_upper = float(w[upper] / w.sum())
    weight_e = weight_upper if excited == upper else 1.0 - weight_upper

    flags = ()
    if np.any(var <= 1.5 * floor):
        flags = ("component-collapse",)
    return ResetEstimate(
        mu_g=float(mu[ground]),
        mu_e=float(mu[excited]),
        sigma_g=float(sigmas[ground]),
        sigma_e=float(sigmas[excited]),
        weight_e=weight_e,
        fidelity=1.0 - weight_e,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# dataset and report IO
# ---------------------------------------------------------------------------


def load_time_series(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a `t_us,<value>` CSV into (t, values)."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    if names is None or len(names) != 2 or names[0] != "t_us":
        raise ValueError("expected a two-column CSV with header t_us,<value>")
    return np.asarray(data[names[0]], float), np.asarray(data[names[1]], float)


def load_signal_samples(path) -> np.ndarray:
    """Read a single-column `signal` CSV into a sample array."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    if names is None or "signal" not in names:
        raise ValueError("expected a CSV with a `signal` column")
    return np.asarray(data["signal"], float)


def fit_report(fit) -> dict:
    """JSON-ready dict of any fit dataclass (arrays become lists)."""
    out = {}
    for key, value in dataclasses.asdict(fit).items():
        if isinstance(value, np.ndarray):
            out[key] = value.tolist()
        elif isinstance(value, tuple):
            out[key] = list(value)
        else:
            out[key] = value
    out["model"] = type(fit).__name__
    return out


def dump_report(fit, path) -> None:
    with open(path, "w") as fh:
        json.dump(fit_report(fit), fh, indent=2)
        fh.write("\n")
