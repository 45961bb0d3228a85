"""ARIMA and GARCH baselines fitted by derivative-free optimization.

ARIMA(p,d,q) coefficients minimize the conditional sum of squares on the
d-times differenced series, with pre-sample values and residuals taken as
zero. Stationarity and invertibility are enforced by optimizing partial
autocorrelations squashed through tanh and mapped to polynomial
coefficients by the Durbin-Levinson recursion (the MA side negates the map
so the roots of 1 + theta(B) stay outside the unit circle). GARCH(p,q)
uses Gaussian quasi-maximum-likelihood with positivity and covariance
stationarity built into the parameter transform (omega = exp(u), lag
weights through a multinomial-logistic map so their sum stays below 1).

The optimizer is a Nelder-Mead simplex with 5 deterministic restarts, each
jittered around the best point so far, capped at 2000 iterations per start
with an objective-spread tolerance of 1e-10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter, lfiltic

from .data_ingest import ConvergenceError, InsufficientDataError, ValidationError

_MAXITER = 2000
_FTOL = 1e-10
_N_STARTS = 5
_JITTER_SEED = 777
# tanh and softmax saturate in float64 for large |u|; shrink mapped values
# slightly so boundary optima keep roots outside the unit circle and
# alpha+beta strictly below 1
_BOUNDARY_SQUASH = 1.0 - 1e-6


def difference(series, d: int) -> np.ndarray:
    """Apply the first-difference operator d times."""
    x = np.asarray(series, dtype=float)
    if d < 0:
        raise ValidationError("differencing order must be nonnegative")
    if x.size <= d:
        raise InsufficientDataError(f"need more than {d} observations to difference {d} times")
    for _ in range(d):
        x = np.diff(x)
    return x


def pacf_to_coef(pacf) -> np.ndarray:
    """Durbin-Levinson map from partial autocorrelations to AR coefficients.

    Inputs in (-1, 1) yield a polynomial 1 - sum(a_k B^k) with all roots
    strictly outside the unit circle.
    """
    r = np.asarray(pacf, dtype=float)
    a = np.zeros(r.size)
    for k in range(r.size):
        prev = a[:k].copy()
        a[k] = r[k]
        a[:k] = prev - r[k] * prev[::-1]
    return a


def _poly_roots_outside(coefs, sign: float) -> bool:
    # characteristic polynomial 1 - sign*sum(c_k B^k); roots in B
    c = np.asarray(coefs, dtype=float)
    if c.size == 0:
        return True
    poly = np.concatenate(([1.0], -sign * c))[::-1]
    roots = np.roots(poly)
    return bool(np.all(np.abs(roots) > 1.0))


def css_residuals(z, intercept: float, ar, ma) -> np.ndarray:
    """One-step residuals of an ARMA recursion with zero pre-sample terms."""
    x = np.asarray(z, dtype=float)
    ar = np.asarray(ar, dtype=float)
    ma = np.asarray(ma, dtype=float)
    rhs = x - intercept
    if ar.size:
        rhs = rhs - np.convolve(x, np.concatenate(([0.0], ar)))[: x.size]
    if ma.size:
        # e_t = rhs_t - sum_j ma_j e_{t-j}, zero initial conditions
        return lfilter([1.0], np.concatenate(([1.0], ma)), rhs)
    return rhs


@dataclass(frozen=True)
class ArimaSpec:
    p: int
    d: int
    q: int
    ar_coeffs: np.ndarray
    ma_coeffs: np.ndarray
    intercept: float
    residuals: np.ndarray
    sigma2: float
    css: float

    def __post_init__(self):
        if len(self.ar_coeffs) != self.p or len(self.ma_coeffs) != self.q:
            raise ValidationError("coefficient lengths must match the orders")
        if not _poly_roots_outside(self.ar_coeffs, sign=1.0):
            raise ValidationError("AR polynomial roots inside the unit circle")
        if not _poly_roots_outside(self.ma_coeffs, sign=-1.0):
            raise ValidationError("MA polynomial roots inside the unit circle")


def _multi_start(objective, x0, rng):
    """Nelder-Mead with deterministic restarts jittered around the best point."""
    best = None
    converged = False
    for k in range(_N_STARTS):
        start = x0 if k == 0 else best[1] + rng.normal(0.0, 0.3, size=len(x0))
        res = minimize(
            objective,
            start,
            method="Nelder-Mead",
            options={"maxiter": _MAXITER, "fatol": _FTOL, "xatol": 1e-8},
        )
        if best is None or res.fun < best[0]:
            best = (res.fun, res.x)
        converged = converged or bool(res.success)
    return best, converged


def fit_arima(series, p: int, d: int, q: int) -> ArimaSpec:
    """Estimate ARIMA(p,d,q) by conditional sum of squares."""
    if min(p, d, q) < 0:
        raise ValidationError("orders must be nonnegative")
    x = np.asarray(series, dtype=float)
    if x.size < p + q + d + 2:
        raise InsufficientDataError(
            f"series of {x.size} too short for ARIMA({p},{d},{q}), floor {p + q + d + 2}"
        )
    z = difference(x, d)
    scale = float(np.std(z))
    if scale == 0.0:
        scale = 1.0
    zs = z / scale

    def unpack(u):
        c = u[0]
        ar = pacf_to_coef(_BOUNDARY_SQUASH * np.tanh(u[1 : 1 + p])) if p else np.empty(0)
        ma = -pacf_to_coef(_BOUNDARY_SQUASH * np.tanh(u[1 + p :])) if q else np.empty(0)
        return c, ar, ma

    def objective(u):
        c, ar, ma = unpack(u)
        e = css_residuals(zs, c, ar, ma)
        return float(e @ e)

    x0 = np.zeros(1 + p + q)
    x0[0] = float(np.mean(zs))
    rng = np.random.default_rng(_JITTER_SEED)
    (fun, u_best), converged = _multi_start(objective, x0, rng)
    c, ar, ma = unpack(u_best)
    resid = css_residuals(z, c * scale, ar, ma)
    css = float(resid @ resid)
    spec = ArimaSpec(
        p=p,
        d=d,
        q=q,
        ar_coeffs=ar,
        ma_coeffs=ma,
        intercept=float(c * scale),
        residuals=resid,
        sigma2=css / z.size,
        css=css,
    )
    if not converged:
        raise ConvergenceError(
            f"ARIMA({p},{d},{q}) fit did not converge within {_MAXITER} iterations per start",
            best=spec,
        )
    return spec


def forecast_arima(model: ArimaSpec, last_observations, horizon: int) -> np.ndarray:
    """Iterated conditional-mean forecasts, integrated back to levels."""
    if horizon < 1:
        raise ValidationError("horizon must be at least 1")
    obs = np.asarray(last_observations, dtype=float)
    if obs.size < model.p + model.d:
        raise InsufficientDataError(
            f"need at least {model.p + model.d} trailing observations, got {obs.size}"
        )
    if len(model.residuals) < model.q:
        raise InsufficientDataError("model carries fewer trailing residuals than its MA order")
    zs = list(difference(obs, model.d)[-model.p :]) if model.p else []
    es = list(np.asarray(model.residuals, dtype=float)[-model.q :]) if model.q else []
    levels = list(obs[-model.d :]) if model.d else []
    out = np.empty(horizon)
    for h in range(horizon):
        zhat = model.intercept
        for i in range(model.p):
            zhat += model.ar_coeffs[i] * zs[-1 - i]
        for j in range(min(model.q, len(es))):
            zhat += model.ma_coeffs[j] * es[-1 - j]
        if model.p:
            zs.append(zhat)
        if model.q:
            es.append(0.0)
        level = zhat
        for j in range(1, model.d + 1):
            level += (-1.0) ** (j + 1) * math.comb(model.d, j) * levels[-j]
        if model.d:
            levels.append(level)
        out[h] = level
    return out


@dataclass(frozen=True)
class GarchSpec:
    p: int
    q: int
    omega: float
    alpha_coeffs: np.ndarray
    beta_coeffs: np.ndarray
    nll: float = field(default=math.nan, compare=False)

    def __post_init__(self):
        if len(self.alpha_coeffs) != self.p or len(self.beta_coeffs) != self.q:
            raise ValidationError("coefficient lengths must match the orders")
        if self.omega <= 0:
            raise ValidationError("omega must be positive")
        if np.any(np.asarray(self.alpha_coeffs) < 0) or np.any(np.asarray(self.beta_coeffs) < 0):
            raise ValidationError("ARCH/GARCH coefficients must be nonnegative")
        if np.sum(self.alpha_coeffs) + np.sum(self.beta_coeffs) >= 1.0:
            raise ValidationError("alpha + beta must sum below 1")


def garch_variances(spec: GarchSpec, residuals) -> np.ndarray:
    """In-sample conditional variances; pre-sample terms use the sample mean square."""
    e2 = np.asarray(residuals, dtype=float) ** 2
    m = float(e2.mean())
    rhs = np.full(e2.size, spec.omega)
    for i, a in enumerate(spec.alpha_coeffs, start=1):
        shifted = np.concatenate([np.full(i, m), e2[:-i]]) if i <= e2.size else np.full(e2.size, m)
        rhs += a * shifted
    if spec.q:
        a_poly = np.concatenate(([1.0], -np.asarray(spec.beta_coeffs)))
        zi = lfiltic([1.0], a_poly, np.full(spec.q, m))
        h, _ = lfilter([1.0], a_poly, rhs, zi=zi)
    else:
        h = rhs
    return h


def fit_garch(residuals, p: int, q: int) -> GarchSpec:
    """Gaussian QMLE for GARCH(p,q); p counts ARCH lags, q counts GARCH lags."""
    if p < 1 and q < 1:
        raise ValidationError("at least one ARCH or GARCH lag is required")
    if min(p, q) < 0:
        raise ValidationError("orders must be nonnegative")
    e = np.asarray(residuals, dtype=float)
    if e.size < p + q + 2:
        raise InsufficientDataError(f"need more than {p + q + 1} residuals")
    s2 = float(np.var(e))
    if s2 == 0.0:
        raise ValidationError("degenerate residuals with zero variance")
    es = e / math.sqrt(s2)
    e2 = es**2
    m = float(e2.mean())
    n = es.size

    def unpack(u):
        u = np.clip(u, -60.0, 60.0)
        omega = math.exp(u[0])
        ex = np.exp(u[1:])
        w = _BOUNDARY_SQUASH * ex / (1.0 + ex.sum())
        return omega, w[:p], w[p:]

    def objective(u):
        omega, alpha, beta = unpack(u)
        rhs = np.full(n, omega)
        for i, a in enumerate(alpha, start=1):
            rhs += a * np.concatenate([np.full(i, m), e2[:-i]])
        if q:
            a_poly = np.concatenate(([1.0], -beta))
            zi = lfiltic([1.0], a_poly, np.full(q, m))
            h, _ = lfilter([1.0], a_poly, rhs, zi=zi)
        else:
            h = rhs
        return float(np.sum(np.log(h) + e2 / h))

    # start near omega = 0.1*var, total ARCH weight 0.1, total GARCH weight 0.8
    x0 = np.empty(1 + p + q)
    x0[0] = math.log(0.1 * m)
    x0[1 : 1 + p] = math.log(0.1 / p * 10.0) if p else 0.0
    x0[1 + p :] = math.log(0.8 / q * 10.0) if q else 0.0
    rng = np.random.default_rng(_JITTER_SEED + 1)
    (fun, u_best), converged = _multi_start(objective, x0, rng)
    omega, alpha, beta = unpack(u_best)
    spec = GarchSpec(
        p=p,
        q=q,
        omega=float(omega * s2),
        alpha_coeffs=alpha,
        beta_coeffs=beta,
        nll=float(fun),
    )
    if not converged:
        raise ConvergenceError(
            f"GARCH({p},{q}) fit did not converge within {_MAXITER} iterations per start",
            best=spec,
        )
    return spec


def forecast_garch_variance(
    spec: GarchSpec, residuals, horizon: int, h_insample=None
) -> np.ndarray:
    """h-step innovation-variance forecasts from the GARCH recursion.

    Future squared residuals are replaced by their conditional expectations.
    `residuals` and `h_insample` may be trailing slices of different lengths;
    both are taken to end at the last in-sample month.
    """
    e2 = list(np.asarray(residuals, dtype=float) ** 2)
    h = list(h_insample) if h_insample is not None else list(garch_variances(spec, residuals))
    if len(e2) < spec.p or len(h) < spec.q:
        raise ValidationError(
            f"GARCH({spec.p},{spec.q}) forecast needs {spec.p} trailing residuals "
            f"and {spec.q} trailing variances, got {len(e2)} and {len(h)}"
        )
    out = []
    for _ in range(horizon):
        val = spec.omega
        for i, a in enumerate(spec.alpha_coeffs, start=1):
            val += a * e2[-i]
        for j, b in enumerate(spec.beta_coeffs, start=1):
            val += b * h[-j]
        out.append(val)
        e2.append(val)  # E[e^2] = h for future steps
        h.append(val)
    return np.array(out)


def forecast_arima_garch(
    arima: ArimaSpec, garch: GarchSpec, last_observations, horizon: int
) -> tuple[np.ndarray, np.ndarray]:
    """Point forecasts (identical to the plain ARIMA ones) plus variance forecasts."""
    points = forecast_arima(arima, last_observations, horizon)
    variances = forecast_garch_variance(garch, arima.residuals, horizon)
    return points, variances


def psi_weights(model: ArimaSpec, horizon: int) -> np.ndarray:
    """Moving-average representation weights of the integrated process.

    psi solves theta(B) = phi(B) (1-B)^d psi(B); the variance of the h-step
    level forecast is sigma2 * sum(psi_i^2, i < h) under homoscedastic
    innovations.
    """
    poly = np.concatenate(([1.0], -np.asarray(model.ar_coeffs, dtype=float)))
    for _ in range(model.d):
        poly = np.convolve(poly, [1.0, -1.0])
    a = -poly[1:]  # recursion weights: psi_j = theta_j + sum a_i psi_{j-i}
    psi = np.zeros(horizon)
    psi[0] = 1.0
    for j in range(1, horizon):
        val = model.ma_coeffs[j - 1] if j - 1 < model.q else 0.0
        for i in range(1, min(j, a.size) + 1):
            val += a[i - 1] * psi[j - i]
        psi[j] = val
    return psi


def forecast_level_variance(model: ArimaSpec, horizon: int, innovation_vars=None) -> np.ndarray:
    """Variance of the h-step level forecast via accumulated psi weights."""
    psi = psi_weights(model, horizon)
    out = np.empty(horizon)
    if innovation_vars is None:
        out[:] = model.sigma2 * np.cumsum(psi**2)
    else:
        iv = np.asarray(innovation_vars, dtype=float)
        if iv.size < horizon:
            raise ValidationError("need one innovation variance per forecast step")
        for h in range(1, horizon + 1):
            # psi_i pairs with the innovation variance of step h-i
            out[h - 1] = float(np.sum(psi[:h] ** 2 * iv[:h][::-1]))
    return out


# ---------------------------------------------------------------------------
# flat key = value fitted-model files

def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_arima_model(
    arima: ArimaSpec, path, start: tuple[int, int], level_tail, garch: GarchSpec | None = None
) -> None:
    """Persist a fitted model with the state needed to forecast from the file.

    `level_tail` holds the last p+d training levels; the file also carries
    trailing residuals (and conditional variances when a GARCH layer is
    present) so h-step forecasts reproduce the in-memory ones exactly.
    """
    level_tail = [float(x) for x in level_tail]
    if len(level_tail) < arima.p + arima.d:
        raise ValidationError(f"need {arima.p + arima.d} trailing levels, got {len(level_tail)}")
    n_resid = max(arima.q, garch.p if garch else 0)
    resid_tail = [float(x) for x in np.asarray(arima.residuals)[-n_resid:]] if n_resid else []
    lines = [
        f"model = {'arima-garch' if garch else 'arima'}",
        f"p = {arima.p}",
        f"d = {arima.d}",
        f"q = {arima.q}",
        f"intercept = {_fmt(arima.intercept)}",
        f"sigma2 = {_fmt(arima.sigma2)}",
        f"css = {_fmt(arima.css)}",
        f"start_year = {start[0]}",
        f"start_month = {start[1]}",
    ]
    lines += [f"ar.{i} = {_fmt(c)}" for i, c in enumerate(arima.ar_coeffs, start=1)]
    lines += [f"ma.{i} = {_fmt(c)}" for i, c in enumerate(arima.ma_coeffs, start=1)]
    lines += [f"tail.{i} = {_fmt(x)}" for i, x in enumerate(level_tail[-(arima.p + arima.d) :], 1)]
    lines += [f"resid.{i} = {_fmt(x)}" for i, x in enumerate(resid_tail, start=1)]
    if garch is not None:
        h = garch_variances(garch, arima.residuals)
        lines += [
            f"garch.p = {garch.p}",
            f"garch.q = {garch.q}",
            f"garch.omega = {_fmt(garch.omega)}",
        ]
        lines += [f"garch.alpha.{i} = {_fmt(c)}" for i, c in enumerate(garch.alpha_coeffs, 1)]
        lines += [f"garch.beta.{i} = {_fmt(c)}" for i, c in enumerate(garch.beta_coeffs, 1)]
        lines += [f"garch.h.{i} = {_fmt(x)}" for i, x in enumerate(h[-garch.q :], 1) if garch.q]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _take_indexed(kv: dict, prefix: str, path) -> list[float]:
    try:
        idx = sorted(
            int(k[len(prefix) :]) for k in list(kv) if k.startswith(prefix) and k[len(prefix) :]
        )
    except ValueError:
        raise ValidationError(f"{path}: malformed {prefix}* key") from None
    if idx != list(range(1, len(idx) + 1)):
        raise ValidationError(f"{path}: {prefix}* indices must run 1..n")
    try:
        return [float(kv.pop(f"{prefix}{i}")) for i in idx]
    except ValueError:
        raise ValidationError(f"{path}: {prefix}* values must be numeric") from None


def read_arima_model(path):
    """Load a fitted-model file.

    Returns (ArimaSpec, GarchSpec | None, start, level_tail, h_tail); the
    returned spec's residuals hold only the stored trailing values.
    """
    from .stochastic_engine import parse_kv_file

    kv = parse_kv_file(path)
    model = kv.pop("model", "arima")
    if model not in ("arima", "arima-garch"):
        raise ValidationError(f"{path}: unknown model {model}")

    def pop_int(key):
        if key not in kv:
            raise ValidationError(f"{path}: missing key {key}")
        try:
            return int(kv.pop(key))
        except ValueError:
            raise ValidationError(f"{path}: key {key} is not an integer") from None

    def pop_float(key):
        if key not in kv:
            raise ValidationError(f"{path}: missing key {key}")
        try:
            return float(kv.pop(key))
        except ValueError:
            raise ValidationError(f"{path}: key {key} is not numeric") from None

    p, d, q = pop_int("p"), pop_int("d"), pop_int("q")
    intercept = pop_float("intercept")
    sigma2 = pop_float("sigma2")
    css = pop_float("css")
    start = (pop_int("start_year"), pop_int("start_month"))
    ar = np.array(_take_indexed(kv, "ar.", path))
    ma = np.array(_take_indexed(kv, "ma.", path))
    tail = np.array(_take_indexed(kv, "tail.", path))
    resid = np.array(_take_indexed(kv, "resid.", path))
    spec = ArimaSpec(
        p=p, d=d, q=q, ar_coeffs=ar, ma_coeffs=ma,
        intercept=intercept, residuals=resid, sigma2=sigma2, css=css,
    )
    garch = None
    h_tail = None
    if model == "arima-garch":
        gp, gq = pop_int("garch.p"), pop_int("garch.q")
        omega = pop_float("garch.omega")
        alpha = np.array(_take_indexed(kv, "garch.alpha.", path))
        beta = np.array(_take_indexed(kv, "garch.beta.", path))
        h_tail = np.array(_take_indexed(kv, "garch.h.", path))
        garch = GarchSpec(p=gp, q=gq, omega=omega, alpha_coeffs=alpha, beta_coeffs=beta)
    if kv:
        raise ValidationError(f"{path}: unknown keys {', '.join(sorted(kv))}")
    return spec, garch, start, tail, h_tail


def aic(css: float, n: int, k: int) -> float:
    """Gaussian AIC up to constants: n*ln(css/n) + 2k."""
    if css <= 0 or n <= 0:
        raise ValidationError("AIC needs positive css and sample size")
    return n * math.log(css / n) + 2.0 * k


def select_order(series, max_p: int, max_d: int, max_q: int) -> tuple[int, int, int]:
    """Grid search minimizing AIC; ties prefer smaller p+q, then smaller d."""
    x = np.asarray(series, dtype=float)
    results = []
    for d in range(max_d + 1):
        for p in range(max_p + 1):
            for q in range(max_q + 1):
                try:
                    fit = fit_arima(x, p, d, q)
                except ConvergenceError:
                    continue
                except (InsufficientDataError, ValidationError):
                    continue
                n = x.size - d
                try:
                    score = aic(fit.css, n, p + q + 2)
                except ValidationError:
                    continue
                results.append((score, p + q, d, p, q))
    if not results:
        raise ConvergenceError("no ARIMA order in the grid produced a converged fit")
    results.sort()
    _, _, d, p, q = results[0]
    return p, d, q
