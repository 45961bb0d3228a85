"""Seeded Monte Carlo simulation of the crash-rate dynamics.

Two-factor model: the rate follows dC = mu*C1*dt + sqrt(v)*C1*dW_c with
increments scaled to the initial rate C1 (state-independent steps), and the
variance follows dv = kappa*(theta - v)*dt + xi*sqrt(v)*dW_v, with corr(W_c,
W_v) = rho. Discretization is explicit Euler at dt = 1/12 year per monthly
step, using the start-of-step variance in the rate update. Negative
excursions of either process are folded back by reflection (absolute value),
or clipped to zero under the `truncate` scheme.

Calendar-hurdle spikes: in configured months the reported rate is
|base + trailing_average * (a + b*z)| with a fresh z per path per
occurrence. The base (pre-spike) series, not the spiked one, feeds both the
next Euler step and the trailing average, so spikes stay transient.

An Ornstein-Uhlenbeck variant with a deterministic growth target and the
identical spike machinery serves as a baseline.

Determinism: every path draws from its own substream seeded by
(master_seed, path_index); within a path and month the draw order is fixed
(z_c, z_v, then the spike draw where applicable), so results are
bit-identical for a given seed no matter how paths are batched.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data_ingest import ValidationError, add_months

DEFAULT_DT = 1.0 / 12.0


class FellerWarning(UserWarning):
    """Raised when kappa <= xi^2 / (2 theta) in variance units."""


@dataclass(frozen=True)
class SpikeSpec:
    """Normal-draw spike parameters for one calendar month: G = mean_a + std_b*z."""

    month: int
    mean_a: float
    std_b: float

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValidationError(f"spike month {self.month} outside 1..12")
        if self.std_b < 0:
            raise ValidationError("spike std must be nonnegative")


def _check(cond: bool, what: str):
    if not cond:
        raise ValidationError(f"violated invariant: {what}")


@dataclass(frozen=True)
class HestonParams:
    """Model parameters; v0 and theta are variances in per-year units.

    Config files carry volatility-units values (v0_vol, theta_vol) which are
    squared on load; `feller_satisfied` uses the variance-units bound.
    """

    c1: float
    mu: float
    v0: float
    theta: float
    kappa: float
    xi: float
    rho: float
    spikes: tuple[SpikeSpec, ...] = ()
    start: tuple[int, int] = (2015, 1)
    scheme: str = "reflect"
    dt: float = DEFAULT_DT
    feller_satisfied: bool = field(init=False)

    def __post_init__(self):
        _check(self.c1 > 0, "c1 > 0")
        _check(self.v0 >= 0, "v0 >= 0")
        _check(self.theta >= 0, "theta >= 0")
        _check(self.kappa >= 0, "kappa >= 0")
        _check(self.xi >= 0, "xi >= 0")
        _check(-1.0 <= self.rho <= 1.0, "-1 <= rho <= 1")
        _check(self.dt > 0, "dt > 0")
        _check(self.scheme in ("reflect", "truncate"), "scheme in {reflect, truncate}")
        _check(1 <= self.start[1] <= 12, "start month in 1..12")
        months = [s.month for s in self.spikes]
        _check(len(months) == len(set(months)), "unique spike months")
        ok = self.theta > 0 and self.kappa > self.xi**2 / (2.0 * self.theta)
        object.__setattr__(self, "feller_satisfied", bool(ok))
        if not ok and self.xi > 0:
            warnings.warn(
                f"kappa={self.kappa:.6g} does not exceed xi^2/(2*theta)="
                f"{self.xi**2 / (2.0 * self.theta) if self.theta > 0 else math.inf:.6g}; "
                "the variance process relies on the reflection scheme",
                FellerWarning,
                stacklevel=2,
            )


@dataclass(frozen=True)
class VasicekParams:
    """Ornstein-Uhlenbeck baseline: dC = kappa_v*(theta(t) - C)dt + sigma_v*C1*dW
    with theta(t) = C1*(1+mu)^(t/12) tracking the fitted annual growth."""

    c1: float
    mu: float
    kappa_v: float
    sigma_v: float
    spikes: tuple[SpikeSpec, ...] = ()
    start: tuple[int, int] = (2015, 1)
    scheme: str = "reflect"
    dt: float = DEFAULT_DT

    def __post_init__(self):
        _check(self.c1 > 0, "c1 > 0")
        _check(self.kappa_v >= 0, "kappa_v >= 0")
        _check(self.sigma_v >= 0, "sigma_v >= 0")
        _check(self.dt > 0, "dt > 0")
        _check(self.scheme in ("reflect", "truncate"), "scheme in {reflect, truncate}")
        _check(1 <= self.start[1] <= 12, "start month in 1..12")
        months = [s.month for s in self.spikes]
        _check(len(months) == len(set(months)), "unique spike months")


@dataclass(frozen=True)
class SimulationResult:
    """Simulated paths; rows are paths, columns are consecutive months."""

    rate_paths: np.ndarray
    var_paths: np.ndarray
    base_paths: np.ndarray
    seed: int
    dt: float
    history_tail: tuple[float, ...]
    start: tuple[int, int]
    model_id: str

    @property
    def n_paths(self) -> int:
        return self.rate_paths.shape[0]

    @property
    def horizon(self) -> int:
        return self.rate_paths.shape[1]

    @property
    def months(self) -> list[tuple[int, int]]:
        y, m = self.start
        return [add_months(y, m, k) for k in range(self.horizon)]


@dataclass(frozen=True)
class ForecastQuantiles:
    months: tuple[tuple[int, int], ...]
    median: np.ndarray
    levels: tuple[float, ...]
    bands: np.ndarray  # shape (len(levels), horizon)


def correlated_normal_pair(z1, z2, rho: float):
    """Map two independent draws to a correlated pair (z1, rho*z1 + sqrt(1-rho^2)*z2)."""
    if not -1.0 <= rho <= 1.0:
        raise ValidationError(f"correlation {rho} outside [-1, 1]")
    return z1, rho * z1 + math.sqrt(1.0 - rho * rho) * z2


def feller_bound(xi: float, theta_vol: float) -> float:
    """Mean-reversion threshold xi^2 / (2*theta) with theta in volatility units."""
    if theta_vol <= 0:
        raise ValidationError("theta_vol must be positive")
    return xi * xi / (2.0 * theta_vol)


def _fold(x, scheme: str):
    return np.abs(x) if scheme == "reflect" else np.maximum(x, 0.0)


def step_variance(v, params: HestonParams, dt: float, z_v):
    """One Euler step of the variance, folded to stay nonnegative."""
    raw = v + params.kappa * (params.theta - v) * dt + params.xi * np.sqrt(v * dt) * z_v
    return _fold(raw, params.scheme)


def step_rate(c_prev, params: HestonParams, v, dt: float, z_c):
    """One Euler step of the rate; increments scale with c1, not the state."""
    raw = c_prev + params.mu * params.c1 * dt + np.sqrt(v) * params.c1 * math.sqrt(dt) * z_c
    return _fold(raw, params.scheme)


def spike_adjustment(month: int, spikes, z) -> float:
    """Spike multiplier for one month: mean_a + std_b*z, or 0 off-spike."""
    if not 1 <= month <= 12:
        raise ValidationError(f"month {month} outside 1..12")
    for spec in spikes:
        if spec.month == month:
            return spec.mean_a + spec.std_b * z
    return 0.0


def prevailing_year_average(path_so_far, history_tail) -> float:
    """Mean of the most recent up-to-12 base rates.

    Takes simulated months first and backfills from observed history while
    fewer than 12 simulated months exist.
    """
    sim = np.asarray(path_so_far, dtype=float)[-12:]
    need = 12 - sim.size
    hist = np.asarray(history_tail, dtype=float)
    tail = hist[-need:] if need > 0 and hist.size else np.empty(0)
    vals = np.concatenate([tail, sim])
    if vals.size == 0:
        raise ValidationError("no rates available for the trailing average")
    return float(vals.mean())


def _draw_buffers(seed: int, n_paths: int, counts: list[int]) -> np.ndarray:
    """Per-path normal draws, one substream per path, fixed intra-month order."""
    total = int(sum(counts))
    buf = np.empty((n_paths, total))
    for p in range(n_paths):
        buf[p] = np.random.default_rng([seed, p]).standard_normal(total)
    return buf


def _trailing_average(base, t, tail_arr):
    # mean over the latest k simulated base rates (k <= 12, current included)
    # backfilled from the observed tail up to 12 values total
    k = min(t + 1, 12)
    sim_sum = base[:, t + 1 - k : t + 1].sum(axis=1)
    b = min(12 - k, tail_arr.size)
    tail_sum = tail_arr[-b:].sum() if b > 0 else 0.0
    return (sim_sum + tail_sum) / (k + b)


def _spike_table(spikes) -> dict[int, SpikeSpec]:
    return {s.month: s for s in spikes}


def simulate_heston(
    params: HestonParams,
    horizon: int,
    n_paths: int,
    seed: int,
    history_tail=(),
) -> SimulationResult:
    """Simulate correlated rate/variance paths with calendar spikes.

    Deterministic for a given (params, horizon, n_paths, seed).
    """
    _check(horizon >= 1, "horizon >= 1")
    _check(n_paths >= 1, "n_paths >= 1")
    dt = params.dt
    spike_at = _spike_table(params.spikes)
    y0, m0 = params.start
    cal_months = [add_months(y0, m0, k)[1] for k in range(horizon)]
    counts = [3 if m in spike_at else 2 for m in cal_months]
    buf = _draw_buffers(seed, n_paths, counts)
    tail_arr = np.asarray(history_tail, dtype=float)

    rho = params.rho
    rho_c = math.sqrt(1.0 - rho * rho)
    base = np.empty((n_paths, horizon))
    rep = np.empty((n_paths, horizon))
    var = np.empty((n_paths, horizon))
    c = np.full(n_paths, params.c1)
    v = np.full(n_paths, params.v0)
    col = 0
    for t, month in enumerate(cal_months):
        z_c = buf[:, col]
        z_v = rho * z_c + rho_c * buf[:, col + 1]
        col += 2
        v_new = step_variance(v, params, dt, z_v)
        c_new = step_rate(c, params, v, dt, z_c)  # start-of-step variance
        base[:, t] = c_new
        var[:, t] = v_new
        spec = spike_at.get(month)
        if spec is not None:
            g = spec.mean_a + spec.std_b * buf[:, col]
            col += 1
            cbar = _trailing_average(base, t, tail_arr)
            rep[:, t] = _fold(c_new + cbar * g, params.scheme)
        else:
            rep[:, t] = c_new
        c = c_new
        v = v_new
    for arr in (rep, var, base):
        arr.flags.writeable = False
    return SimulationResult(
        rate_paths=rep,
        var_paths=var,
        base_paths=base,
        seed=seed,
        dt=dt,
        history_tail=tuple(float(x) for x in tail_arr),
        start=params.start,
        model_id="heston",
    )


def simulate_vasicek(
    params: VasicekParams,
    horizon: int,
    n_paths: int,
    seed: int,
    history_tail=(),
) -> SimulationResult:
    """Simulate the mean-reverting baseline with the same spike machinery.

    Draw order per path per month is z_c then the spike draw; var_paths
    reports the constant instantaneous variance sigma_v^2.
    """
    _check(horizon >= 1, "horizon >= 1")
    _check(n_paths >= 1, "n_paths >= 1")
    dt = params.dt
    sdt = math.sqrt(dt)
    spike_at = _spike_table(params.spikes)
    y0, m0 = params.start
    cal_months = [add_months(y0, m0, k)[1] for k in range(horizon)]
    counts = [2 if m in spike_at else 1 for m in cal_months]
    buf = _draw_buffers(seed, n_paths, counts)
    tail_arr = np.asarray(history_tail, dtype=float)

    base = np.empty((n_paths, horizon))
    rep = np.empty((n_paths, horizon))
    c = np.full(n_paths, params.c1)
    col = 0
    for t, month in enumerate(cal_months):
        theta_t = params.c1 * (1.0 + params.mu) ** ((t + 1) / 12.0)
        z = buf[:, col]
        col += 1
        raw = c + params.kappa_v * (theta_t - c) * dt + params.sigma_v * params.c1 * sdt * z
        c_new = _fold(raw, params.scheme)
        base[:, t] = c_new
        spec = spike_at.get(month)
        if spec is not None:
            g = spec.mean_a + spec.std_b * buf[:, col]
            col += 1
            cbar = _trailing_average(base, t, tail_arr)
            rep[:, t] = _fold(c_new + cbar * g, params.scheme)
        else:
            rep[:, t] = c_new
        c = c_new
    var = np.full((n_paths, horizon), params.sigma_v**2)
    for arr in (rep, var, base):
        arr.flags.writeable = False
    return SimulationResult(
        rate_paths=rep,
        var_paths=var,
        base_paths=base,
        seed=seed,
        dt=dt,
        history_tail=tuple(float(x) for x in tail_arr),
        start=params.start,
        model_id="vasicek",
    )


def forecast_quantiles(result: SimulationResult, levels) -> ForecastQuantiles:
    """Per-month empirical quantiles (linear interpolation) plus the median."""
    lv = [float(x) for x in levels]
    if not lv:
        raise ValidationError("need at least one quantile level")
    if any(not 0.0 < x < 1.0 for x in lv):
        raise ValidationError("quantile levels must lie strictly inside (0, 1)")
    if sorted(set(lv)) != lv:
        raise ValidationError("quantile levels must be sorted and unique")
    bands = np.quantile(result.rate_paths, lv, axis=0)
    med = np.median(result.rate_paths, axis=0)
    return ForecastQuantiles(
        months=tuple(result.months),
        median=med,
        levels=tuple(lv),
        bands=bands,
    )


# ---------------------------------------------------------------------------
# flat key = value parameter files

def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_stochastic_params(params, path, history_tail=()) -> None:
    """Write a heston or vasicek parameter file (flat key = value text)."""
    lines = []
    if isinstance(params, HestonParams):
        lines += [
            "model = heston",
            f"c1 = {_fmt(params.c1)}",
            f"mu = {_fmt(params.mu)}",
            f"v0_vol = {_fmt(math.sqrt(params.v0))}",
            f"theta_vol = {_fmt(math.sqrt(params.theta))}",
            f"kappa = {_fmt(params.kappa)}",
            f"xi = {_fmt(params.xi)}",
            f"rho = {_fmt(params.rho)}",
        ]
    elif isinstance(params, VasicekParams):
        lines += [
            "model = vasicek",
            f"c1 = {_fmt(params.c1)}",
            f"mu = {_fmt(params.mu)}",
            f"kappa_v = {_fmt(params.kappa_v)}",
            f"sigma_v = {_fmt(params.sigma_v)}",
        ]
    else:
        raise ValidationError(f"unsupported parameter type {type(params).__name__}")
    lines += [
        f"dt = {_fmt(params.dt)}",
        f"scheme = {params.scheme}",
        f"start_year = {params.start[0]}",
        f"start_month = {params.start[1]}",
    ]
    for s in sorted(params.spikes, key=lambda s: s.month):
        lines.append(f"spike.{s.month}.mean = {_fmt(s.mean_a)}")
        lines.append(f"spike.{s.month}.std = {_fmt(s.std_b)}")
    for i, r in enumerate(history_tail, start=1):
        lines.append(f"history.{i} = {_fmt(float(r))}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_kv_file(path) -> dict[str, str]:
    """Read a flat `key = value` file, ignoring blanks and # comments."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
            key, val = (part.strip() for part in text.split("=", 1))
            if not key or not val:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
            if key in out:
                raise ValidationError(f"{path}:{lineno}: duplicate key {key}")
            out[key] = val
    return out


def _pop_float(kv: dict, key: str, path) -> float:
    if key not in kv:
        raise ValidationError(f"{path}: missing key {key}")
    try:
        return float(kv.pop(key))
    except ValueError:
        raise ValidationError(f"{path}: key {key} is not numeric") from None


def _pop_spikes(kv: dict, path) -> tuple[SpikeSpec, ...]:
    try:
        months = sorted({int(k.split(".")[1]) for k in kv if k.startswith("spike.")})
    except (IndexError, ValueError):
        raise ValidationError(f"{path}: malformed spike key") from None
    specs = []
    for m in months:
        mean = _pop_float(kv, f"spike.{m}.mean", path)
        std = _pop_float(kv, f"spike.{m}.std", path)
        specs.append(SpikeSpec(month=m, mean_a=mean, std_b=std))
    return tuple(specs)


def _pop_history(kv: dict, path) -> tuple[float, ...]:
    try:
        idx = sorted(int(k.split(".")[1]) for k in kv if k.startswith("history."))
    except (IndexError, ValueError):
        raise ValidationError(f"{path}: malformed history key") from None
    if idx and idx != list(range(1, len(idx) + 1)):
        raise ValidationError(f"{path}: history indices must run 1..n")
    return tuple(_pop_float(kv, f"history.{i}", path) for i in idx)


def read_stochastic_params(path):
    """Load a parameter file; returns (HestonParams | VasicekParams, history_tail)."""
    kv = parse_kv_file(path)
    model = kv.pop("model", "heston")
    scheme = kv.pop("scheme", "reflect")
    start = (
        int(_pop_float(kv, "start_year", path)),
        int(_pop_float(kv, "start_month", path)),
    )
    spikes = _pop_spikes(kv, path)
    history = _pop_history(kv, path)
    dt = _pop_float(kv, "dt", path) if "dt" in kv else DEFAULT_DT
    if model == "heston":
        params = HestonParams(
            c1=_pop_float(kv, "c1", path),
            mu=_pop_float(kv, "mu", path),
            v0=_pop_float(kv, "v0_vol", path) ** 2,
            theta=_pop_float(kv, "theta_vol", path) ** 2,
            kappa=_pop_float(kv, "kappa", path),
            xi=_pop_float(kv, "xi", path),
            rho=_pop_float(kv, "rho", path),
            spikes=spikes,
            start=start,
            scheme=scheme,
            dt=dt,
        )
    elif model == "vasicek":
        params = VasicekParams(
            c1=_pop_float(kv, "c1", path),
            mu=_pop_float(kv, "mu", path),
            kappa_v=_pop_float(kv, "kappa_v", path),
            sigma_v=_pop_float(kv, "sigma_v", path),
            spikes=spikes,
            start=start,
            scheme=scheme,
            dt=dt,
        )
    else:
        raise ValidationError(f"{path}: unknown model {model}")
    if kv:
        raise ValidationError(f"{path}: unknown keys {', '.join(sorted(kv))}")
    return params, history
