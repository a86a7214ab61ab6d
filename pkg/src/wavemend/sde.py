"""Mean-reverting diffusion in discrete time: schedule, forward marginals,
closed-form posterior reverse step, and the clean-state estimator.

The forward process drifts a field x toward a condition mu while injecting
noise; under the stationarity coupling of volatility to reversion rate the
state at step t is exactly

    x_t = mu + (x_0 - mu) e^{-tb(t)} + sqrt(v_t) eps,    eps ~ N(0, I)
    v_t = lam^2 (1 - e^{-2 tb(t)})

where tb(t) is the accumulated reversion and lam the stationary standard
deviation.  Reversal never integrates the SDE: given an estimate of x_0 the
Gaussian posterior p(x_{t-1} | x_t, x_0) is sampled in closed form.  All
operations are pure given an explicit generator, so parallel slice
processing with keyed substreams reproduces serial runs bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

DEFAULT_T = 100
# Stationary scale: sigma_max of 50 on a 0..255 intensity scale, expressed in
# normalised [0, 1] units.
DEFAULT_LAMBDA = 50.0 / 255.0
DEFAULT_TERMINAL_DECAY = 1e-5
_MAX_TERMINAL_DECAY = 1e-4


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step tables for a T-step chain.

    ``theta_bar[t]`` is the accumulated reversion after t unit steps,
    ``theta_prime[t] = theta_bar[t] - theta_bar[t-1]`` the per-step amount
    (equal to the step rate under the unit-step convention), ``decay[t] =
    exp(-theta_bar[t])`` and ``v[t]`` the marginal variance.
    """

    T: int
    lam: float
    theta_bar: np.ndarray
    kind: str = "cosine"
    terminal_decay: float = DEFAULT_TERMINAL_DECAY
    theta_prime: np.ndarray = field(init=False)
    decay: np.ndarray = field(init=False)
    decay2: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)

    def __post_init__(self):
        tb = np.asarray(self.theta_bar, dtype=np.float64)
        if tb.shape != (self.T + 1,):
            raise ValueError(f"theta_bar must have length T+1 = {self.T + 1}, got {tb.shape}")
        if tb[0] != 0.0:
            raise ValueError("theta_bar[0] must be exactly 0")
        prime = np.concatenate([[0.0], np.diff(tb)])
        if np.any(prime[1:] <= 0.0):
            raise ValueError("theta_bar must be strictly increasing")
        decay = np.exp(-tb)
        decay2 = np.exp(-2.0 * tb)
        if decay2[-1] > _MAX_TERMINAL_DECAY * (1.0 + 1e-12):
            raise ValueError(
                f"terminal decay e^(-2 theta_bar[T]) = {decay2[-1]:.3g} exceeds "
                f"{_MAX_TERMINAL_DECAY}; the end state would not be stationary"
            )
        v = self.lam ** 2 * (1.0 - decay2)
        object.__setattr__(self, "theta_bar", tb)
        object.__setattr__(self, "theta_prime", prime)
        object.__setattr__(self, "decay", decay)
        object.__setattr__(self, "decay2", decay2)
        object.__setattr__(self, "v", v)

    def _check_step(self, t: int, lo: int = 0) -> int:
        t = int(t)
        if not lo <= t <= self.T:
            raise ValueError(f"step t = {t} outside [{lo}, {self.T}]")
        return t

    def posterior_coeffs(self, t: int) -> tuple[float, float, float]:
        """Coefficients of the reverse posterior at step t >= 1.

        Returns ``(c1, c2, beta_tilde)`` such that the posterior mean is
        ``c1 (x_t - mu) + c2 (x0 - mu) + mu`` and its variance is
        ``lam^2 * beta_tilde``.  ``beta_tilde`` is 0 at t = 1, making the
        final step deterministic.
        """
        t = self._check_step(t, lo=1)
        one_m_t = 1.0 - self.decay2[t]
        one_m_prev = 1.0 - self.decay2[t - 1]
        e_step = self.decay[t] / self.decay[t - 1]
        one_m_step = 1.0 - self.decay2[t] / self.decay2[t - 1]
        c1 = one_m_prev / one_m_t * e_step
        c2 = one_m_step / one_m_t * self.decay[t - 1]
        beta_tilde = one_m_prev * one_m_step / one_m_t
        return float(c1), float(c2), float(beta_tilde)

    def to_json(self) -> str:
        return json.dumps(
            {
                "T": self.T,
                "lambda": self.lam,
                "kind": self.kind,
                "terminal_decay": self.terminal_decay,
                "theta_bar": self.theta_bar.tolist(),
            }
        )


def schedule_from_json(text: str) -> NoiseSchedule:
    obj = json.loads(text)
    return NoiseSchedule(
        T=int(obj["T"]),
        lam=float(obj["lambda"]),
        theta_bar=np.asarray(obj["theta_bar"], dtype=np.float64),
        kind=obj.get("kind", "cosine"),
        terminal_decay=float(obj.get("terminal_decay", DEFAULT_TERMINAL_DECAY)),
    )


def build_schedule(
    T: int = DEFAULT_T,
    lam: float = DEFAULT_LAMBDA,
    kind: str = "cosine",
    terminal_decay: float = DEFAULT_TERMINAL_DECAY,
) -> NoiseSchedule:
    """Cosine schedule: e^{-2 theta_bar(t)} decays like cos^2(pi t / 2T)
    from 1 at t = 0 down to ``terminal_decay`` at t = T."""
    if not isinstance(T, (int, np.integer)) or T < 2:
        raise ValueError(f"T must be an integer >= 2, got {T!r}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if kind != "cosine":
        raise ValueError(f"unknown schedule kind {kind!r}")
    if not 0.0 < terminal_decay <= _MAX_TERMINAL_DECAY:
        raise ValueError(
            f"terminal_decay must be in (0, {_MAX_TERMINAL_DECAY}], got {terminal_decay}"
        )
    t = np.arange(T + 1, dtype=np.float64)
    shape = np.cos(0.5 * np.pi * t / T) ** 2
    s = terminal_decay + (1.0 - terminal_decay) * shape
    theta_bar = -0.5 * np.log(s)
    theta_bar[0] = 0.0
    return NoiseSchedule(T=int(T), lam=float(lam), theta_bar=theta_bar, kind=kind,
                         terminal_decay=float(terminal_decay))


def _check_same_shape(*fields) -> tuple:
    shapes = {np.shape(f) for f in fields}
    if len(shapes) > 1:
        raise DimensionError(f"fields must share one shape, got {sorted(shapes)}")
    return shapes.pop()


def forward_marginal(x0, mu, t: int, sched: NoiseSchedule, rng: np.random.Generator):
    """Sample x_t from the closed-form forward marginal.

    Returns ``(x_t, eps)`` where eps is the exact standard-normal draw used,
    so callers can replay or invert the step.  At t = 0 the state is x0
    itself and eps is zero.
    """
    shape = _check_same_shape(x0, mu)
    t = sched._check_step(t)
    x0 = np.asarray(x0, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if t == 0:
        return x0.copy(), np.zeros(shape)
    eps = rng.standard_normal(shape)
    x_t = mu + (x0 - mu) * sched.decay[t] + math.sqrt(sched.v[t]) * eps
    return x_t, eps


def estimate_x0(x_t, mu, eps_hat, t: int, sched: NoiseSchedule,
                clamp: tuple[float, float] | None = (-0.1, 1.1)):
    """Invert the forward marginal given a noise estimate.

    ``x0_hat = e^{theta_bar(t)} (x_t - mu - sqrt(v_t) eps_hat) + mu``,
    optionally clipped to ``clamp``.  Pass ``clamp=None`` when operating on
    values that are not image intensities (e.g. wavelet coefficients).
    """
    _check_same_shape(x_t, mu, eps_hat)
    t = sched._check_step(t, lo=1)
    x_t = np.asarray(x_t, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    x0_hat = (x_t - mu - math.sqrt(sched.v[t]) * eps_hat) / sched.decay[t] + mu
    if clamp is not None:
        x0_hat = np.clip(x0_hat, clamp[0], clamp[1])
    return x0_hat


def posterior_mean(x_t, x0, mu, t: int, sched: NoiseSchedule):
    _check_same_shape(x_t, x0, mu)
    c1, c2, _ = sched.posterior_coeffs(t)
    x_t = np.asarray(x_t, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    return c1 * (x_t - mu) + c2 * (x0 - mu) + mu


def posterior_step(x_t, x0_hat, mu, t: int, sched: NoiseSchedule,
                   rng: np.random.Generator):
    """Draw x_{t-1} from the Gaussian posterior given x_t and an x0 estimate.

    The variance ``lam^2 * beta_tilde(t)`` vanishes at t = 1, where the step
    collapses deterministically to ``x0_hat``.
    """
    mean = posterior_mean(x_t, x0_hat, mu, t, sched)
    _, _, beta_tilde = sched.posterior_coeffs(t)
    var = sched.lam ** 2 * beta_tilde
    if var > 0.0:
        mean = mean + math.sqrt(var) * rng.standard_normal(np.shape(mean))
    return mean


def optimal_reverse(x_t, x0, mu, t: int, sched: NoiseSchedule):
    """Deterministic optimal reverse state given the true clean field:
    identical to the posterior mean evaluated at the exact x0."""
    return posterior_mean(x_t, x0, mu, t, sched)
