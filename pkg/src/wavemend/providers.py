"""Noise-prediction providers with one shared interface.

A provider maps ``(state, condition, step, plane)`` to a predicted noise
field of the same shape as the state.  Prediction is deterministic; every
stochastic choice lives in the sampler.  Three families are implemented
here: an exact-inversion oracle that knows the clean volume, a record /
replay pair for deterministic round-trip harnesses, and the analytic score
of an i.i.d. Gaussian prior.  The trainable provider lives in
:mod:`wavemend.denoiser`.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .sde import NoiseSchedule
from .volume import Plane, Volume
from .wavelet import _dwt2_raw, dwt2, stack_subbands


class NoiseProvider:
    """Base interface.  ``index`` identifies the slice within the plane; it
    is required by providers backed by per-slice stores and ignored by the
    rest."""

    def predict(self, x, mu, t: int, plane: Plane, index: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def predict_batch(self, xs, mus, t: int, plane: Plane, indices) -> np.ndarray:
        out = [
            self.predict(xs[k], mus[k], t, plane, index=int(indices[k]))
            for k in range(len(indices))
        ]
        return np.stack(out, axis=0)


class NoiseStore:
    """Per-(step, plane, slice) noise fields, keyed exactly."""

    def __init__(self):
        self._data: dict[tuple[int, Plane, int], np.ndarray] = {}

    def record(self, t: int, plane: Plane, index: int, eps: np.ndarray) -> None:
        self._data[(int(t), plane, int(index))] = np.array(eps, dtype=np.float64)

    def get(self, t: int, plane: Plane, index: int) -> np.ndarray:
        key = (int(t), plane, int(index))
        if key not in self._data:
            raise LookupError(
                f"no recorded noise for step {key[0]}, plane {plane.name}, slice {key[2]}"
            )
        return self._data[key]

    def __contains__(self, key) -> bool:
        t, plane, index = key
        return (int(t), plane, int(index)) in self._data

    def __len__(self) -> int:
        return len(self._data)


class ReplayProvider(NoiseProvider):
    """Returns previously recorded noise; unknown keys raise, never zero."""

    def __init__(self, store: NoiseStore):
        self.store = store

    def predict(self, x, mu, t, plane, index=None):
        if index is None:
            raise ValueError("ReplayProvider requires the slice index")
        eps = self.store.get(t, plane, index)
        if eps.shape != np.shape(x):
            raise DimensionError(
                f"recorded noise shape {eps.shape} != state shape {np.shape(x)}"
            )
        return eps.copy()


def oracle_provider(store: NoiseStore) -> ReplayProvider:
    """Provider that replays the store's recorded noise verbatim."""
    return ReplayProvider(store)


class RecordingProvider(NoiseProvider):
    """Wraps another provider and records everything it returns."""

    def __init__(self, inner: NoiseProvider, store: NoiseStore):
        self.inner = inner
        self.store = store

    def predict(self, x, mu, t, plane, index=None):
        if index is None:
            raise ValueError("RecordingProvider requires the slice index")
        eps = self.inner.predict(x, mu, t, plane, index=index)
        self.store.record(t, plane, index, eps)
        return eps


class ExactInversionProvider(NoiseProvider):
    """Chain-exact noise computed from the known clean volume.

    For the current state x at step t the returned field is the unique eps
    with ``x = mu + (x0 - mu) e^{-tb(t)} + sqrt(v_t) eps``, so the clean-
    state estimator recovers x0 exactly at every step and the reverse chain
    terminates on the clean volume regardless of the stochastic path.
    """

    def __init__(self, clean: Volume, sched: NoiseSchedule, wavelet_domain: bool = True):
        self.clean = clean
        self.sched = sched
        self.wavelet_domain = wavelet_domain
        self._cache: dict[Plane, np.ndarray] = {}

    def _clean_slices(self, plane: Plane) -> np.ndarray:
        if plane not in self._cache:
            data = self.clean.data.astype(np.float64)
            imgs = np.moveaxis(data, 2 if plane is Plane.XY else 1, 0)
            if self.wavelet_domain:
                self._cache[plane] = np.stack(_dwt2_raw(imgs), axis=1)
            else:
                self._cache[plane] = imgs[:, None, :, :]
            self._cache[plane].setflags(write=False)
        return self._cache[plane]

    def _target(self, plane: Plane, index: int, shape) -> np.ndarray:
        x0 = self._clean_slices(plane)[index]
        if self.wavelet_domain and len(shape) == 3:
            pass
        elif not self.wavelet_domain and len(shape) == 2:
            x0 = x0[0]
        if x0.shape != tuple(shape):
            raise DimensionError(
                f"clean slice shape {x0.shape} != state shape {tuple(shape)}"
            )
        return x0

    def predict(self, x, mu, t, plane, index=None):
        if index is None:
            raise ValueError("ExactInversionProvider requires the slice index")
        x = np.asarray(x, dtype=np.float64)
        mu = np.asarray(mu, dtype=np.float64)
        x0 = self._target(plane, int(index), x.shape)
        t = self.sched._check_step(t, lo=1)
        a = self.sched.decay[t]
        return (x - mu - a * (x0 - mu)) / np.sqrt(self.sched.v[t])


class GaussianScoreProvider(NoiseProvider):
    """Analytic score for data whose pixels are i.i.d. N(mean, var).

    The marginal at step t is N(mu + (mean - mu) a_t, var a_t^2 + v_t) per
    pixel, whose score is linear; the provider returns the equivalent noise
    prediction ``eps_hat = -sqrt(v_t) * score``.  In wavelet mode the prior
    mean field is expressed in subband coordinates (a constant image mean m
    becomes 2m on LL and 0 on the detail bands).
    """

    def __init__(self, mean, var: float, sched: NoiseSchedule, wavelet_domain: bool = True):
        if var < 0:
            raise ValueError(f"prior variance must be >= 0, got {var}")
        self.mean = mean
        self.var = float(var)
        self.sched = sched
        self.wavelet_domain = wavelet_domain
        self._mean_fields: dict[tuple, np.ndarray] = {}

    def _mean_field(self, shape) -> np.ndarray:
        key = tuple(shape)
        if key not in self._mean_fields:
            if self.wavelet_domain:
                if len(shape) != 3 or shape[0] != 4:
                    raise DimensionError(
                        f"wavelet-domain state must be a (4, h, w) stack, got {key}"
                    )
                field = np.zeros(shape)
                if np.isscalar(self.mean):
                    field[0] = 2.0 * self.mean
                else:
                    mean = np.asarray(self.mean, dtype=np.float64)
                    if mean.shape != (2 * shape[1], 2 * shape[2]):
                        raise DimensionError(
                            f"mean field shape {mean.shape} incompatible with stack {key}"
                        )
                    field = stack_subbands(dwt2(mean))
            else:
                field = np.broadcast_to(np.asarray(self.mean, dtype=np.float64), shape).copy()
            field.setflags(write=False)
            self._mean_fields[key] = field
        return self._mean_fields[key]

    def predict(self, x, mu, t, plane, index=None):
        x = np.asarray(x, dtype=np.float64)
        mu = np.asarray(mu, dtype=np.float64)
        t = self.sched._check_step(t, lo=1)
        a = self.sched.decay[t]
        v_t = self.sched.v[t]
        m = self._mean_field(x.shape)
        marginal_mean = mu + (m - mu) * a
        marginal_var = self.var * a * a + v_t
        return np.sqrt(v_t) * (x - marginal_mean) / marginal_var
