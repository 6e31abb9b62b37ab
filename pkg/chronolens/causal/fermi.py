import logging
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from chronolens.exceptions import OutOfChart, OutOfDomain
from chronolens.causal.observers import worldline
from chronolens.geodesics.engine import integrate_geodesic, REACHED_PARAM
from chronolens.metrics.catalog import metric_family
from chronolens.metrics.geometry import christoffel_unchecked, companion_unchecked

logger = logging.getLogger('causal.fermi')


class ParallelFrame:
    """
    A spatial frame Z₂..Zₙ parallel transported along an observer worldline, orthonormal and orthogonal to μ'.

    :param spec: :class:`~chronolens.metrics.catalog.MetricSpec`
    :param observer: :class:`~chronolens.causal.observers.ObserverSpec`
    """

    def __init__(self, spec, observer):
        self.spec = spec
        self.observer = observer
        family = metric_family(spec)
        n = spec.dim
        z = np.array(observer.z)
        eta = np.array(observer.eta)
        g = family.components(z)
        frame = []
        for a in range(1, n):
            v = np.eye(n)[a] + (eta @ g @ np.eye(n)[a]) * eta
            for b in frame:
                v = v - (b @ g @ v) * b
            frame.append(v / np.sqrt(v @ g @ v))
        y0 = np.concatenate([z, eta, np.ravel(frame)])
        line = worldline(spec, observer)

        def rhs(_, y):
            x = family.clamp(y[:n])
            v = y[n:2 * n]
            vectors = y[2 * n:].reshape(n - 1, n)
            gamma = christoffel_unchecked(family, x)
            acceleration = -np.einsum('kij,i,j->k', gamma, v, v)
            transport = -np.einsum('kij,i,aj->ak', gamma, v, vectors)
            return np.concatenate([v, acceleration, transport.ravel()])

        self.forward = solve_ivp(rhs, (observer.s_ref, line.s_b), y0, rtol=1e-11, atol=1e-11, dense_output=True) \
            if line.s_b > observer.s_ref else None
        self.backward = solve_ivp(rhs, (observer.s_ref, line.s_a), y0, rtol=1e-11, atol=1e-11, dense_output=True) \
            if line.s_a < observer.s_ref else None
        self._y0 = y0

    def vectors(self, s):
        """
        :return: (n-1, n) array of the frame vectors at μ(s)
        """
        n = self.spec.dim
        if s > self.observer.s_ref and self.forward is not None:
            y = self.forward.sol(s)
        elif s < self.observer.s_ref and self.backward is not None:
            y = self.backward.sol(s)
        else:
            y = self._y0
        return y[2 * n:].reshape(n - 1, n)


@lru_cache(maxsize=256)
def parallel_frame(spec, observer):
    return ParallelFrame(spec, observer)


def fermi_map(spec, observer, t):
    """
    Φ(t₁, ..., tₙ) = exp_{μ(t₁)}(Σ_{j≥2} t_j Z_j(t₁)), the Fermi-type coordinates of an observer.

    :raises OutOfDomain: if the spatial geodesic leaves the chart
    """
    t = np.asarray(t, dtype=float)
    line = worldline(spec, observer)
    base = line.position(t[0])
    w = t[1:] @ parallel_frame(spec, observer).vectors(t[0])
    if not np.any(w):
        return metric_family(spec).wrap(base)
    segment = integrate_geodesic(spec, metric_family(spec).wrap(base), w, 1., tol=1e-12)
    if segment.termination != REACHED_PARAM:
        raise OutOfDomain(segment.x[-1].tolist(), list(spec.domain))
    return metric_family(spec).wrap(segment.x[-1])


def fermi_chart(spec, observer, e, tol=1e-10, max_iter=50):
    """
    Inverts the Fermi map by Newton iteration, seeded from the flat space closed form.

    :param spec: :class:`~chronolens.metrics.catalog.MetricSpec`
    :param observer: :class:`~chronolens.causal.observers.ObserverSpec`
    :param e: event
    :return: Fermi coordinates (t₁, ..., tₙ)
    :raises OutOfChart: if Newton does not converge in `max_iter` iterations
    """
    family = metric_family(spec)
    e = np.asarray(e, dtype=float)
    n = spec.dim
    z = np.array(observer.z)
    eta = np.array(observer.eta)
    g = family.components(z)
    d = family.difference(e, z)
    frame = parallel_frame(spec, observer).vectors(observer.s_ref)
    t = np.concatenate([[observer.s_ref - eta @ g @ d], frame @ g @ d])
    chol = np.linalg.cholesky(companion_unchecked(family.components(e))).T

    def residual(t):
        return chol @ family.difference(fermi_map(spec, observer, t), e)

    try:
        r = residual(t)
        for iteration in range(max_iter):
            if np.linalg.norm(r) < tol:
                return t
            jacobian = np.empty((n, n))
            for j in range(n):
                step = 1e-7 * (1. + abs(t[j]))
                shift = np.eye(n)[j] * step
                jacobian[:, j] = (residual(t + shift) - residual(t - shift)) / (2. * step)
            t = t - np.linalg.solve(jacobian, r)
            r = residual(t)
        if np.linalg.norm(r) < tol:
            return t
    except (OutOfDomain, np.linalg.LinAlgError) as exception:
        raise OutOfChart("Fermi chart of observer {} does not reach {}: {}".format(observer.id, e.tolist(),
                                                                                  exception))
    raise OutOfChart("Fermi chart inversion for {} did not converge in {} iterations (residual {:.3g})".format(
        e.tolist(), max_iter, np.linalg.norm(r)))
