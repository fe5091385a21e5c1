"""Named generators for experiment inputs: modulus families, coefficient
fields, thin forcing data f, and divergence forcings F.

Every generator is referenced by (name, params) from experiment configs, so
runs are reproducible from the config alone; anything random is a fixed
finite Fourier sum drawn from a seeded generator, which keeps the data a
closed-form function (stable under grid refinement).
"""

from __future__ import annotations

import math

import numpy as np

from .kernels import FracParams
from .moduli import ModulusOfContinuity
from .extension import CoefficientField

__all__ = [
    "modulus_generator",
    "coefficient_generator",
    "thin_data_generator",
    "vector_data_generator",
    "critical_power_exponent",
]

_EPS_FLOOR = 1e-300


def critical_power_exponent(s: float, n: int) -> float:
    """Decay rate theta of |x|^-theta sitting at the scaling-critical
    Lorentz index (n+2)/(2s-1): theta = n (2s-1)/(n+2)."""
    return n * (2.0 * s - 1.0) / (n + 2.0)


def modulus_generator(name: str, **params) -> ModulusOfContinuity:
    """Modulus families:

    zero          0
    lipschitz     L r
    log_dini      L r log(e/r)        (Dini, not Lipschitz)
    inv_log_sq    c / log(e/r)^2      (Dini, not Hoelder)
    power         c r^alpha
    constant      c                   (not a modulus; divergence probes)
    """
    L = params.get("L", 1.0)
    c = params.get("c", 1.0)
    alpha = params.get("alpha", 0.5)
    if name == "zero":
        fn = lambda r: 0.0 * np.asarray(r, dtype=float)
    elif name == "lipschitz":
        fn = lambda r: L * np.asarray(r, dtype=float)
    elif name == "log_dini":
        fn = lambda r: np.where(
            np.asarray(r) > 0,
            L * np.asarray(r, dtype=float)
            * np.log(np.e / np.maximum(r, _EPS_FLOOR)), 0.0)
    elif name == "inv_log_sq":
        fn = lambda r: np.where(
            np.asarray(r) > 0,
            c * np.log(np.e / np.maximum(r, _EPS_FLOOR)) ** -2.0, 0.0)
    elif name == "power":
        fn = lambda r: c * np.asarray(r, dtype=float) ** alpha
    elif name == "constant":
        fn = lambda r: c * np.ones_like(np.asarray(r, dtype=float))
    else:
        raise KeyError(f"unknown modulus generator '{name}'")
    return ModulusOfContinuity.from_callable(fn, name=name)


def _bump_profile(modulus, eps):
    def eta(r):
        return eps * np.asarray(modulus(np.minimum(np.abs(r), 1.0)),
                                dtype=float)
    return eta


def coefficient_generator(name: str, n: int = 1, **params) -> CoefficientField:
    """Coefficient families:

    identity       A = I
    dini_bump      A = I + eps eta(|x|) M, eta from a modulus family
    checkerboard   A = I + eps * smoothed checkerboard * M
    """
    eps = params.get("eps", 0.1)
    if name == "identity":
        return CoefficientField.identity(n)

    M = np.asarray(params.get("M", np.eye(n)), dtype=float).reshape(n, n)
    if np.max(np.abs(M - np.diag(np.diag(M)))) > 1e-14:
        raise ValueError("desk-scale coefficients are diagonal")
    m_norm = float(np.max(np.abs(np.diag(M))))

    if name == "dini_bump":
        mod = modulus_generator(params.get("modulus", "log_dini"),
                                **params.get("modulus_params", {}))
        eta = _bump_profile(mod, eps)

        def fn(x):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            r = np.linalg.norm(x, axis=1)
            return np.eye(n)[None] + eta(r)[:, None, None] * M[None]

        osc = ModulusOfContinuity.from_callable(
            lambda r: 2.0 * eps * m_norm
            * np.asarray(mod(np.minimum(r, 1.0)), dtype=float),
            name=f"osc_{name}")
        amp = eps * m_norm * float(mod(1.0))
        return CoefficientField(fn=fn, n=n, lam_ell=1.0 - amp,
                                Lam_ell=1.0 + amp, modulus=osc,
                                name=name)

    if name == "checkerboard":
        k = params.get("waves", 3.0)

        def fn(x):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            pattern = np.prod(np.sin(math.pi * k * x), axis=1)
            return np.eye(n)[None] + eps * pattern[:, None, None] * M[None]

        osc = ModulusOfContinuity.from_callable(
            lambda r: 2.0 * eps * m_norm
            * np.minimum(math.pi * k * np.asarray(r, dtype=float), 1.0),
            name=f"osc_{name}")
        return CoefficientField(fn=fn, n=n, lam_ell=1.0 - eps * m_norm,
                                Lam_ell=1.0 + eps * m_norm, modulus=osc,
                                name=name)

    raise KeyError(f"unknown coefficient generator '{name}'")


def thin_data_generator(name: str, p: FracParams | None = None, **params):
    """Forcing families on the thin space, as callables f(t, x...):

    zero, constant(c), cosine(amp, xi), indicator(amp, r0),
    truncated_power(amp, trunc, theta = critical), random_fourier(seed,
    modes, amp), exp_time(scale).
    """
    n = p.n if p is not None else params.get("n", 1)
    amp = params.get("amp", 1.0)
    if name == "zero":
        return lambda t, *x: 0.0 * np.asarray(t, dtype=float)
    if name == "constant":
        c = params.get("c", 1.0)
        return lambda t, *x: c + 0.0 * np.asarray(t, dtype=float)
    if name == "cosine":
        xi = params.get("xi", 1.0)
        return lambda t, *x: amp * np.cos(xi * x[0]) + 0.0 * np.asarray(t)
    if name == "indicator":
        r0 = params.get("r0", 0.25)

        def f(t, *x):
            r = np.sqrt(sum(np.asarray(xd, dtype=float) ** 2 for xd in x))
            return amp * ((r < r0) & (np.abs(np.asarray(t)) < r0 ** 2))
        return f
    if name == "truncated_power":
        theta = params.get("theta")
        if theta is None:
            if p is None:
                raise ValueError("truncated_power needs theta or FracParams")
            theta = critical_power_exponent(p.s, n)
        trunc = params.get("trunc", 0.02)

        def f(t, *x):
            r = np.sqrt(sum(np.asarray(xd, dtype=float) ** 2 for xd in x))
            return amp * np.maximum(r, trunc) ** -theta \
                + 0.0 * np.asarray(t, dtype=float)
        return f
    if name == "random_fourier":
        seed = params.get("seed", 0)
        modes = params.get("modes", 4)
        rng = np.random.default_rng(seed)
        coefs = rng.normal(scale=amp, size=modes)
        oms = rng.integers(1, 5, size=modes)
        nus = rng.integers(0, 4, size=modes)
        phs = rng.uniform(0, 2 * math.pi, size=(2, modes))

        def f(t, *x):
            t = np.asarray(t, dtype=float)
            out = 0.0
            for k in range(modes):
                sp = np.cos(oms[k] * math.pi * x[0] + phs[0, k])
                out = out + coefs[k] * sp * np.cos(nus[k] * t + phs[1, k])
            return out
        return f
    if name == "exp_time":
        scale = params.get("scale", 1.0)
        return lambda t, *x: scale * np.exp(np.asarray(t, dtype=float)) \
            + 0.0 * np.asarray(x[0])
    raise KeyError(f"unknown thin data generator '{name}'")


def vector_data_generator(name: str, n: int = 1, **params):
    """Divergence-forcing families, as callables returning the n tangential
    components (the normal component is identically zero)."""
    amp = params.get("amp", 1.0)
    if name == "zero":
        return lambda t, *x: tuple(0.0 * np.asarray(t, dtype=float)
                                   for _ in range(n))
    if name == "cosine":
        xi = params.get("xi", 2.0)

        def F(t, *x):
            base = amp * np.sin(xi * x[0]) + 0.0 * np.asarray(t)
            return tuple(base if d == 0 else 0.0 * base for d in range(n))
        return F
    if name == "random_fourier":
        seed = params.get("seed", 0)
        comps = [thin_data_generator("random_fourier", n=n, seed=seed + 31 * d,
                                     amp=amp, modes=params.get("modes", 3))
                 for d in range(n)]

        def F(t, *x):
            return tuple(c(t, *x) for c in comps)
        return F
    raise KeyError(f"unknown vector data generator '{name}'")
