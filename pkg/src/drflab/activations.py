"""Elementwise activation functions for the feature maps.

Only odd activations with bounded derivative are supported: the
surrogate construction matches first and second Gaussian moments, and
that matching is exact only for centered (odd) nonlinearities.  ReLU,
sigmoid and friends are rejected at construction.
"""

import numpy as np

__all__ = ["Activation", "tanh", "erf", "linear", "scaled_odd", "custom"]

_ODD_GRID = np.linspace(0.1, 8.0, 80)
_FAR_GRID = np.linspace(300.0, 1000.0, 36)
_NEAR_GRID = np.linspace(0.0, 20.0, 201)


class Activation:
    """An odd scalar nonlinearity with its derivative.

    Parameters
    ----------
    name : str
        Display name.
    f, df : callable
        Vectorized value and derivative.
    kind : str
        One of ``tanh``, ``erf``, ``linear``, ``scaled-odd``, ``custom``.
    """

    def __init__(self, name, f, df, kind):
        self.name = name
        self.f = f
        self.df = df
        self.kind = kind
        self._validate()

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float))

    def deriv(self, x):
        return self.df(np.asarray(x, dtype=float))

    def __repr__(self):
        return f"Activation({self.name!r})"

    def _validate(self):
        fv = self.f(_ODD_GRID)
        scale = max(np.max(np.abs(fv)), 1e-12)
        odd_err = np.max(np.abs(self.f(-_ODD_GRID) + fv))
        if odd_err > 1e-9 * scale:
            raise ValueError(
                f"activation {self.name!r} is not odd "
                f"(max |f(-x)+f(x)| = {odd_err:.3e} on the test grid)"
            )
        d_near = np.max(np.abs(self.df(_NEAR_GRID)))
        d_far = np.max(np.abs(self.df(_FAR_GRID)))
        if not np.isfinite(d_far) or d_far > d_near * (1 + 1e-6) + 1e-12:
            raise ValueError(
                f"activation {self.name!r} has a growing derivative "
                f"(|f'| reaches {d_far:.3e} far from the origin)"
            )


def tanh():
    return Activation("tanh", np.tanh, lambda x: 1.0 - np.tanh(x) ** 2, "tanh")


def erf():
    from scipy.special import erf as _erf

    c = 2.0 / np.sqrt(np.pi)
    return Activation("erf", _erf, lambda x: c * np.exp(-(x**2)), "erf")


def linear():
    return Activation("linear", lambda x: x, lambda x: np.ones_like(x), "linear")


def scaled_odd(inner, outer=1.0, base="tanh"):
    """outer * base(inner * x) for an odd base function."""
    if base == "tanh":
        bf, bdf = np.tanh, lambda x: 1.0 - np.tanh(x) ** 2
    elif base == "erf":
        from scipy.special import erf as _erf

        bf = _erf
        c = 2.0 / np.sqrt(np.pi)
        bdf = lambda x: c * np.exp(-(x**2))
    else:
        raise ValueError(f"unknown base {base!r}; use 'tanh' or 'erf'")
    name = f"{outer:g}*{base}({inner:g}x)"
    return Activation(
        name,
        lambda x: outer * bf(inner * x),
        lambda x: outer * inner * bdf(inner * x),
        "scaled-odd",
    )


def custom(name, f, df):
    """Wrap user callables; oddness and bounded derivative are enforced."""
    return Activation(name, f, df, "custom")
