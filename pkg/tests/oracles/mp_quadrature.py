"""Marchenko-Pastur Stieltjes transform values by direct quadrature.

S(z) = integral rho_beta(x) / (x - z) dx with rho_beta the MP density of
W W^T / p_prev for aspect ratio beta = p / p_prev (plus an atom of mass
max(0, 1 - 1/beta) at zero when beta > 1).  Used to pin the closed-form
transform and the recursive fixed point at level one.

Run:  python tests/oracles/mp_quadrature.py
Output: tests/oracles/frozen/mp_quadrature.json
"""

import json
import os

import numpy as np
from scipy import integrate


def mp_stieltjes_quad(z, beta):
    lo = (1 - np.sqrt(beta)) ** 2
    hi = (1 + np.sqrt(beta)) ** 2

    def dens(x):
        return np.sqrt(max((hi - x) * (x - lo), 0.0)) / (2 * np.pi * beta * x)

    re, _ = integrate.quad(lambda x: dens(x) * ((x - z.real) / abs(x - z) ** 2),
                           lo, hi, limit=800)
    im, _ = integrate.quad(lambda x: dens(x) * (z.imag / abs(x - z) ** 2),
                           lo, hi, limit=800)
    val = re + 1j * im
    if beta > 1:
        val += (1 - 1 / beta) * (1 / (0 - z))
    return val


def main():
    out = {}
    for beta in (0.25, 1.0, 2.0):
        for z in (-1.0 + 1e-6j, 0.5 + 0.3j, 2.0 + 0.01j, -0.2 + 1.0j):
            key = f"beta{beta}_z{z.real}_{z.imag}"
            v = mp_stieltjes_quad(z, beta)
            out[key] = {"beta": beta, "z": [z.real, z.imag],
                        "S": [v.real, v.imag]}
            print(key, v, flush=True)
    path = os.path.join(os.path.dirname(__file__), "frozen", "mp_quadrature.json")
    with open(path, "w") as f:
        json.dump(out, f, indent=1)


if __name__ == "__main__":
    main()
