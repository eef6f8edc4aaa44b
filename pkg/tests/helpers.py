"""Shared generators for the test suite."""

import numpy as np

from evload.loadmodels import RationalTF
from evload.vfit import FreqResponse


def random_stable_tf(rng, order: int, w_lo: float = 1.0, w_hi: float = 1e3, min_sep: float = 0.3) -> RationalTF:
    """Random stable rational function with real coefficients.

    Pole magnitudes are log-uniform in [w_lo, w_hi]; any two poles are at
    least ``min_sep`` apart in log10 magnitude so that they are resolvable
    from samples.  Damping ratios lie in [0.1, 0.9].
    """
    n_pairs = int(rng.integers(0, order // 2 + 1))
    n_real = order - 2 * n_pairs
    n = n_pairs + n_real
    while True:
        mags = np.sort(rng.uniform(np.log10(w_lo), np.log10(w_hi), n))
        if n < 2 or np.min(np.diff(mags)) >= min_sep:
            break
    mags = 10.0 ** rng.permutation(mags)
    poles, res = [], []
    for k in range(n):
        c_mag = mags[k] * rng.uniform(0.3, 3.0)
        if k < n_pairs:
            zeta = rng.uniform(0.1, 0.9)
            a = mags[k] * complex(-zeta, np.sqrt(1 - zeta**2))
            c = c_mag * np.exp(1j * rng.uniform(-np.pi, np.pi))
            poles += [a, np.conj(a)]
            res += [c, np.conj(c)]
        else:
            poles.append(complex(-mags[k], 0.0))
            res.append(complex(c_mag * rng.choice([-1.0, 1.0]), 0.0))
    return RationalTF(np.array(poles), np.array(res))


def sample(tf: RationalTF, w_lo: float = 0.1, w_hi: float = 1e4, n: int = 200) -> FreqResponse:
    w = np.logspace(np.log10(w_lo), np.log10(w_hi), n)
    return FreqResponse(w, tf(1j * w))


def match_poles(true: RationalTF, fit: RationalTF):
    """Max relative pole and residue errors after nearest-neighbour matching."""
    used = set()
    pe, re = 0.0, 0.0
    for a, c in zip(true.poles, true.residues):
        d = np.abs(fit.poles - a)
        for k in used:
            d[k] = np.inf
        k = int(np.argmin(d))
        used.add(k)
        pe = max(pe, abs(fit.poles[k] - a) / abs(a))
        re = max(re, abs(fit.residues[k] - c) / abs(c))
    return pe, re


# criterion number -> list of (sub-check, passed, detail); printed by conftest
ACCEPTANCE: dict = {}


def record(criterion: int, check: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((check, bool(passed), detail))
    print(f"criterion {criterion} [{check}]: {'PASS' if passed else 'FAIL'} {detail}")
    return bool(passed)
