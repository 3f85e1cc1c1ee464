"""Shared test helpers."""

import numpy as np

from plugpull import dynamics as dyn


def random_states(rng, n, chart):
    """In-envelope states: |phi|, |theta| < 50 deg, arm within +-60 deg."""
    out = []
    for _ in range(n):
        eta = np.array([rng.uniform(-0.87, 0.87), rng.uniform(-0.87, 0.87),
                        rng.uniform(-np.pi, np.pi)])
        gamma = rng.uniform(-1.0, 1.0, 2)
        eta_dot = rng.normal(scale=1.0, size=3)
        gamma_dot = rng.normal(scale=1.0, size=2)
        if chart == dyn.FREE:
            p = rng.uniform(-1, 1, 3)
            p_dot = rng.normal(size=3)
            out.append((np.concatenate([p, eta, gamma]), np.concatenate([p_dot, eta_dot, gamma_dot])))
        else:
            out.append((np.concatenate([eta, gamma]), np.concatenate([eta_dot, gamma_dot])))
    return out
