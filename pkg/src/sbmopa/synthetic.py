"""Deterministic SYNTHETIC panels for examples and tests.

The generated numbers are not observations of any real unit. Marginals are
lognormal with means and spreads in the range of a provincial industry
panel; a common size factor makes the columns positively correlated, and
energy use and CO2 share an extra factor.
"""

from __future__ import annotations

import math

import numpy as np

from .delta_sbm import DmuPanel

# name: (role, unit, mean, std, lower clip, upper clip, loading on size)
SCHEMA = {
    "L": ("input", "10^4 persons", 265.0, 295.0, 11.5, 1355.0, 0.85),
    "K": ("input", "100 million RMB", 12600.0, 8350.0, 1390.0, 35800.0, 0.80),
    "T": ("input", "100 million RMB", 580.0, 727.0, 13.8, 2905.0, 0.75),
    "E": ("input", "10^6 tons", 32.8, 24.6, 0.6, 113.5, 0.55),
    "Y": ("output", "100 million RMB", 43800.0, 41100.0, 2676.0, 173650.0, 0.90),
    "C": ("output", "10^6 tons", 90.0, 69.6, 1.3, 324.0, 0.55),
}
ENERGY_LINKED = ("E", "C")


def synthetic_panel(n: int = 30, seed: int = 2021) -> DmuPanel:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    size = rng.standard_normal(n)
    energy = rng.standard_normal(n)
    cols = {}
    for name, (_, _, mean, std, lo, hi, load) in SCHEMA.items():
        s2 = math.log(1.0 + (std / mean) ** 2)
        mu = math.log(mean) - s2 / 2
        noise = rng.standard_normal(n)
        if name in ENERGY_LINKED:
            z = load * size + 0.6 * energy + math.sqrt(max(1 - load**2 - 0.36, 0.0)) * noise
        else:
            z = load * size + math.sqrt(1 - load**2) * noise
        cols[name] = np.round(np.clip(np.exp(mu + math.sqrt(s2) * z), lo, hi), 2)
    inputs = tuple(k for k, v in SCHEMA.items() if v[0] == "input")
    outputs = tuple(k for k, v in SCHEMA.items() if v[0] == "output")
    width = len(str(n))
    ids = tuple(f"D{i + 1:0{max(width, 2)}d}" for i in range(n))
    X = np.column_stack([cols[k] for k in inputs])
    Y = np.column_stack([cols[k] for k in outputs])
    return DmuPanel(ids, inputs, outputs, X, Y, {k: v[1] for k, v in SCHEMA.items()})


def panel_csv(panel: DmuPanel) -> str:
    lines = [
        "# SYNTHETIC DATA generated by sbmopa.synthetic; not real observations.",
        "dmu_id," + ",".join(panel.variables),
    ]
    for i, dmu in enumerate(panel.dmu_ids):
        vals = list(panel.X[i]) + list(panel.Y[i])
        lines.append(dmu + "," + ",".join(f"{v:.2f}" for v in vals))
    return "\n".join(lines) + "\n"


def roles_json(panel: DmuPanel) -> dict:
    return {
        "variables": [
            {"name": v, "role": "input" if v in panel.inputs else "output", "unit": panel.units.get(v, "")}
            for v in panel.variables
        ]
    }
