"""Fossil-fuel CO2 accounting: CE = sum_i E_i * NCV_i * CEF_i * COF_i * 44/12."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

CO2_PER_C = 44.0 / 12.0

FUELS = (
    "hard_coal",
    "coke",
    "crude_oil",
    "petrol",
    "kerosene",
    "diesel",
    "heating_oil",
    "natural_gas",
)


class EmissionsError(ValueError):
    pass


@dataclass(frozen=True)
class FuelFactor:
    fuel: str
    ncv: float  # lower heating value per physical unit
    cef: float  # carbon content per unit of heat
    cof: float  # oxidation rate, fraction

    def __post_init__(self):
        for label, val in (("ncv", self.ncv), ("cef", self.cef), ("cof", self.cof)):
            if not math.isfinite(val) or val < 0:
                raise EmissionsError(f"{self.fuel}: {label} must be finite and >= 0, got {val!r}")
        if self.cof > 1:
            raise EmissionsError(f"{self.fuel}: oxidation rate {self.cof} exceeds 1")

    @property
    def co2_per_unit(self) -> float:
        return self.ncv * self.cef * self.cof * CO2_PER_C


@dataclass(frozen=True)
class EmissionResult:
    per_fuel: dict[str, float]
    total: float
    units: str = "consumption unit x NCV unit x CEF unit, as CO2"


def compute_co2(consumption: Mapping[str, float], factors: Mapping[str, FuelFactor]) -> EmissionResult:
    per_fuel = {}
    for fuel, e in consumption.items():
        if fuel not in factors:
            raise EmissionsError(f"no emission factor for fuel {fuel!r}")
        if not math.isfinite(e) or e < 0:
            raise EmissionsError(f"consumption of {fuel!r} must be finite and >= 0, got {e!r}")
        f = factors[fuel]
        per_fuel[fuel] = e * f.ncv * f.cef * f.cof * CO2_PER_C
    return EmissionResult(per_fuel, math.fsum(per_fuel.values()))


def read_factors(path: str | Path) -> dict[str, FuelFactor]:
    """Factor CSV with header ``fuel,ncv,cef,cof``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"fuel", "ncv", "cef", "cof"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise EmissionsError(f"{path}: factor CSV needs columns {sorted(need)}")
        out = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                f = FuelFactor(row["fuel"].strip(), float(row["ncv"]), float(row["cef"]), float(row["cof"]))
            except ValueError as exc:
                raise EmissionsError(f"{path}:{lineno}: {exc}") from exc
            out[f.fuel] = f
    return out


def default_factors() -> dict[str, FuelFactor]:
    """Placeholder factors shipped with the package; replace with real values."""
    ref = resources.files("sbmopa") / "data" / "fuel_factors_placeholder.csv"
    with resources.as_file(ref) as p:
        return read_factors(p)


def read_consumption(path: str | Path) -> dict[str, dict[str, float]]:
    """Consumption CSV ``dmu_id,<fuel>...`` -> {dmu: {fuel: E}}."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[0] != "dmu_id":
            raise EmissionsError(f"{path}: first column must be dmu_id")
        fuels = reader.fieldnames[1:]
        out = {}
        for lineno, row in enumerate(reader, start=2):
            vals = {}
            for fuel in fuels:
                try:
                    vals[fuel] = float(row[fuel])
                except (TypeError, ValueError):
                    raise EmissionsError(f"{path}:{lineno}: non-numeric value in column {fuel!r}") from None
            out[row["dmu_id"]] = vals
    return out


def emissions_table(
    consumption: Mapping[str, Mapping[str, float]], factors: Mapping[str, FuelFactor]
) -> dict[str, EmissionResult]:
    return {dmu: compute_co2(vals, factors) for dmu, vals in consumption.items()}
