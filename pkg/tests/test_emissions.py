import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sbmopa.dataio import bundled
from sbmopa.emissions import (
    CO2_PER_C,
    FUELS,
    EmissionsError,
    FuelFactor,
    compute_co2,
    default_factors,
    emissions_table,
    read_consumption,
    read_factors,
)

UNIT = {f: FuelFactor(f, 1.0, 1.0, 1.0) for f in FUELS}
amounts = st.floats(0.0, 1e6, allow_nan=False)
consumption = st.fixed_dictionaries({f: amounts for f in FUELS})
factor = st.builds(FuelFactor, st.sampled_from(["f"]), st.floats(0, 100), st.floats(0, 100), st.floats(0, 1))


def test_unit_factor_single_fuel():
    assert compute_co2({"coke": 1.0}, UNIT).total == pytest.approx(44 / 12, abs=1e-12)


def test_known_product():
    f = {"coal": FuelFactor("coal", 20.9, 26.37e-3, 0.94)}
    got = compute_co2({"coal": 100.0}, f)
    assert got.total == pytest.approx(100 * 20.9 * 26.37e-3 * 0.94 * 44 / 12, rel=1e-15)
    assert got.per_fuel == {"coal": got.total}
    assert f["coal"].co2_per_unit == pytest.approx(got.total / 100)


def test_zero_consumption():
    assert compute_co2({f: 0.0 for f in FUELS}, UNIT).total == 0.0
    assert compute_co2({}, UNIT).total == 0.0


@given(consumption, consumption)
def test_additivity(a, b):
    both = {f: a[f] + b[f] for f in FUELS}
    expect = compute_co2(a, UNIT).total + compute_co2(b, UNIT).total
    assert compute_co2(both, UNIT).total == pytest.approx(expect, rel=1e-12, abs=1e-9)


@given(consumption, st.floats(0.0, 1e3))
def test_homogeneity(a, c):
    scaled = compute_co2({f: c * v for f, v in a.items()}, UNIT).total
    assert scaled == pytest.approx(c * compute_co2(a, UNIT).total, rel=1e-12, abs=1e-9)


@given(consumption, st.permutations(FUELS))
def test_fuel_order_is_irrelevant(a, order):
    reordered = {f: a[f] for f in order}
    assert compute_co2(reordered, UNIT).total == pytest.approx(compute_co2(a, UNIT).total, rel=1e-15, abs=0)


@given(amounts, factor)
def test_single_fuel_formula(e, f):
    got = compute_co2({"f": e}, {"f": f}).total
    assert got == pytest.approx(e * f.ncv * f.cef * f.cof * CO2_PER_C, rel=1e-12, abs=1e-300)
    assert got >= 0


def test_missing_factor():
    with pytest.raises(EmissionsError, match="'lignite'"):
        compute_co2({"lignite": 1.0}, UNIT)


@pytest.mark.parametrize("e", [-1.0, math.nan, math.inf])
def test_bad_consumption(e):
    with pytest.raises(EmissionsError):
        compute_co2({"coke": e}, UNIT)


@pytest.mark.parametrize("ncv, cef, cof", [(-1, 1, 1), (1, math.nan, 1), (1, 1, 1.5)])
def test_bad_factor(ncv, cef, cof):
    with pytest.raises(EmissionsError):
        FuelFactor("x", ncv, cef, cof)


def test_placeholder_factors_cover_every_fuel():
    assert set(default_factors()) == set(FUELS)


def test_csv_round_trip(tmp_path):
    fpath = tmp_path / "f.csv"
    fpath.write_text("fuel,ncv,cef,cof\ncoke,2,3,0.5\n")
    cpath = tmp_path / "c.csv"
    cpath.write_text("dmu_id,coke\nA,1\nB,4\n")
    table = emissions_table(read_consumption(cpath), read_factors(fpath))
    assert table["A"].total == pytest.approx(3 * 44 / 12)
    assert table["B"].total == pytest.approx(12 * 44 / 12)


def test_bundled_consumption():
    table = emissions_table(read_consumption(bundled("consumption_synthetic.csv")), default_factors())
    assert list(table) == ["D01", "D02", "D03"]
    assert table["D01"].total > 0


@pytest.mark.parametrize(
    "text, reader",
    [
        ("fuel,ncv\ncoke,1\n", read_factors),
        ("fuel,ncv,cef,cof\ncoke,a,1,1\n", read_factors),
        ("id,coke\nA,1\n", read_consumption),
        ("dmu_id,coke\nA,x\n", read_consumption),
    ],
)
def test_malformed_csv(tmp_path, text, reader):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(EmissionsError):
        reader(path)
