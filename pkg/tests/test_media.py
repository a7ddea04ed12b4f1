import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helmholtz_dd.media import DomainError, MediumSpec, wave_speed, wavenumber_field
from helmholtz_dd.mesh import build_unit_square_mesh


def test_homogeneous():
    assert wave_speed(MediumSpec("homogeneous", 100, 29.3), (0.3, 0.7)) == 1.0
    field = wavenumber_field(MediumSpec("homogeneous", 1, 18.5), build_unit_square_mesh(6))
    assert np.all(field == 18.5)


def test_increasing_layers():
    spec = MediumSpec("increasing_layers", 10, 1.0)
    assert wave_speed(spec, (0.5, 0.01)) == 1.0
    assert wave_speed(spec, (0.5, 0.99)) == 10.0
    bands = [wave_speed(spec, (0.5, 1 - (b + 0.5) / 10)) for b in range(10)]
    assert np.allclose(np.diff(bands), -1.0)


def test_increasing_layers_extremes():
    field = wavenumber_field(MediumSpec("increasing_layers", 10, 29.3), build_unit_square_mesh(40))
    assert field.max() == pytest.approx(29.3)
    assert field.min() == pytest.approx(2.93)


def test_alternating_layers():
    spec = MediumSpec("alternating_layers", 1000, 1.0)
    assert wave_speed(spec, (0.5, 0.95)) == 1000.0
    assert wave_speed(spec, (0.5, 0.85)) == 1.0


def test_alternating_layers_raster():
    spec = MediumSpec("alternating_layers", 7, 1.0)
    ys = (np.arange(1000) + 0.5) / 1000
    c = wave_speed(spec, np.column_stack([np.full(ys.size, 0.3), ys]))
    change = np.flatnonzero(np.diff(c))
    assert change.size == 9  # ten bands
    runs = np.split(c, change + 1)
    vals = [r[0] for r in runs[::-1]]  # top band first
    assert vals == [7.0, 1.0] * 5


def test_diagonal_layers_value_set():
    mesh = build_unit_square_mesh(200)
    field = wavenumber_field(MediumSpec("diagonal_layers", 100, 1.0), mesh)
    values = np.unique(1.0 / field)
    # the opacity sequence repeats full opacity, so the ten bands carry six speeds
    assert values.size == 6
    assert values.min() == pytest.approx(1.0) and values.max() == pytest.approx(100.0)


def test_diagonal_layers_bottom_right_band():
    spec = MediumSpec("diagonal_layers", 50, 1.0)
    assert wave_speed(spec, (0.99, 0.01)) == 1.0


@pytest.mark.parametrize("point", [(-0.1, 0.5), (0.5, 1.2), (np.nan, 0.5)])
def test_outside_domain(point):
    with pytest.raises(DomainError):
        wave_speed(MediumSpec("increasing_layers", 10, 1.0), point)


def test_invalid_spec():
    with pytest.raises(ValueError):
        MediumSpec("increasing_layers", 0.5, 1.0)
    with pytest.raises(ValueError):
        MediumSpec("homogeneous", 1.0, -2.0)


KINDS = ["homogeneous", "increasing_layers", "alternating_layers", "diagonal_layers"]


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(KINDS[1:]), st.floats(1.5, 1e4))
def test_layer_value_set(kind, rho):
    ys = np.linspace(0, 1, 301)
    pts = np.array([(x, y) for x in ys[::10] for y in ys])
    c = np.unique(wave_speed(MediumSpec(kind, rho, 1.0), pts))
    assert c.size <= 10
    assert np.isclose(c.min(), 1.0) and np.isclose(c.max(), rho)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(KINDS), st.floats(1.0, 1e3), st.floats(0.1, 100.0))
def test_wavenumber_degree_one_in_omega(kind, rho, omega):
    mesh = build_unit_square_mesh(10)
    a = wavenumber_field(MediumSpec(kind, rho, omega), mesh)
    b = wavenumber_field(MediumSpec(kind, rho, 2 * omega), mesh)
    assert np.array_equal(b, 2 * a)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 9), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_same_band_same_value(band, s, t):
    spec = MediumSpec("increasing_layers", 30, 1.0)
    y0 = 1 - (band + s) / 10
    y1 = 1 - (band + t) / 10
    assert wave_speed(spec, (0.2, y0)) == wave_speed(spec, (0.8, y1))
