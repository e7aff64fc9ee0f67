import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fluxlim import diag
from fluxlim.errors import ValidationError
from fluxlim.grid import SpatialGrid


@pytest.fixture
def line():
    return SpatialGrid.line(-4.0, 4.0, 800)


def test_grid_basics(line):
    assert line.dx == pytest.approx(0.01)
    assert line.extent == (8.0,)
    assert line.axis(0)[0] == pytest.approx(-4.0 + 0.005)
    g2 = SpatialGrid((0, 0), (1, 2), (8, 16))
    X, Y = g2.centers()
    assert X.shape == (8, 16) and g2.cell_volume == pytest.approx(1 / 64)


@pytest.mark.parametrize("args", [((0,), (1,), (4,)), ((0,), (0,), (8,)), ((0, 0, 0), (1, 1, 1), (8, 8, 8))])
def test_grid_rejects(args):
    with pytest.raises(ValidationError):
        SpatialGrid(*args)
    with pytest.raises(ValidationError):
        SpatialGrid.line(0, 1, 8, "reflecting")


def test_total_mass_examples(line):
    assert abs(diag.total_mass(np.ones(800), line) - 8.0) <= 1e-13
    assert diag.total_mass(np.zeros(800), line) == 0.0
    half = (line.axis(0) < 0).astype(float)
    assert abs(diag.total_mass(half, line) - 4.0) <= line.dx


def test_front_position_examples(line):
    x = line.axis(0)
    ind = ((x > -1) & (x < 1)).astype(float)
    l, r = diag.front_position(ind, line)
    assert abs(l + 1) <= line.dx and abs(r - 1) <= line.dx
    assert diag.front_position(np.zeros(800), line) is None
    l, r = diag.front_position(np.exp(-x * x), line)
    assert abs(r - math.sqrt(math.log(1000))) <= 2 * line.dx
    assert abs(l + math.sqrt(math.log(1000))) <= 2 * line.dx


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 0.5), st.floats(1e-4, 0.5))
def test_front_monotone_in_theta(t1, t2):
    g = SpatialGrid.line(-4, 4, 200)
    c = np.exp(-g.axis(0) ** 2)
    lo, hi = sorted((t1, t2))
    a = diag.front_position(c, g, lo)
    b = diag.front_position(c, g, hi)
    assert a[0] <= b[0] and b[1] <= a[1]


def test_front_speed_examples(line):
    s = diag.FrontSeries()
    for t in np.linspace(0, 1, 11):
        c = ((line.axis(0) > -1 - t) & (line.axis(0) < 1 + t)).astype(float)
        s.append(t, c, line)
    assert abs(diag.front_speed(s) - 1.0) < 0.02
    exact = diag.FrontSeries(times=list(np.linspace(0, 1, 11)), left=list(-np.linspace(0, 1, 11)),
                             right=list(np.linspace(0, 1, 11)), steep_left=[0] * 11, steep_right=[0] * 11)
    assert abs(diag.front_speed(exact) - 1.0) <= 1e-12
    assert abs(diag.front_speed(exact, side="left") - 1.0) <= 1e-12
    still = diag.FrontSeries(times=list(range(6)), left=[0.0] * 6, right=[1.0] * 6,
                             steep_left=[0] * 6, steep_right=[0] * 6)
    assert abs(diag.front_speed(still, (0, 5))) <= 1e-12
    with pytest.raises(ValidationError):
        diag.front_speed(still, (0, 2))


def test_front_series_times_increase(line):
    s = diag.FrontSeries()
    s.append(0.0, np.ones(800), line)
    with pytest.raises(ValidationError):
        s.append(0.0, np.ones(800), line)


def test_total_variation_examples():
    assert abs(diag.total_variation(np.linspace(0, 1, 50)) - 1.0) <= 1e-13
    c = np.zeros(20)
    c[5:10] = 2.5
    assert diag.total_variation(c) == 5.0
    assert diag.total_variation(np.zeros(5)) == 0.0
    with pytest.raises(ValidationError):
        diag.total_variation(np.zeros((3, 3)))
