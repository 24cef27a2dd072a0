import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcainterp.grids import (FLIEGE_SIZES, LEBEDEV_ORDERS, Direction, GridError, SphericalGrid,
                             fliege_grid, great_circle_distance, horizontal_grid, lebedev_grid,
                             lebedev_order_at_least, parse_grid_spec)

LEBEDEV_SIZES = {1: 6, 2: 14, 3: 26, 4: 38, 5: 50, 6: 74, 7: 86, 8: 110, 9: 146, 10: 170,
                 11: 194, 12: 230, 13: 266, 14: 302, 15: 350}


def gram(grid, order):
    y = grid.sh_matrix(order)
    return 4 * np.pi * (y * np.asarray(grid.weights)[:, None]).T @ y


class TestDirection:
    def test_azimuth_wraps(self):
        assert Direction(-90, 0).azimuth_deg == 270.0
        assert Direction(360, 0).azimuth_deg == 0.0
        assert Direction(725, 10).azimuth_deg == 5.0

    @pytest.mark.parametrize("el", [-90.5, 91, float("nan")])
    def test_elevation_checked(self, el):
        with pytest.raises(GridError):
            Direction(0, el)


class TestLebedev:
    @pytest.mark.parametrize("order,size", sorted(LEBEDEV_SIZES.items()))
    def test_sizes(self, order, size):
        g = lebedev_grid(order)
        assert len(g) == size
        assert g.nominal_order == order
        assert sum(g.weights) == pytest.approx(1.0, abs=1e-12)

    def test_order1_octahedron(self):
        g = lebedev_grid(1)
        i = [k for k, d in enumerate(g.directions) if (d.azimuth_deg, d.elevation_deg) == (90.0, 0.0)]
        assert len(i) == 1
        assert g.weights[i[0]] == pytest.approx(1 / 6, abs=1e-15)

    def test_unsupported_order_lists_table(self):
        with pytest.raises(GridError, match="supported orders: 1, 2, 3"):
            lebedev_grid(16)

    @pytest.mark.parametrize("order", LEBEDEV_ORDERS)
    def test_orthonormal(self, order):
        assert np.abs(gram(lebedev_grid(order), order) - np.eye((order + 1) ** 2)).max() < 1e-8

    def test_order_at_least(self):
        assert lebedev_order_at_least(16) == 17
        assert lebedev_order_at_least(29) == 29
        assert lebedev_order_at_least(30) == 32
        with pytest.raises(GridError):
            lebedev_order_at_least(33)


class TestFliege:
    def test_900(self):
        g = fliege_grid(900)
        assert len(g) == 900 and g.nominal_order == 29
        assert sum(g.weights) == pytest.approx(1.0, abs=1e-10)

    def test_4(self):
        assert fliege_grid(4).nominal_order == 1

    @pytest.mark.parametrize("n", [5, 1000, 961])
    def test_unsupported(self, n):
        with pytest.raises(GridError, match="supported sizes"):
            fliege_grid(n)

    @pytest.mark.parametrize("size", FLIEGE_SIZES)
    def test_weights_integrate_basis(self, size):
        # interpolatory weights: exact for every function of degree <= N
        g = fliege_grid(size)
        n = g.nominal_order
        integrals = 4 * np.pi * np.asarray(g.weights) @ g.sh_matrix(n)
        expected = np.zeros((n + 1) ** 2)
        expected[0] = math.sqrt(4 * np.pi)
        assert np.abs(integrals - expected).max() < 1e-9

    @pytest.mark.parametrize("size", [4, 16, 100, 900])
    def test_near_orthonormal(self, size):
        g = fliege_grid(size)
        assert np.abs(gram(g, g.nominal_order) - np.eye(size)).max() < FLIEGE_GRAM_TOL[size]


# measured on the shipped tables; (N+1)^2 points cannot integrate degree 2N exactly
FLIEGE_GRAM_TOL = {4: 1e-6, 16: 0.55, 100: 0.6, 900: 0.5}


class TestHorizontal:
    def test_step1(self):
        g = horizontal_grid(1)
        assert len(g) == 360
        assert np.all(g.elevation_deg == 0)
        assert g.weights is None

    def test_step90(self):
        assert list(horizontal_grid(90).azimuth_deg) == [0, 90, 180, 270]

    @pytest.mark.parametrize("step", [7, 0, -5])
    def test_bad_step(self, step):
        with pytest.raises(GridError):
            horizontal_grid(step)


class TestDistance:
    @pytest.mark.parametrize("a,b,d", [((0, 0), (0, 0), 0), ((0, 0), (180, 0), 180),
                                       ((0, 0), (90, 0), 90), ((0, 90), (123, -90), 180)])
    def test_examples(self, a, b, d):
        assert great_circle_distance(Direction(*a), Direction(*b)) == pytest.approx(d, abs=1e-12)

    def test_small_angle_accuracy(self):
        assert great_circle_distance(Direction(0, 0), Direction(1e-7, 0)) == pytest.approx(1e-7, rel=1e-6)


directions = st.builds(Direction, st.floats(0, 360, exclude_max=True), st.floats(-90, 90))


@settings(max_examples=300, deadline=None)
@given(directions, directions, directions)
def test_triangle_inequality_and_symmetry(a, b, c):
    ab, bc, ac = (great_circle_distance(a, b), great_circle_distance(b, c),
                  great_circle_distance(a, c))
    assert ac <= ab + bc + 1e-9
    assert ab == pytest.approx(great_circle_distance(b, a), abs=1e-12)
    assert 0 <= ab <= 180


class TestSphericalGrid:
    def test_duplicates_rejected(self):
        with pytest.raises(GridError, match="duplicate"):
            SphericalGrid(((0, 0), (90, 0), (360, 0)))

    def test_pole_duplicates_rejected(self):
        with pytest.raises(GridError, match="duplicate"):
            SphericalGrid(((0, 90), (45, 90)))

    def test_weights_validated(self):
        with pytest.raises(GridError):
            SphericalGrid(((0, 0), (90, 0)), (1.0, -0.5))
        with pytest.raises(GridError):
            SphericalGrid(((0, 0), (90, 0)), (1.0,))

    def test_signed_weights_opt_in(self):
        assert lebedev_grid(6).signed_weights and min(lebedev_grid(6).weights) < 0
        assert not lebedev_grid(3).signed_weights
        g = SphericalGrid(((0, 0), (90, 0)), (1.5, -0.5), signed_weights=True)
        assert g.weights == (1.5, -0.5)
        assert SphericalGrid.from_json(g.to_json()).weights == g.weights

    def test_weights_normalized(self):
        g = SphericalGrid(((0, 0), (90, 0)), (2.0, 6.0))
        assert g.weights == (0.25, 0.75)

    @pytest.mark.parametrize("spec", ["lebedev:3", "horizontal:45", "fliege:16"])
    def test_json_round_trip_byte_identical(self, spec, tmp_path):
        grid = parse_grid_spec(spec)
        text = grid.to_json()
        again = SphericalGrid.from_json(text)
        assert again.to_json() == text
        assert again == grid
        path = tmp_path / "g.json"
        path.write_text(text)
        assert parse_grid_spec(str(path)).to_json() == text

    def test_json_fields(self):
        data = json.loads(lebedev_grid(1).to_json())
        assert set(data) == {"name", "nominal_order", "directions", "weights"}

    def test_file_order_preserved(self):
        g = SphericalGrid(((270, 0), (0, 0), (90, 10)))
        assert list(g.azimuth_deg) == [270, 0, 90]

    def test_parse_spec(self):
        assert len(parse_grid_spec("lebedev:3")) == 26
        assert len(parse_grid_spec("fliege:900")) == 900
        assert len(parse_grid_spec("horizontal:5")) == 72
        for bad in ("lebedev:x", "nosuch.json", "lebedev:0"):
            with pytest.raises(GridError):
                parse_grid_spec(bad)
