"""Geometry and field utility tests.

Signed distance values are checked against a scalar brute-force oracle, the
Heaviside against its defining values, and the contour extraction against
shapes whose zero level is known in closed form.
"""

import math

import numpy as np
import pytest

from deeplevelset import geometry as geo
from deeplevelset import network as net


# ---------------------------------------------------------------- grid


def test_grid_counts_and_coords():
    g = geo.Grid(4, 3)
    assert g.n_nodes == 20
    assert g.n_elements == 12
    coords = g.node_coords()
    assert coords.shape == (20, 2)
    # x fastest: second node is (1, 0), row stride is nx + 1
    np.testing.assert_array_equal(coords[0], [0, 0])
    np.testing.assert_array_equal(coords[1], [1, 0])
    np.testing.assert_array_equal(coords[5], [0, 1])
    np.testing.assert_array_equal(coords[-1], [4, 3])


def test_grid_element_connectivity():
    g = geo.Grid(3, 2)
    elems = g.element_node_ids()
    assert elems.shape == (6, 4)
    # element (0, 0): nodes 0, 1, 5, 4 counterclockwise from lower left
    np.testing.assert_array_equal(elems[0], [0, 1, 5, 4])
    # element (2, 1): n1 = 2 + 1*4 = 6
    np.testing.assert_array_equal(elems[5], [6, 7, 11, 10])


def test_grid_normalization_is_isotropic_and_centered():
    g = geo.Grid(200, 100)
    s = g.norm_scale
    assert s == pytest.approx(2.0 / 200.0)
    pts = g.normalized_node_coords()
    # long side spans [-1, 1], short side keeps the aspect ratio
    assert pts[:, 0].min() == pytest.approx(-1.0)
    assert pts[:, 0].max() == pytest.approx(1.0)
    assert pts[:, 1].min() == pytest.approx(-0.5)
    assert pts[:, 1].max() == pytest.approx(0.5)
    # isotropy: one physical unit maps to the same input-frame length on both axes
    a = g.to_normalized(np.array([[10.0, 10.0]]))[0]
    b = g.to_normalized(np.array([[11.0, 11.0]]))[0]
    assert b[0] - a[0] == pytest.approx(b[1] - a[1])


def test_grid_validation():
    with pytest.raises(ValueError):
        geo.Grid(0, 5)
    with pytest.raises(ValueError):
        geo.Grid(5, 5, h=-1.0)


def test_scalar_field_validation():
    g = geo.Grid(2, 2)
    with pytest.raises(ValueError):
        geo.ScalarField(g, np.zeros(5))
    bad = np.zeros(9)
    bad[0] = np.inf
    with pytest.raises(ValueError):
        geo.ScalarField(g, bad)


# ---------------------------------------------------------------- seeding


def test_seed_field_single_circle_values():
    g = geo.Grid(6, 6)
    pattern = geo.HoleSeedPattern(((0.0, 0.0, 2.0),))
    f = geo.seed_field(pattern, g)
    # (3, 0) is one unit outside the hole; center of the hole is -r
    assert f.values[g.node_id(3, 0)] == pytest.approx(1.0)
    assert f.values[g.node_id(0, 0)] == pytest.approx(-2.0)


def test_seed_field_matches_brute_force_oracle():
    g = geo.Grid(12, 9)
    pattern = geo.HoleSeedPattern(((3.0, 3.0, 2.0), (4.5, 3.5, 1.5), (10.0, 7.0, 1.0)))
    f = geo.seed_field(pattern, g)
    coords = g.node_coords()
    for k in range(g.n_nodes):
        x, y = coords[k]
        d = min(math.sqrt((x - cx) ** 2 + (y - cy) ** 2) - r for cx, cy, r in pattern.circles)
        assert f.values[k] == pytest.approx(d, abs=1e-12)


def test_seed_field_empty_pattern_is_solid():
    g = geo.Grid(5, 4)
    f = geo.seed_field(geo.HoleSeedPattern(()), g)
    assert np.all(f.values > 0)
    assert np.all(f.values == f.values[0])


def test_hole_lattice_layout():
    g = geo.Grid(100, 100)
    pattern = geo.default_hole_lattice(g)
    assert len(pattern.circles) == 6  # 3 columns x 2 rows
    radii = {r for _, _, r in pattern.circles}
    assert radii == {12.5}
    xs = sorted({c for c, _, _ in pattern.circles})
    np.testing.assert_allclose(xs, [100 / 6, 50, 250 / 3])

    wide = geo.Grid(200, 100)
    assert len(geo.default_hole_lattice(wide).circles) == 12  # 6 x 2
    # the wide lattice mirrors the half-domain lattice about x = 100
    half_x = sorted({c for c, _, _ in pattern.circles})
    full_x = sorted({c for c, _, _ in geo.default_hole_lattice(wide).circles})
    np.testing.assert_allclose(full_x[:3], half_x)
    np.testing.assert_allclose(full_x[3:], [200 - x for x in reversed(half_x)])


def test_five_hole_plate_is_disjoint():
    g = geo.Grid(100, 100)
    pattern = geo.five_hole_plate(g)
    assert len(pattern.circles) == 5
    circles = pattern.circles
    for a in range(5):
        for b in range(a + 1, 5):
            (x1, y1, r1), (x2, y2, r2) = circles[a], circles[b]
            assert math.hypot(x1 - x2, y1 - y2) > r1 + r2


# ---------------------------------------------------------------- heaviside


def test_heaviside_exact_band_values():
    p = geo.HeavisideParams(delta=1e-3, half_width=2.0)
    assert geo.heaviside(-2.0, p) == pytest.approx(1e-3, abs=1e-15)
    assert geo.heaviside(0.0, p) == pytest.approx(0.5 * (1 + 1e-3), abs=1e-15)
    assert geo.heaviside(2.0, p) == pytest.approx(1.0, abs=1e-15)
    assert geo.heaviside(-50.0, p) == pytest.approx(1e-3, abs=1e-15)
    assert geo.heaviside(50.0, p) == pytest.approx(1.0, abs=1e-15)


def test_heaviside_monotone_and_bounded():
    p = geo.HeavisideParams(delta=1e-3, half_width=2.0)
    phi = np.sort(np.random.default_rng(0).uniform(-6, 6, size=10_000))
    h = geo.heaviside(phi, p)
    assert np.all(np.diff(h) >= 0)
    assert h.min() >= p.delta - 1e-15
    assert h.max() <= 1.0 + 1e-15


def test_heaviside_continuous_at_band_edges():
    p = geo.HeavisideParams(delta=1e-3, half_width=2.0)
    eps = 1e-9
    for edge in (-2.0, 2.0):
        lo = geo.heaviside(edge - eps, p)
        hi = geo.heaviside(edge + eps, p)
        assert abs(hi - lo) < 1e-8


def test_heaviside_parameter_validation():
    with pytest.raises(ValueError):
        geo.HeavisideParams(delta=0.0)
    with pytest.raises(ValueError):
        geo.HeavisideParams(delta=1.5)
    with pytest.raises(ValueError):
        geo.HeavisideParams(half_width=0.0)


# ---------------------------------------------------------------- volume fraction


def test_volume_fraction_uniform_fields():
    g = geo.Grid(10, 10)
    p = geo.HeavisideParams()
    solid = geo.ScalarField(g, np.full(g.n_nodes, 10.0))
    void = geo.ScalarField(g, np.full(g.n_nodes, -10.0))
    assert geo.volume_fraction(solid, p) == pytest.approx(1.0)
    assert geo.volume_fraction(void, p) == pytest.approx(p.delta)


def test_volume_fraction_half_plane():
    g = geo.Grid(64, 8)
    p = geo.HeavisideParams(delta=1e-3, half_width=2.0)
    coords = g.node_coords()
    f = geo.ScalarField(g, coords[:, 0] - 32.0)
    vf = geo.volume_fraction(f, p)
    assert abs(vf - 0.5) <= 2.0 / 64


def test_volume_fraction_complement_identity():
    # H(phi) + H(-phi) = 1 + delta pointwise, so the fractions sum likewise
    g = geo.Grid(32, 16)
    p = geo.HeavisideParams(delta=1e-3, half_width=2.0)
    rng = np.random.default_rng(5)
    f = geo.ScalarField(g, rng.uniform(-4, 4, g.n_nodes))
    neg = geo.ScalarField(g, -f.values)
    total = geo.volume_fraction(f, p) + geo.volume_fraction(neg, p)
    assert total == pytest.approx(1.0 + p.delta, abs=1e-12)


# ---------------------------------------------------------------- fit


def test_fit_constant_target_converges():
    g = geo.Grid(8, 8)
    target = geo.ScalarField(g, np.full(g.n_nodes, 0.7))
    arch = net.NetworkArchitecture((4,))
    theta = geo.fit_network(arch, seed=0, target=target, cfg=geo.FitConfig(iterations=1500))
    pred = net.forward(theta, g.normalized_node_coords())
    err = pred - 0.7
    assert np.sqrt(np.mean(err * err)) < 5e-3
    assert np.max(np.abs(err)) < 2e-2


def test_fit_is_deterministic():
    g = geo.Grid(8, 8)
    target = geo.seed_field(geo.HoleSeedPattern(((4.0, 4.0, 2.0),)), g)
    arch = net.NetworkArchitecture((6,))
    cfg = geo.FitConfig(iterations=200, target_scale=0.25, clamp_limit=0.5)
    a = geo.fit_network(arch, 3, target, cfg)
    b = geo.fit_network(arch, 3, target, cfg)
    np.testing.assert_array_equal(a.values, b.values)


def test_fit_divergence_raises():
    g = geo.Grid(6, 6)
    target = geo.ScalarField(g, np.full(g.n_nodes, 1.0))
    arch = geo.net.NetworkArchitecture((4,))
    with pytest.raises(geo.FitDivergence):
        geo.fit_network(arch, 0, target, geo.FitConfig(iterations=200, step_size=1e12))


def test_fit_circle_reproduces_zero_level():
    # moderate budget sanity check ahead of the full fidelity benchmark
    g = geo.Grid(40, 40)
    target = geo.seed_field(geo.HoleSeedPattern(((20.0, 20.0, 8.0),)), g)
    scale = g.norm_scale
    cfg = geo.FitConfig(iterations=800, target_scale=scale, clamp_limit=6 * scale)
    theta = geo.fit_network(net.NetworkArchitecture((8, 8)), 1, target, cfg)
    fitted = geo.ScalarField(g, net.forward(theta, g.normalized_node_coords()))
    scaled_target = geo.ScalarField(g, target.values * scale)
    assert geo.zero_level_iou(fitted, scaled_target) > 0.9


def test_fit_clamp_limits_target_range():
    g = geo.Grid(16, 16)
    target = geo.seed_field(geo.HoleSeedPattern(((8.0, 8.0, 4.0),)), g)
    cfg = geo.FitConfig(iterations=400, target_scale=1.0, clamp_limit=1.0)
    theta = geo.fit_network(net.NetworkArchitecture((8,)), 2, target, cfg)
    pred = net.forward(theta, g.normalized_node_coords())
    # far-field prediction tracks the clamped plateau, not the raw distance
    assert pred.max() < 2.0
    assert target.values.max() > 5.0


# ---------------------------------------------------------------- IoU


def test_iou_identical_and_disjoint():
    g = geo.Grid(10, 10)
    f = geo.seed_field(geo.HoleSeedPattern(((5.0, 5.0, 2.0),)), g)
    assert geo.zero_level_iou(f, f) == 1.0
    inverted = geo.ScalarField(g, -f.values)
    overlap = geo.zero_level_iou(f, inverted)
    assert overlap < 0.05  # only the contour nodes can coincide


# ---------------------------------------------------------------- contours


def test_contour_vertical_line():
    g = geo.Grid(10, 4)
    coords = g.node_coords()
    f = geo.ScalarField(g, coords[:, 0] - 5.5)
    polys = geo.extract_zero_contour(f)
    assert len(polys) == 1
    pts = polys[0]
    np.testing.assert_allclose(pts[:, 0], 5.5, atol=1e-12)
    assert pts[:, 1].min() == pytest.approx(0.0)
    assert pts[:, 1].max() == pytest.approx(4.0)


def test_contour_circle_radius():
    g = geo.Grid(32, 32)
    f = geo.seed_field(geo.HoleSeedPattern(((16.0, 16.0, 6.0),)), g)
    polys = geo.extract_zero_contour(f)
    assert len(polys) == 1
    pts = polys[0]
    radii = np.hypot(pts[:, 0] - 16.0, pts[:, 1] - 16.0)
    assert abs(radii.mean() - 6.0) < g.h / 2
    # closed loop: first and last chained vertex coincide
    np.testing.assert_allclose(pts[0], pts[-1], atol=1e-9)


def test_contour_uniform_field_is_empty():
    g = geo.Grid(8, 8)
    f = geo.ScalarField(g, np.full(g.n_nodes, 2.0))
    assert geo.extract_zero_contour(f) == []


def test_contour_hausdorff_known_shift():
    g = geo.Grid(20, 6)
    coords = g.node_coords()
    a = geo.extract_zero_contour(geo.ScalarField(g, coords[:, 0] - 5.0))
    b = geo.extract_zero_contour(geo.ScalarField(g, coords[:, 0] - 7.0))
    assert geo.contour_hausdorff(a, b) == pytest.approx(2.0, abs=1e-9)


# ---------------------------------------------------------------- writers


def test_vtk_writer_round_trip(tmp_path):
    g = geo.Grid(3, 2)
    f = geo.ScalarField(g, np.arange(g.n_nodes, dtype=float) / 7.0)
    path = tmp_path / "field.vtk"
    geo.write_vtk(path, {"phi": f})
    lines = path.read_text().splitlines()
    assert lines[3] == "DATASET STRUCTURED_POINTS"
    assert lines[4] == "DIMENSIONS 4 3 1"
    assert f"POINT_DATA {g.n_nodes}" in lines
    idx = lines.index("LOOKUP_TABLE default") + 1
    values = np.array([float(v) for v in lines[idx : idx + g.n_nodes]])
    np.testing.assert_allclose(values, f.values, rtol=1e-8)


def test_pgm_writer_solid_and_orientation(tmp_path):
    path = tmp_path / "density.pgm"
    geo.write_pgm(path, np.ones((2, 3)))
    lines = path.read_text().splitlines()
    assert lines[0] == "P2"
    assert lines[1] == "3 2"
    assert lines[2] == "255"
    assert lines[3].split() == ["255"] * 3

    # origin lower left: the marked low-y row must be the file's last row
    img = np.zeros((2, 3))
    img[0, 0] = 1.0
    geo.write_pgm(path, img)
    lines = path.read_text().splitlines()
    assert lines[3].split() == ["0", "0", "0"]
    assert lines[4].split() == ["255", "0", "0"]
