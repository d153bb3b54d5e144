import numpy as np
import pytest

from roadplan.curvilinear import CurvilinearFrame, ProjectionError, build_frame
from roadplan.geometry import GeometryError


def straight_frame(n=11, spacing=1.0):
    return build_frame([[i * spacing, 0.0] for i in range(n)])


def circle_frame(radius=10.0, n=720, span=2 * np.pi):
    ang = np.linspace(0.0, span, n)
    return build_frame(np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1))


def test_straight_frame_tangents_and_curvature():
    f = straight_frame()
    assert np.allclose(f.tangents, [[1.0, 0.0]] * 10)
    assert np.allclose(f.curvature, 0.0)
    assert f.length == pytest.approx(10.0)


def test_circle_curvature_close_to_inverse_radius():
    f = circle_frame(radius=10.0)
    # every interior vertex circumcircle is the circle itself
    assert np.allclose(f.curvature, 0.1, atol=1e-9)


def test_reversed_path_negates_curvature():
    f = circle_frame(radius=5.0, span=np.pi)
    r = build_frame(f.reference[::-1])
    assert np.allclose(r.curvature, -f.curvature[::-1], atol=1e-12)


def test_duplicate_vertices_rejected():
    with pytest.raises(GeometryError):
        build_frame([[0.0, 0.0], [0.0, 0.0]])


def test_straight_projection_identity():
    f = straight_frame()
    s, d = f.to_curvilinear([3.0, 0.5])
    assert s == pytest.approx(3.0)
    assert d == pytest.approx(0.5)


def test_point_on_reference_has_zero_offset():
    f = circle_frame()
    p = f.reference[137]
    s, d = f.to_curvilinear(p)
    assert abs(d) < 1e-9


def test_circle_analytic_projection():
    # CCW circle of radius 10 starting at (10, 0): the point (0, 9) sits a
    # quarter turn along the path, one meter inside (left of travel).
    f = circle_frame(radius=10.0, n=3600)
    s, d = f.to_curvilinear([0.0, 9.0])
    assert s == pytest.approx(5.0 * np.pi, abs=2e-3)
    assert d == pytest.approx(1.0, abs=2e-4)


def test_circle_analytic_embedding():
    f = circle_frame(radius=10.0, n=3600)
    p = f.to_cartesian(5.0 * np.pi, 1.0)
    assert np.allclose(p, [0.0, 9.0], atol=2e-3)


def test_round_trip_known_coordinates():
    rng = np.random.default_rng(42)
    f = circle_frame(radius=30.0, n=2000, span=1.5 * np.pi)
    spacing = f.seg_len.mean()
    for _ in range(1000):
        d = rng.uniform(-2.0, 2.0)
        # keep clear of vertex wedges: the projection there belongs to two segments
        margin = abs(d) * spacing / 30.0 + 1e-6
        while True:
            s = rng.uniform(1.0, f.length - 1.0)
            i = np.searchsorted(f.cum_len, s) - 1
            if (s - f.cum_len[i]) > margin and (f.cum_len[i + 1] - s) > margin:
                break
        p = f.to_cartesian(s, d)
        s2, d2 = f.to_curvilinear(p)
        assert abs(s2 - s) < 1e-9
        assert abs(d2 - d) < 1e-9


def test_projection_ambiguity_raises():
    f = circle_frame(radius=10.0)
    with pytest.raises(ProjectionError):
        f.to_curvilinear([0.0, 0.0])  # circle center is equidistant to everything


def test_arc_length_out_of_range_raises():
    f = straight_frame()
    with pytest.raises(ProjectionError):
        f.to_cartesian(11.0, 0.0)
    with pytest.raises(ProjectionError):
        f.to_cartesian(-0.5, 0.0)


def test_to_cartesian_many_matches_scalar():
    f = circle_frame(radius=20.0, n=500, span=np.pi)
    s = np.linspace(0.5, f.length - 0.5, 50)
    d = np.linspace(-1.0, 1.0, 50)
    batch = f.to_cartesian_many(s, d)
    for k in range(50):
        assert np.allclose(batch[k], f.to_cartesian(s[k], d[k]))
