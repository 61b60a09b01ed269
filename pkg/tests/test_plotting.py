import numpy as np

from hybridnav.engine import ControllerParams, simulate
from hybridnav.plotting import contour_segments, default_levels, trajectory_svg


def test_contour_of_circle():
    xs = np.linspace(-2, 2, 81)
    X, Y = np.meshgrid(xs, xs)
    segs = contour_segments(xs, xs, X ** 2 + Y ** 2, 1.0)
    pts = np.array([p for s in segs for p in s])
    assert len(segs) > 50
    assert np.allclose(np.hypot(pts[:, 0], pts[:, 1]), 1.0, atol=2e-3)


def test_contour_skips_non_finite_cells():
    vals = np.array([[0.0, 2.0], [np.inf, 2.0]])
    assert contour_segments(np.array([0, 1.0]), np.array([0, 1.0]), vals, 1.0) == []


def test_default_levels_increasing():
    lv = default_levels(np.array([[0.0, 1.0], [4.0, np.inf]]))
    assert all(a < b for a, b in zip(lv, lv[1:]))
    assert default_levels(np.full((2, 2), np.inf)) == []


def test_svg_document(noisy_dropout_field):
    arc = simulate(noisy_dropout_field, ControllerParams(), (-12.0, 2.0))
    svg = trajectory_svg(noisy_dropout_field, [arc], (-40, 25, -20, 16), 1.0, title="a<b")
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert svg.count("<polyline") == 2 and "a&lt;b" in svg
    assert svg == trajectory_svg(noisy_dropout_field, [arc], (-40, 25, -20, 16), 1.0, title="a<b")
