"""Synthetic camera, data-fit perception maps and runtime error models.

The camera renders a small 3-channel image of the world: the observed agent
as a Gaussian blob (one cell standard deviation) in channel 0, the obstacle
disk in channel 1 and a target marker in channel 2.  Perception maps are
fit on a labelled grid of such images and predict positions by nearest
neighbour (``"1nn"``) or inverse-distance weighting of the four nearest
labels (``"local-linear"``).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import InsufficientData, OutOfExtent
from .geometry import Obstacle, Point2, as_point

MODES = ("1nn", "local-linear")


@dataclass(frozen=True)
class World:
    obstacle: Obstacle
    target: Point2

    def __post_init__(self):
        object.__setattr__(self, "target", as_point(self.target))


@dataclass(frozen=True)
class Camera:
    """Render window ``(xmin, xmax, ymin, ymax)`` sampled on a W x H pixel grid."""

    extent: tuple[float, float, float, float]
    resolution: tuple[int, int] = (25, 15)
    occlusions: tuple[tuple[float, float, float, float], ...] = ()

    def __post_init__(self):
        ext = tuple(float(v) for v in self.extent)
        if not (ext[0] < ext[1] and ext[2] < ext[3]):
            raise ValueError(f"degenerate extent {ext}")
        object.__setattr__(self, "extent", ext)
        object.__setattr__(self, "resolution", tuple(int(v) for v in self.resolution))
        object.__setattr__(self, "occlusions", tuple(tuple(float(v) for v in r) for r in self.occlusions))

    @property
    def cell(self) -> tuple[float, float]:
        w, h = self.resolution
        return (self.extent[1] - self.extent[0]) / w, (self.extent[3] - self.extent[2]) / h

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        w, h = self.resolution
        cx, cy = self.cell
        xs = self.extent[0] + (np.arange(w) + 0.5) * cx
        ys = self.extent[2] + (np.arange(h) + 0.5) * cy
        return xs, ys

    def contains(self, p) -> bool:
        x0, x1, y0, y1 = self.extent
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1

    def with_occlusions(self, occlusions) -> "Camera":
        return replace(self, occlusions=tuple(occlusions))

    def to_dict(self) -> dict:
        return {"extent": list(self.extent), "resolution": list(self.resolution),
                "occlusions": [list(r) for r in self.occlusions]}

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(tuple(d["extent"]), tuple(d.get("resolution", (25, 15))),
                   tuple(tuple(r) for r in d.get("occlusions", ())))


@dataclass(frozen=True)
class Observation:
    data: np.ndarray
    extent: tuple[float, float, float, float]
    resolution: tuple[int, int]

    def image(self) -> np.ndarray:
        w, h = self.resolution
        return self.data.reshape(h, w, 3)


@lru_cache(maxsize=32)
def _static_layers(world: World, camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    # Channels 1 and 2 (obstacle disk, target marker) and the occlusion mask.
    xs, ys = camera.pixel_centers()
    X, Y = np.meshgrid(xs, ys)
    c = world.obstacle.center
    disk = (np.hypot(X - c.x, Y - c.y) <= world.obstacle.radius).astype(float)
    cx, cy = camera.cell
    marker = np.exp(-0.5 * (((X - world.target.x) / cx) ** 2 + ((Y - world.target.y) / cy) ** 2))
    keep = np.ones_like(X)
    for x0, x1, y0, y1 in camera.occlusions:
        keep[(X >= x0) & (X <= x1) & (Y >= y0) & (Y <= y1)] = 0.0
    static = np.stack([disk * keep, marker * keep], axis=-1)
    static.flags.writeable = False
    keep.flags.writeable = False
    return static, keep


def _blobs(camera: Camera, pts: np.ndarray) -> np.ndarray:
    # Agent channel for many positions: (n, H, W).
    xs, ys = camera.pixel_centers()
    cx, cy = camera.cell
    gx = np.exp(-0.5 * ((xs[None, :] - pts[:, 0:1]) / cx) ** 2)
    gy = np.exp(-0.5 * ((ys[None, :] - pts[:, 1:2]) / cy) ** 2)
    return gy[:, :, None] * gx[:, None, :]


def render_many(world: World, camera: Camera, pts) -> np.ndarray:
    """Render observations for an (n, 2) array of positions; returns (n, H*W*3)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x0, x1, y0, y1 = camera.extent
    bad = (pts[:, 0] < x0) | (pts[:, 0] > x1) | (pts[:, 1] < y0) | (pts[:, 1] > y1)
    if bad.any():
        raise OutOfExtent(f"position {tuple(pts[bad][0])} outside render extent {camera.extent}")
    static, keep = _static_layers(world, camera)
    agent = _blobs(camera, pts) * keep
    n = len(pts)
    w, h = camera.resolution
    img = np.empty((n, h, w, 3))
    img[..., 0] = agent
    img[..., 1:] = static
    return img.reshape(n, -1)


def render(world: World, p, resolution=(25, 15), extent=None, occlusions=()) -> Observation:
    """Render a single observation of an agent at ``p``.

    Raises
    ------
    OutOfExtent
        If ``p`` is outside the render window.
    """
    if extent is None:
        raise ValueError("render needs an extent")
    camera = Camera(tuple(extent), tuple(resolution), tuple(occlusions))
    data = render_many(world, camera, [p])[0]
    return Observation(data, camera.extent, camera.resolution)


# training data -----------------------------------------------------------

def _axis(lo: float, hi: float, r: float) -> np.ndarray:
    n = int(math.floor((hi - lo) / r + 1e-9)) + 1
    xs = lo + r * np.arange(n)
    if hi - xs[-1] > 1e-9 * max(1.0, abs(hi)):
        xs = np.append(xs, hi)
    return xs


@dataclass
class TrainingSet:
    positions: np.ndarray
    observations: np.ndarray
    spacing: float
    region: tuple[float, float, float, float]
    grid_shape: tuple[int, int]
    world: World
    camera: Camera

    def __len__(self):
        return len(self.positions)

    def save(self, directory) -> None:
        """Write ``positions.csv``, ``observations.npy`` and ``meta.json``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "positions.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y"])
            for x, y in self.positions:
                w.writerow([f"{x:.17g}", f"{y:.17g}"])
        np.save(d / "observations.npy", self.observations)
        meta = {
            "spacing": self.spacing, "region": list(self.region), "grid_shape": list(self.grid_shape),
            "world": {"obstacle": {"center": list(self.world.obstacle.center),
                                   "radius": self.world.obstacle.radius},
                      "target": list(self.world.target)},
            "camera": self.camera.to_dict(),
        }
        (d / "meta.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, directory) -> "TrainingSet":
        d = Path(directory)
        meta = json.loads((d / "meta.json").read_text())
        pos = np.loadtxt(d / "positions.csv", delimiter=",", skiprows=1, ndmin=2)
        obs = np.load(d / "observations.npy")
        wd = meta["world"]
        world = World(Obstacle(as_point(wd["obstacle"]["center"]), wd["obstacle"]["radius"]), wd["target"])
        return cls(pos, obs, meta["spacing"], tuple(meta["region"]), tuple(meta["grid_shape"]),
                   world, Camera.from_dict(meta["camera"]))


def default_camera(region, margin: float = 5.0, resolution=(25, 15)) -> Camera:
    x0, x1, y0, y1 = region
    return Camera((x0 - margin, x1 + margin, y0 - margin, y1 + margin), resolution)


def collect_training_data(world: World, region, spacing: float, camera: Camera | None = None) -> TrainingSet:
    """Label a regular grid of pitch ``spacing`` over ``region`` (endpoints included)."""
    if not spacing > 0:
        raise ValueError("grid spacing must be positive")
    region = tuple(float(v) for v in region)
    camera = camera or default_camera(region)
    xs = _axis(region[0], region[1], spacing)
    ys = _axis(region[2], region[3], spacing)
    X, Y = np.meshgrid(xs, ys)
    pos = np.column_stack([X.ravel(), Y.ravel()])
    obs = render_many(world, camera, pos)
    return TrainingSet(pos, obs, float(spacing), region, (len(xs), len(ys)), world, camera)


# perception maps ---------------------------------------------------------

class PerceptionMap:
    """Position estimator fit on a :class:`TrainingSet`.

    Distances are Euclidean in observation space.  Channels 1 and 2 are
    identical across a training set, so they add the same constant to every
    distance; the map stores them once and only compares the agent channel
    sample by sample.
    """

    def __init__(self, training: TrainingSet, mode: str = "1nn", k_neighbors: int = 4):
        if mode not in MODES:
            raise ValueError(f"unknown perception mode {mode!r}; expected one of {MODES}")
        n = len(training)
        if n < 1:
            raise InsufficientData("need at least one training sample")
        if mode == "local-linear":
            if n < 3 or _collinear(training.positions):
                raise InsufficientData("local-linear mode needs >= 3 non-collinear samples")
        self.training = training
        self.mode = mode
        self.k_neighbors = min(k_neighbors, n)
        w, h = training.camera.resolution
        obs = training.observations.reshape(n, h * w, 3)
        self._agent = np.ascontiguousarray(obs[:, :, 0])
        self._agent_sq = np.einsum("ij,ij->i", self._agent, self._agent)
        static = obs[:, :, 1:]
        self._split = bool(np.all(static == static[0]))
        self._static = static[0].ravel() if self._split else None
        self._full = None if self._split else training.observations
        self._full_sq = None if self._split else np.einsum("ij,ij->i", self._full, self._full)
        self.labels = training.positions
        self.lipschitz = math.nan

    @property
    def world(self) -> World:
        return self.training.world

    @property
    def camera(self) -> Camera:
        return self.training.camera

    def _sqdist(self, queries: np.ndarray) -> np.ndarray:
        queries = np.atleast_2d(queries)
        m = len(queries)
        if self._split:
            w, h = self.camera.resolution
            qo = queries.reshape(m, h * w, 3)
            qa = qo[:, :, 0]
            qs = qo[:, :, 1:].reshape(m, -1)
            const = np.sum((qs - self._static) ** 2, axis=1)
            d2 = (np.einsum("ij,ij->i", qa, qa)[:, None] - 2.0 * qa @ self._agent.T
                  + self._agent_sq[None, :] + const[:, None])
        else:
            d2 = (np.einsum("ij,ij->i", queries, queries)[:, None] - 2.0 * queries @ self._full.T
                  + self._full_sq[None, :])
        return np.maximum(d2, 0.0)

    def predict_many(self, observations) -> np.ndarray:
        out = np.empty((len(np.atleast_2d(observations)), 2))
        obs = np.atleast_2d(observations)
        for start in range(0, len(obs), 2048):
            chunk = obs[start:start + 2048]
            d2 = self._sqdist(chunk)
            if self.mode == "1nn":
                out[start:start + len(chunk)] = self.labels[np.argmin(d2, axis=1)]
            else:
                out[start:start + len(chunk)] = self._idw(d2)
        return out

    def _idw(self, d2: np.ndarray) -> np.ndarray:
        k = self.k_neighbors
        idx = np.argpartition(d2, k - 1, axis=1)[:, :k] if k < d2.shape[1] else np.tile(np.arange(d2.shape[1]), (len(d2), 1))
        dk = np.take_along_axis(d2, idx, axis=1)
        order = np.argsort(dk, axis=1, kind="stable")
        idx = np.take_along_axis(idx, order, axis=1)
        dk = np.sqrt(np.take_along_axis(dk, order, axis=1))
        out = np.empty((len(d2), 2))
        exact = dk[:, 0] <= 1e-9
        out[exact] = self.labels[idx[exact, 0]]
        rest = ~exact
        if rest.any():
            w = 1.0 / dk[rest]
            w /= w.sum(axis=1, keepdims=True)
            out[rest] = np.einsum("ik,ikd->id", w, self.labels[idx[rest]])
        return out

    def predict(self, observation) -> Point2:
        data = observation.data if isinstance(observation, Observation) else observation
        x, y = self.predict_many(np.asarray(data)[None, :])[0]
        return Point2(float(x), float(y))

    def locate(self, positions, camera: Camera | None = None) -> np.ndarray:
        """``ℓ(h(p))`` for an (n, 2) array of true positions."""
        camera = camera or self.camera
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        out = np.empty((len(pts), 2))
        for start in range(0, len(pts), 2048):
            chunk = pts[start:start + 2048]
            out[start:start + len(chunk)] = self.predict_many(render_many(self.world, camera, chunk))
        return out

    def residual(self, positions, camera: Camera | None = None) -> np.ndarray:
        """``F(p) = ℓ(h(p)) - p``."""
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        return self.locate(pts, camera) - pts


def _collinear(pts: np.ndarray) -> bool:
    c = pts - pts.mean(axis=0)
    return np.linalg.matrix_rank(c, tol=1e-9) < 2


def estimate_lipschitz(pmap: PerceptionMap, refine: int = 2) -> float:
    """Largest finite-difference slope of the residual F on a refined lattice.

    The lattice has pitch ``spacing / refine`` over the training region;
    horizontal, vertical and diagonal neighbours are compared.  On the
    training grid itself an exact-interpolating map has F = 0, so the
    refinement is what exposes the slope between samples.
    """
    T = pmap.training
    step = T.spacing / refine
    xs = _axis(T.region[0], T.region[1], step)
    ys = _axis(T.region[2], T.region[3], step)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X, Y], axis=-1)
    if pts.shape[0] * pts.shape[1] < 2:
        return 0.0
    F = pmap.residual(pts.reshape(-1, 2)).reshape(pts.shape)
    best = 0.0
    for sy, sx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        a_sl = (slice(0, pts.shape[0] - sy), slice(max(0, -sx), pts.shape[1] - max(0, sx)))
        b_sl = (slice(sy, pts.shape[0]), slice(max(0, sx), pts.shape[1] - max(0, -sx)))
        dp = np.linalg.norm(pts[b_sl] - pts[a_sl], axis=-1)
        if dp.size == 0:
            continue
        dF = np.linalg.norm(F[b_sl] - F[a_sl], axis=-1)
        best = max(best, float(np.max(dF / dp)))
    return best


def fit(training: TrainingSet, mode: str = "1nn", refine: int = 2) -> PerceptionMap:
    """Fit a perception map and estimate the Lipschitz constant of its residual."""
    pmap = PerceptionMap(training, mode)
    pmap.lipschitz = estimate_lipschitz(pmap, refine)
    return pmap


# coverage ----------------------------------------------------------------

@dataclass
class CoverageRegion:
    """Union of balls ``{p_d} + r B`` that pass the coverage test."""

    epsilon: float
    lipschitz: float
    radius: float
    centers: np.ndarray
    lhs: np.ndarray = field(repr=False)
    included: np.ndarray = field(repr=False)

    @property
    def balls(self) -> np.ndarray:
        return self.centers[self.included]

    @property
    def epsilon_star(self) -> float:
        """Smallest ε for which every ball passes (max of the test's left side)."""
        return float(np.max(self.lhs)) if len(self.lhs) else math.nan

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        balls = self.balls
        if len(balls) == 0:
            return np.zeros(len(pts), dtype=bool)
        out = np.zeros(len(pts), dtype=bool)
        for start in range(0, len(pts), 4096):
            chunk = pts[start:start + 4096]
            d2 = ((chunk[:, None, :] - balls[None, :, :]) ** 2).sum(-1)
            out[start:start + len(chunk)] = (d2 <= self.radius ** 2).any(axis=1)
        return out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform samples from the union of included balls (rejection sampling)."""
        balls = self.balls
        if len(balls) == 0:
            raise ValueError("coverage region is empty")
        lo = balls.min(axis=0) - self.radius
        hi = balls.max(axis=0) + self.radius
        out = []
        have = 0
        while have < n:
            cand = rng.uniform(lo, hi, size=(max(2 * (n - have), 64), 2))
            cand = cand[self.contains(cand)]
            out.append(cand)
            have += len(cand)
        return np.concatenate(out)[:n]

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "lipschitz": self.lipschitz, "radius": self.radius,
                "epsilon_star": self.epsilon_star, "n_balls": int(len(self.centers)),
                "n_included": int(self.included.sum()),
                "max_training_error": float(np.max(self.lhs - self.lipschitz * self.radius)) if len(self.lhs) else None}


def coverage(pmap: PerceptionMap, training: TrainingSet, lipschitz: float, epsilon: float,
             radius: float | None = None) -> CoverageRegion:
    """Keep ball ``d`` iff ``|ℓ(θ_d) - p_d| + L r <= ε`` (worst point of the ball)."""
    if lipschitz < 0:
        raise ValueError("Lipschitz constant must be nonnegative")
    r = training.spacing if radius is None else radius
    pred = pmap.predict_many(training.observations)
    err = np.linalg.norm(pred - training.positions, axis=1)
    lhs = err + lipschitz * r
    return CoverageRegion(float(epsilon), float(lipschitz), float(r), training.positions.copy(),
                          lhs, lhs <= epsilon)


@dataclass
class BoundReport:
    max_error: float
    epsilon: float
    n_samples: int
    worst_position: tuple

    @property
    def passed(self) -> bool:
        return self.max_error <= self.epsilon


def verify_bound(pmap: PerceptionMap, world: World, region, n_samples: int, epsilon: float,
                 seed=0, camera: Camera | None = None) -> BoundReport:
    """Max of ``|ℓ(h(p)) - p|`` over uniform samples of ``region``.

    ``region`` is a :class:`CoverageRegion`, an explicit (n, 2) array of
    positions, or a rectangle ``(xmin, xmax, ymin, ymax)``.
    """
    rng = np.random.default_rng(seed)
    if isinstance(region, CoverageRegion):
        pts = region.sample(n_samples, rng)
    else:
        arr = np.asarray(region, dtype=float)
        if arr.ndim == 2:
            pts = arr
        else:
            x0, x1, y0, y1 = arr
            pts = rng.uniform([x0, y0], [x1, y1], size=(n_samples, 2))
    camera = camera or pmap.camera
    errs = np.empty(len(pts))
    for start in range(0, len(pts), 2048):
        chunk = pts[start:start + 2048]
        pred = pmap.predict_many(render_many(world, camera, chunk))
        errs[start:start + len(chunk)] = np.linalg.norm(pred - chunk, axis=1)
    i = int(np.argmax(errs)) if len(errs) else 0
    worst = tuple(float(v) for v in pts[i]) if len(errs) else ()
    return BoundReport(float(errs.max()) if len(errs) else 0.0, float(epsilon), len(pts), worst)


# runtime error models ----------------------------------------------------

@dataclass(frozen=True)
class ErrorModel:
    sigma: float = 0.0
    dropout: float = 0.0
    occlusions: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise sigma must be nonnegative")
        if not (0.0 <= self.dropout <= 1.0):
            raise ValueError("dropout probability must lie in [0, 1]")
        object.__setattr__(self, "occlusions", tuple(tuple(float(v) for v in r) for r in self.occlusions))


def estimate(pmap: PerceptionMap | None, world: World | None, p_true, error_model: ErrorModel,
             prev_estimate, rng: np.random.Generator, camera: Camera | None = None):
    """One perception sample: ``(estimate, dropped)``.

    Draws one uniform (dropout) and two normals (noise) on every call so the
    random stream does not depend on which branch is taken.  A dropped frame
    returns ``prev_estimate``; with no previous estimate the frame is used.
    ``pmap=None`` means exact localization before noise.
    """
    u = rng.random()
    noise = rng.normal(0.0, 1.0, 2) * error_model.sigma
    if u < error_model.dropout and prev_estimate is not None:
        return as_point(prev_estimate), True
    if pmap is None:
        base = (float(p_true[0]), float(p_true[1]))
    else:
        cam = camera or pmap.camera.with_occlusions(error_model.occlusions)
        x, y = pmap.predict_many(render_many(world or pmap.world, cam, [p_true]))[0]
        base = (float(x), float(y))
    return Point2(base[0] + float(noise[0]), base[1] + float(noise[1])), False


class Estimator:
    """Stateful perception channel for one run (own RNG stream, zero-order hold)."""

    def __init__(self, pmap: PerceptionMap | None, error_model: ErrorModel, world: World | None = None,
                 rng: np.random.Generator | None = None):
        self.pmap = pmap
        self.error_model = error_model
        self.world = world if world is not None else (pmap.world if pmap is not None else None)
        self.rng = rng if rng is not None else np.random.default_rng(error_model.seed)
        self.camera = pmap.camera.with_occlusions(error_model.occlusions) if pmap is not None else None
        self.prev = None

    def __call__(self, p, t=0.0):
        est, dropped = estimate(self.pmap, self.world, p, self.error_model, self.prev, self.rng, self.camera)
        self.prev = est
        return est, dropped
