"""Label-folded, linearly separable datasets.

A :class:`Dataset` stores only the folded samples ``y_n * x_n``.  Instances are
immutable so they can be shared freely between parallel runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

RESCALE_SLACK = 1e-6


class Dataset:
    """Folded sample matrix with its scaling certificate.

    Parameters
    ----------
    points : array_like, shape (n, d)
        Folded samples, one per row.
    """

    __slots__ = ("_points", "_cert")

    def __init__(self, points):
        X = np.array(points, dtype=float, copy=True)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise ValueError("points must be a nonempty (n, d) array")
        if not np.all(np.isfinite(X)):
            raise ValueError("points must be finite")
        X.setflags(write=False)
        self._points = X
        sigma = float(np.linalg.norm(X, 2))
        maxn = float(np.max(np.linalg.norm(X, axis=1)))
        self._cert = (sigma, maxn)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    @property
    def n(self) -> int:
        return self._points.shape[0]

    @property
    def scale_certificate(self) -> tuple[float, float]:
        """(sigma_max(X), max_n ||x_n||_2)."""
        return self._cert

    @property
    def is_rescaled(self) -> bool:
        sigma, maxn = self._cert
        return sigma <= 1.0 and maxn < 1.0

    def __len__(self):
        return self.n

    def __eq__(self, other):
        return isinstance(other, Dataset) and np.array_equal(self._points, other._points)

    def __hash__(self):
        return hash(self._points.tobytes())

    def __repr__(self):
        return f"Dataset(n={self.n}, dim={self.dim}, sigma_max={self._cert[0]:.6g})"


@dataclass(frozen=True)
class SeparabilityWitness:
    separator: np.ndarray
    min_inner: float


@dataclass(frozen=True)
class NotSeparable:
    """Certificate: a convex combination of the samples with (near) zero norm."""

    weights: np.ndarray
    hull_point: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.hull_point))


@dataclass(frozen=True)
class Indeterminate:
    reason: str
    residual: float


def fold_labels(points, labels) -> Dataset:
    X = np.asarray(points, dtype=float)
    y = np.asarray(labels)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if len(X) != len(y):
        raise ValueError(f"{len(X)} points but {len(y)} labels")
    if not np.all((y == 1) | (y == -1)):
        raise ValueError("labels must be +1 or -1")
    return Dataset(X * y.astype(float)[:, None])


def rescale(ds: Dataset) -> tuple[Dataset, float]:
    """Multiply every point by one scalar so that sigma_max <= 1 and max norm < 1."""
    sigma, maxn = ds.scale_certificate
    if maxn == 0.0:
        raise ValueError("cannot rescale an all-zero dataset")
    s = min(1.0 / (sigma * (1.0 + RESCALE_SLACK)), 1.0 / (maxn * (1.0 + RESCALE_SLACK)))
    return Dataset(ds.points * s), s


def check_separable(ds: Dataset):
    """Witness, NotSeparable certificate, or Indeterminate."""
    from .maxmargin import Infeasible, MaxIterations, min_norm_point

    try:
        res = min_norm_point(ds.points)
    except MaxIterations as exc:
        return Indeterminate(str(exc), exc.residual)
    except Infeasible as exc:
        return NotSeparable(exc.weights, exc.hull_point)
    w = res.point / float(res.point @ res.point)
    m = float(np.min(ds.points @ w))
    if m <= 0:
        return Indeterminate("separator candidate has nonpositive margin", -m)
    return SeparabilityWitness(w, m)


# ---------------------------------------------------------------------------
# canonical constructions

FIG1_SUPPORT = np.array([[0.5, 1.5], [1.5, 0.5]])


def make_fig1_dataset(n_extra_per_class: int, seed: int = 0, rescaled: bool = True) -> Dataset:
    """Four-support-vector set plus random non-support points per class.

    Positive class holds (0.5, 1.5), (1.5, 0.5) and the negative class their
    negations, so after folding each support vector appears twice.  Extra points
    are drawn uniformly with unnormalized margin in [2.5, 4] (so at distance
    more than 2 from the margin hyperplane) and a lateral offset in [-2, 2]
    along (1, -1)/sqrt(2).  Negative-class extras are negated before folding.
    """
    if n_extra_per_class < 0:
        raise ValueError("n_extra_per_class must be nonnegative")
    rng = np.random.default_rng(seed)
    w_hat = np.array([0.5, 0.5])
    along = w_hat / (w_hat @ w_hat)
    lateral = np.array([1.0, -1.0]) / math.sqrt(2.0)

    pts = [FIG1_SUPPORT[0], FIG1_SUPPORT[1], -FIG1_SUPPORT[0], -FIG1_SUPPORT[1]]
    labels = [1, 1, -1, -1]
    for label in (1, -1):
        m = rng.uniform(2.5, 4.0, size=n_extra_per_class)
        off = rng.uniform(-2.0, 2.0, size=n_extra_per_class)
        for mi, oi in zip(m, off):
            pts.append(label * (mi * along + oi * lateral))
            labels.append(label)
    ds = fold_labels(np.array(pts), labels)
    return rescale(ds)[0] if rescaled else ds


def make_appendix_d_dataset(rescaled: bool = False) -> Dataset:
    """Two orthogonal points (1, 0) and (0, 2)."""
    ds = Dataset([[1.0, 0.0], [0.0, 2.0]])
    return rescale(ds)[0] if rescaled else ds


def make_gaussian_dataset(n_per_class: int, seed: int = 0, mean=(5.0, 2.0),
                          scale: float = 1.0, rescaled: bool = False) -> Dataset:
    """Two Gaussian blobs at +mean and -mean, folded.  Not guaranteed separable."""
    rng = np.random.default_rng(seed)
    mean = np.asarray(mean, dtype=float)
    pos = mean + scale * rng.standard_normal((n_per_class, mean.size))
    neg = -mean + scale * rng.standard_normal((n_per_class, mean.size))
    labels = np.r_[np.ones(n_per_class), -np.ones(n_per_class)]
    ds = fold_labels(np.vstack([pos, neg]), labels)
    return rescale(ds)[0] if rescaled else ds


# ---------------------------------------------------------------------------
# CSV persistence

def _fmt17(v: float) -> str:
    return "%.17g" % v


def save_csv(ds: Dataset, path) -> None:
    sigma, maxn = ds.scale_certificate
    lines = [f"# dim={ds.dim} n={ds.n} sigma_max={_fmt17(sigma)} max_norm={_fmt17(maxn)}"]
    for row in ds.points:
        lines.append(",".join(_fmt17(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_csv(path) -> Dataset:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].lstrip("# ").startswith("dim="):
        raise ValueError(f"{path}: missing '# dim=<d> n=<N> ...' header")
    fields = {}
    for tok in text[0].lstrip("#").replace(",", " ").split():
        if "=" not in tok:
            raise ValueError(f"{path}: malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        fields[k.strip()] = v.strip()
    try:
        d, n = int(fields["dim"]), int(fields["n"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: header must define integer dim and n") from exc
    rows = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        vals = line.split(",")
        if len(vals) != d:
            raise ValueError(f"{path}:{lineno}: expected {d} values, got {len(vals)}")
        try:
            rows.append([float(v) for v in vals])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if len(rows) != n:
        raise ValueError(f"{path}: header says n={n} but found {len(rows)} rows")
    return Dataset(np.array(rows).reshape(n, d))
