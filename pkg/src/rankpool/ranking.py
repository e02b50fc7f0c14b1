"""Class-separability scoring of projected activations.

Every projected column is treated as a one-versus-rest split: the column's
class is the foreground, everything else is pooled into the background.
Foreground and background values are summarized by histogram densities on a
shared range (right-closed equal-width bins; out-of-range values clamp into
the boundary bins), and the column-level separation is the KL divergence
between the two.

Per-instance scores evaluate the pointwise KL integrand fg * log(fg / bg)
at each instance's bin and add the c column contributions. Summing the
integrand once per bin recovers the column KL exactly, and scoring needs no
labels, so the same frozen model ranks training and test activations alike.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateLabelsError,
    DimensionError,
    EstimationError,
)
from .linalg import LabeledMatrix
from .projection import project
from .tensor import as_matrix

DEFAULT_BINS = 64
SMOOTHING_EPS = 1e-8


@dataclass(frozen=True)
class HistogramDensity:
    """Equal-width histogram over [lo, hi] with smoothed, normalized mass."""

    lo: float
    hi: float
    bins: int
    mass: np.ndarray

    def bin_of(self, values):
        """Bin index per value: right-closed bins, boundary clamping."""
        edges = np.linspace(self.lo, self.hi, self.bins + 1)
        idx = np.searchsorted(edges, np.asarray(values, dtype=np.float64), side="left") - 1
        return np.clip(idx, 0, self.bins - 1)


def estimate_density(values, lo, hi, bins):
    """Histogram density with additive smoothing.

    Bin b spans (lo + b*wd, lo + (b+1)*wd], except bin 0 which also absorbs
    everything <= lo; values beyond hi clamp into the last bin. Counts are
    normalized to probabilities, raised by SMOOTHING_EPS, and renormalized,
    so every bin carries strictly positive mass.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise EstimationError("cannot estimate a density from zero samples")
    if not hi > lo:
        raise EstimationError(f"need hi > lo, got [{lo}, {hi}]")
    bins = int(bins)
    if bins < 1:
        raise EstimationError("need at least one bin")

    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, values, side="left") - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    probs = counts / counts.sum()
    mass = (probs + SMOOTHING_EPS) / (1.0 + bins * SMOOTHING_EPS)
    return HistogramDensity(lo=float(lo), hi=float(hi), bins=bins, mass=mass)


def _check_same_binning(p, q):
    if (p.lo, p.hi, p.bins) != (q.lo, q.hi, q.bins):
        raise DimensionError(
            f"histogram binnings differ: ({p.lo},{p.hi},{p.bins}) vs ({q.lo},{q.hi},{q.bins})"
        )


def kl_divergence(p, q):
    """KL(p || q) over shared bins; exact 0 for identical mass vectors."""
    _check_same_binning(p, q)
    if np.array_equal(p.mass, q.mass):
        return 0.0
    return float(np.sum(p.mass * np.log(p.mass / q.mass)))


@dataclass(frozen=True)
class RankingModel:
    """Frozen one-versus-rest densities and column KL values, one per class."""

    c: int
    fg_density: list
    bg_density: list
    column_kl: np.ndarray
    bins: int = DEFAULT_BINS


def fit_ranking(projected, labels, bins=DEFAULT_BINS):
    """Fit per-column foreground/background densities from labeled projections.

    Column i uses class-i rows as foreground and all remaining rows as
    background, on a shared range spanning the whole column. A column with
    zero value range gets a synthetic unit-width range so both densities
    collapse into one bin and its KL is 0.
    """
    projected = as_matrix(projected)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size != projected.shape[0]:
        raise DimensionError(f"{labels.size} labels for {projected.shape[0]} rows")
    classes = np.unique(labels)
    c = projected.shape[1]
    if classes.size != c or not np.array_equal(classes, np.arange(c)):
        raise DegenerateLabelsError(
            f"projected width {c} must equal the number of distinct labels "
            f"0..c-1 (saw classes {classes.tolist()})"
        )
    if c < 2:
        raise DegenerateLabelsError("ranking needs >= 2 classes")

    fg_density, bg_density = [], []
    column_kl = np.zeros(c)
    for i in range(c):
        col = projected[:, i]
        lo, hi = float(col.min()), float(col.max())
        if not hi > lo:
            hi = lo + 1.0
        fg = estimate_density(col[labels == i], lo, hi, bins)
        bg = estimate_density(col[labels != i], lo, hi, bins)
        fg_density.append(fg)
        bg_density.append(bg)
        column_kl[i] = kl_divergence(fg, bg)
    return RankingModel(
        c=c, fg_density=fg_density, bg_density=bg_density, column_kl=column_kl, bins=bins
    )


def score_instances(projected, model):
    """Label-free per-instance scores under a frozen ranking model.

    Each instance contributes, per column, the KL integrand of its bin:
    fg_mass * log(fg_mass / bg_mass). Column contributions are summed.
    """
    projected = as_matrix(projected)
    if projected.shape[1] != model.c:
        raise DimensionError(
            f"projected width {projected.shape[1]} != model class count {model.c}"
        )
    scores = np.zeros(projected.shape[0])
    for i in range(model.c):
        fg, bg = model.fg_density[i], model.bg_density[i]
        idx = fg.bin_of(projected[:, i])
        fm = fg.mass[idx]
        bm = bg.mass[idx]
        scores += fm * np.log(fm / bm)
    return scores


def rank_instances(data, proj, model):
    """Project raw rows and score them: the end-to-end ranking map."""
    if isinstance(data, LabeledMatrix):
        data = data.matrix
    return score_instances(project(data, proj), model)
