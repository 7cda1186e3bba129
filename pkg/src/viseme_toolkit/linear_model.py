"""Linear shape and appearance models.

A model is a mean vector plus orthonormal modes:

    s = s0 + sum_i p_i s_i           (shape, landmark x/y pairs)
    A(x) = A0(x) + sum_i l_i A_i(x)  (appearance, pixels warped onto the mean shape)

Training is PCA on the observation rows, keeping the fewest modes that explain
the requested fraction of the total variance.
"""

import logging
from typing import Tuple

import numpy as np

from .errors import DimensionMismatchError, ModelFileError, TrainingError
from .features import format_float, format_vector

logger = logging.getLogger(__name__)

# Slack when comparing a cumulative variance ratio against the requested fraction
FRACTION_TOLERANCE = 1e-12


class LinearModel:
    def __init__(
        self,
        mean: np.ndarray,
        modes: np.ndarray,
        eigenvalues: np.ndarray,
        retained_fraction: float,
        total_variance: float,
        domain_note: str = "",
    ):
        self.mean = np.asarray(mean, dtype=float)
        modes = np.asarray(modes, dtype=float)
        if modes.ndim == 1:
            modes = modes[:, np.newaxis]
        if modes.shape[0] != self.mean.shape[0]:
            raise DimensionMismatchError(self.mean.shape[0], modes.shape[0], "mode vectors")
        self.modes = modes
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        if self.modes.shape[1] != self.eigenvalues.shape[0]:
            raise ModelFileError("One eigenvalue is required per mode")
        self.retained_fraction = float(retained_fraction)
        self.total_variance = float(total_variance)
        self.domain_note = domain_note

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def n_modes(self) -> int:
        return self.modes.shape[1]

    @property
    def explained_fraction(self) -> float:
        if self.total_variance <= 0:
            return 1.0
        return float(self.eigenvalues.sum() / self.total_variance)

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatchError(self.dim, x.shape[-1], "observation")
        return (x - self.mean) @ self.modes

    def reconstruct(self, params: np.ndarray) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        if params.shape[-1] != self.n_modes:
            raise DimensionMismatchError(self.n_modes, params.shape[-1], "parameter vector")
        return self.mean + params @ self.modes.T

    def __repr__(self) -> str:
        return f"LinearModel(dim={self.dim}, modes={self.n_modes}, explained={self.explained_fraction:.4f})"


def _orient_modes(modes: np.ndarray) -> np.ndarray:
    """Flip each mode so its largest-magnitude entry is positive (lowest index on ties)"""
    if modes.size == 0:
        return modes
    pivots = np.argmax(np.abs(modes), axis=0)
    signs = np.sign(modes[pivots, np.arange(modes.shape[1])])
    signs[signs == 0] = 1.0
    return modes * signs


def _principal_axes(centered: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and unit eigenvectors of the sample covariance.

    Decomposes whichever of the d x d covariance or the n x n Gram matrix is
    smaller; appearance vectors are long and frames few.
    """
    count, dim = centered.shape
    scale = count - 1
    if dim <= count:
        covariance = centered.T @ centered / scale
        eigenvalues, vectors = np.linalg.eigh(covariance)
        order = np.argsort(-eigenvalues, kind="stable")
        return np.clip(eigenvalues[order], 0.0, None), vectors[:, order]

    gram = centered @ centered.T / scale
    eigenvalues, vectors = np.linalg.eigh(gram)
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    vectors = vectors[:, order]
    keep = eigenvalues > 0
    modes = centered.T @ vectors[:, keep]
    norms = np.linalg.norm(modes, axis=0)
    modes = modes / norms
    return eigenvalues[keep], modes


def select_mode_count(eigenvalues: np.ndarray, fraction: float) -> int:
    """Smallest m whose leading eigenvalues reach `fraction` of the total"""
    total = float(np.sum(eigenvalues))
    if total <= 0:
        return 0
    ratios = np.cumsum(eigenvalues) / total
    reached = np.flatnonzero(ratios >= fraction - FRACTION_TOLERANCE)
    return int(reached[0]) + 1 if reached.size else len(eigenvalues)


def train_linear_model(
    data: np.ndarray,
    retained_fraction: float = 0.95,
    domain_note: str = "",
    normalize: bool = False,
) -> LinearModel:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise DimensionMismatchError(2, data.ndim, "observation matrix rank")
    if data.shape[0] < 2:
        raise TrainingError("At least two observations are needed to train a linear model")
    if not 0 < retained_fraction <= 1:
        raise TrainingError(f"retained_fraction must be in (0, 1], got {retained_fraction}")

    if normalize:
        data, _ = procrustes_align(data)

    mean = data.mean(axis=0)
    centered = data - mean
    eigenvalues, vectors = _principal_axes(centered)
    total = float(np.sum(eigenvalues))
    m = select_mode_count(eigenvalues, retained_fraction)
    if total <= 0:
        logger.warning("Observations have zero variance; model keeps the mean only")

    modes = _orient_modes(vectors[:, :m])
    logger.info(
        "Linear model: %d of %d modes retain %.4f of variance",
        m, len(eigenvalues), (eigenvalues[:m].sum() / total) if total > 0 else 1.0,
    )
    return LinearModel(mean, modes, eigenvalues[:m], retained_fraction, total, domain_note)


def project(model: LinearModel, x: np.ndarray) -> np.ndarray:
    return model.project(x)


def reconstruct(model: LinearModel, params: np.ndarray) -> np.ndarray:
    return model.reconstruct(params)


def project_all(model: LinearModel, data: np.ndarray) -> np.ndarray:
    """Parameter frames for every observation row"""
    return model.project(np.atleast_2d(np.asarray(data, dtype=float)))


def _align_pair(shape: np.ndarray, target: np.ndarray) -> np.ndarray:
    # Orthogonal Procrustes rotation without reflection
    u, _, vt = np.linalg.svd(shape.T @ target)
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    rotation = u @ np.diag([1.0, d]) @ vt
    return shape @ rotation


def procrustes_align(
    shapes: np.ndarray, max_iterations: int = 100, tolerance: float = 1e-10
) -> Tuple[np.ndarray, np.ndarray]:
    """Generalized Procrustes alignment of landmark vectors (x1 y1 x2 y2 ...).

    Removes translation, scale and rotation relative to the evolving mean shape.
    Returns the aligned vectors and the unit-norm mean shape vector.
    """
    shapes = np.asarray(shapes, dtype=float)
    if shapes.shape[1] % 2:
        raise DimensionMismatchError(shapes.shape[1] + 1, shapes.shape[1], "landmark vector (x/y pairs)")
    points = shapes.reshape(shapes.shape[0], -1, 2)
    points = points - points.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(points, axis=(1, 2), keepdims=True)
    norms[norms == 0] = 1.0
    points = points / norms

    mean = points[0].copy()
    for _ in range(max_iterations):
        points = np.stack([_align_pair(p, mean) for p in points])
        new_mean = points.mean(axis=0)
        new_mean /= np.linalg.norm(new_mean) or 1.0
        new_mean = _align_pair(new_mean, mean)
        converged = np.linalg.norm(new_mean - mean) < tolerance
        mean = new_mean
        if converged:
            break
    return points.reshape(shapes.shape[0], -1), mean.reshape(-1)


def save_model(model: LinearModel) -> str:
    lines = [
        f"dim {model.dim}",
        f"modes {model.n_modes}",
        f"retained_fraction {format_float(model.retained_fraction)}",
        f"total_variance {format_float(model.total_variance)}",
        f"domain {model.domain_note or '-'}",
        "eigenvalues " + format_vector(model.eigenvalues),
        format_vector(model.mean),
    ]
    lines.extend(format_vector(model.modes[:, i]) for i in range(model.n_modes))
    return "\n".join(line.rstrip() for line in lines) + "\n"


def load_model(text: str) -> LinearModel:
    lines = text.splitlines()
    try:
        header = {}
        for line in lines[:6]:
            key, _, value = line.partition(" ")
            header[key] = value.strip()
        dim = int(header["dim"])
        n_modes = int(header["modes"])
        fraction = float(header["retained_fraction"])
        total = float(header["total_variance"])
        domain = "" if header["domain"] == "-" else header["domain"]
        eigenvalues = np.array([float(v) for v in header["eigenvalues"].split()])
        mean = np.array([float(v) for v in lines[6].split()])
        modes = np.array(
            [[float(v) for v in lines[7 + i].split()] for i in range(n_modes)]
        ).reshape(n_modes, dim).T
    except (KeyError, IndexError, ValueError) as e:
        raise ModelFileError(f"Malformed linear model file: {e}")
    if mean.shape[0] != dim:
        raise DimensionMismatchError(dim, mean.shape[0], "model mean")
    return LinearModel(mean, modes, eigenvalues, fraction, total, domain)


def residual_fraction(model: LinearModel, data: np.ndarray) -> float:
    """Share of the training energy the model fails to reconstruct"""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    centered = data - model.mean
    energy = float(np.sum(centered**2))
    if energy == 0:
        return 0.0
    residual = data - model.reconstruct(model.project(data))
    return float(np.sum(residual**2) / energy)
