"""
Fall/stand posture classifier

Silhouette features from foreground masks (column and row projection
histograms, bounding-box aspect, fill and centroid height) feed a linear
soft-margin SVM trained in the dual with pairwise (SMO) updates.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .background_model import ForegroundMask
from ..utils.regions import RoiRegion

logger = logging.getLogger(__name__)

PROJECTION_BINS = 16
FEATURE_DIM = 2 * PROJECTION_BINS + 3
MODEL_VERSION = "svm-v1"
TAU = 1e-12


class PatternLabel(str, Enum):
    FALL = "Fall"
    STAND = "Stand"

    @property
    def sign(self) -> int:
        return 1 if self is PatternLabel.FALL else -1


class TrainingError(ValueError):
    """Training data cannot produce a model."""


class ModelFormatError(ValueError):
    """A model file is not a valid svm-v1 model."""


Sample = Tuple[np.ndarray, PatternLabel]


def project(profile: np.ndarray, bins: int = PROJECTION_BINS) -> np.ndarray:
    """
    Resample a projection profile to a fixed number of bins.

    Each bin receives the profile mass over its proportional share of the
    axis, splitting pixels that straddle a bin edge.
    """
    profile = np.asarray(profile, dtype=np.float64)
    cumulative = np.concatenate([[0.0], np.cumsum(profile)])
    edges = np.linspace(0.0, float(len(profile)), bins + 1)
    binned = np.diff(np.interp(edges, np.arange(len(profile) + 1, dtype=np.float64), cumulative))
    total = binned.sum()
    return binned / total if total > 0 else binned


def extract_features(mask: ForegroundMask, roi: RoiRegion) -> Optional[np.ndarray]:
    """
    Silhouette features of the foreground inside the ROI.

    Returns:
        A FEATURE_DIM vector, or None when the ROI holds no foreground

    Raises:
        RegionError: ROI is not within the mask
    """
    roi.require_within(mask.width, mask.height)
    silhouette = mask.bits[roi.slices()]
    ys, xs = np.nonzero(silhouette)
    if ys.size == 0:
        return None

    columns = project(silhouette.sum(axis=0))
    rows = project(silhouette.sum(axis=1))
    box_w = int(xs.max() - xs.min() + 1)
    box_h = int(ys.max() - ys.min() + 1)
    aspect = box_h / box_w
    fill = ys.size / (box_w * box_h)
    centroid = float(ys.mean()) / roi.height
    return np.concatenate([columns, rows, [aspect, fill, centroid]])


@dataclass
class TrainingStats:
    objective: float
    iterations: int
    kkt_residual: float
    support_vectors: int
    converged: bool
    alphas: np.ndarray = field(repr=False)


@dataclass
class SvmModel:
    """Linear decision function w.x + b; Fall is the positive class."""

    weights: np.ndarray
    bias: float
    C: float
    count_fall: int
    count_stand: int
    stats: Optional[TrainingStats] = None

    @property
    def dimension(self) -> int:
        return int(self.weights.shape[0])

    def decision(self, feature: np.ndarray) -> float:
        feature = np.asarray(feature, dtype=np.float64)
        if feature.shape != (self.dimension,):
            raise ValueError(
                f"Feature dimension {feature.shape} does not match model dimension {self.dimension}"
            )
        return float(feature @ self.weights + self.bias)


def _check_samples(samples: Sequence[Sample]) -> Tuple[np.ndarray, np.ndarray]:
    if not samples:
        raise TrainingError("No training samples")
    X = []
    for index, (feature, _) in enumerate(samples):
        vector = np.asarray(feature, dtype=np.float64)
        if not np.all(np.isfinite(vector)):
            raise TrainingError(f"Sample {index} has a non-finite feature")
        if X and vector.shape != X[0].shape:
            raise TrainingError(
                f"Sample {index} has dimension {vector.shape}, expected {X[0].shape}"
            )
        X.append(vector)
    y = np.array([label.sign for _, label in samples], dtype=np.float64)
    if np.all(y > 0) or np.all(y < 0):
        raise TrainingError("Training data must contain both Fall and Stand samples")
    return np.vstack(X), y


def _working_sets(
    alpha: np.ndarray, gradient: np.ndarray, y: np.ndarray, C: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Scores -y*grad of samples that may move up or down; others are +-inf."""
    score = -y * gradient
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    return np.where(up, score, -np.inf), np.where(low, score, np.inf)


def _violating_pair(
    alpha: np.ndarray, gradient: np.ndarray, y: np.ndarray, C: float
) -> Tuple[int, int, float, float]:
    up_scores, low_scores = _working_sets(alpha, gradient, y, C)
    i = int(np.argmax(up_scores))
    j = int(np.argmin(low_scores))
    return i, j, float(up_scores[i]), float(low_scores[j])


def _partner(
    i: int, up_scores: np.ndarray, low_scores: np.ndarray
) -> Tuple[int, int, float]:
    """
    Most violating pair containing i, as (up index, low index, violation).

    The partner is the extreme of the opposite set, lowest index on ties.
    """
    best: Tuple[int, int, float] = (i, i, -np.inf)
    if np.isfinite(up_scores[i]):
        j = int(np.argmin(low_scores))
        best = (i, j, float(up_scores[i] - low_scores[j]))
    if np.isfinite(low_scores[i]):
        j = int(np.argmax(up_scores))
        violation = float(up_scores[j] - low_scores[i])
        if violation > best[2]:
            best = (j, i, violation)
    return best


def _pair_update(
    alpha: np.ndarray,
    gradient: np.ndarray,
    Q: np.ndarray,
    y: np.ndarray,
    C: float,
    i: int,
    j: int,
) -> None:
    old_i, old_j = alpha[i], alpha[j]
    if y[i] != y[j]:
        quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
        if quad <= 0:
            quad = TAU
        delta = (-gradient[i] - gradient[j]) / quad
        diff = alpha[i] - alpha[j]
        alpha[i] += delta
        alpha[j] += delta
        if diff > 0:
            if alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = diff
        elif alpha[i] < 0:
            alpha[i] = 0.0
            alpha[j] = -diff
        if diff > 0:
            if alpha[i] > C:
                alpha[i] = C
                alpha[j] = C - diff
        elif alpha[j] > C:
            alpha[j] = C
            alpha[i] = C + diff
    else:
        quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
        if quad <= 0:
            quad = TAU
        delta = (gradient[i] - gradient[j]) / quad
        total = alpha[i] + alpha[j]
        alpha[i] -= delta
        alpha[j] += delta
        if total > C:
            if alpha[i] > C:
                alpha[i] = C
                alpha[j] = total - C
        elif alpha[j] < 0:
            alpha[j] = 0.0
            alpha[i] = total
        if total > C:
            if alpha[j] > C:
                alpha[j] = C
                alpha[i] = total - C
        elif alpha[i] < 0:
            alpha[i] = 0.0
            alpha[j] = total

    gradient += Q[:, i] * (alpha[i] - old_i) + Q[:, j] * (alpha[j] - old_j)


def train(
    samples: Sequence[Sample],
    C: float = 10.0,
    tolerance: float = 1e-3,
    max_iterations: int = 100_000,
) -> SvmModel:
    """
    Train a linear soft-margin SVM.

    Sweeps the samples in index order. A sample whose KKT violation reaches
    the tolerance is updated together with its most violating partner; the
    sweeps repeat until one completes without an update.

    Raises:
        TrainingError: Empty or single-class data, or a non-finite feature
    """
    if C <= 0 or tolerance <= 0:
        raise TrainingError("C and tolerance must be positive")
    X, y = _check_samples(samples)
    n = len(y)
    Q = (y[:, None] * y[None, :]) * (X @ X.T)
    alpha = np.zeros(n)
    gradient = -np.ones(n)

    iterations = 0
    converged = False
    while not converged and iterations < max_iterations:
        updated = False
        for index in range(n):
            up_scores, low_scores = _working_sets(alpha, gradient, y, C)
            i, j, violation = _partner(index, up_scores, low_scores)
            if violation < tolerance:
                continue
            _pair_update(alpha, gradient, Q, y, C, i, j)
            iterations += 1
            updated = True
            if iterations >= max_iterations:
                break
        converged = not updated

    _, _, m, M = _violating_pair(alpha, gradient, y, C)
    if not converged:
        logger.warning(f"SVM solver stopped after {iterations} iterations (violation {m - M:.3g})")

    weights = (alpha * y) @ X
    free = (alpha > 0) & (alpha < C)
    margin = y - X @ weights
    if free.any():
        bias = float(margin[free].mean())
    elif math.isfinite(m) and math.isfinite(M):
        bias = (m + M) / 2.0
    else:
        bias = 0.0
    objective = float(alpha.sum() - 0.5 * (weights @ weights))

    stats = TrainingStats(
        objective=objective,
        iterations=iterations,
        kkt_residual=max(m - M, 0.0),
        support_vectors=int(np.count_nonzero(alpha > 0)),
        converged=converged,
        alphas=alpha.copy(),
    )
    logger.info(
        f"🧮 Trained SVM on {n} samples: objective {objective:.6g}, "
        f"{stats.support_vectors} support vectors, {iterations} iterations"
    )
    return SvmModel(
        weights=weights,
        bias=bias,
        C=C,
        count_fall=int(np.count_nonzero(y > 0)),
        count_stand=int(np.count_nonzero(y < 0)),
        stats=stats,
    )


def predict(model: SvmModel, feature: np.ndarray) -> Tuple[PatternLabel, float]:
    """
    Classify one feature vector; a zero score is Stand.

    Raises:
        ValueError: Feature dimension differs from the model
    """
    score = model.decision(feature)
    return (PatternLabel.FALL if score > 0 else PatternLabel.STAND), score


@dataclass
class EvalReport:
    """Confusion counts with Fall as the positive class."""

    true_fall: int
    false_stand: int
    false_fall: int
    true_stand: int

    @staticmethod
    def _ratio(numerator: int, denominator: int) -> float:
        return numerator / denominator if denominator else 0.0

    @property
    def fall_recall(self) -> float:
        return self._ratio(self.true_fall, self.true_fall + self.false_stand)

    @property
    def stand_recall(self) -> float:
        return self._ratio(self.true_stand, self.true_stand + self.false_fall)

    @property
    def fall_error(self) -> float:
        """False-discovery rate among samples predicted Fall."""
        return self._ratio(self.false_fall, self.true_fall + self.false_fall)

    @property
    def stand_error(self) -> float:
        return self._ratio(self.false_stand, self.true_stand + self.false_stand)

    def rows(self) -> List[Tuple[str, float]]:
        return [
            ("Average prediction of fall pattern", self.fall_recall),
            ("Average prediction of stand pattern", self.stand_recall),
            ("Average error rate of fall pattern", self.fall_error),
            ("Average error rate of stand pattern", self.stand_error),
        ]

    def render_table(self) -> str:
        width = max(len(name) for name, _ in self.rows())
        lines = [f"{name:<{width}}  {value * 100:6.2f}%" for name, value in self.rows()]
        lines.append(
            f"Confusion: fall->fall {self.true_fall}, fall->stand {self.false_stand}, "
            f"stand->fall {self.false_fall}, stand->stand {self.true_stand}"
        )
        return "\n".join(lines)

    def to_tsv(self) -> str:
        lines = ["metric\tvalue"]
        lines += [f"{name}\t{value:.6f}" for name, value in self.rows()]
        lines += [
            f"true_fall\t{self.true_fall}",
            f"false_stand\t{self.false_stand}",
            f"false_fall\t{self.false_fall}",
            f"true_stand\t{self.true_stand}",
        ]
        return "\n".join(lines) + "\n"


def evaluate(model: SvmModel, samples: Sequence[Sample]) -> EvalReport:
    if not samples:
        raise ValueError("Cannot evaluate on an empty sample set")
    counts = {(actual, predicted): 0 for actual in PatternLabel for predicted in PatternLabel}
    for feature, actual in samples:
        predicted, _ = predict(model, feature)
        counts[(actual, predicted)] += 1
    return EvalReport(
        true_fall=counts[(PatternLabel.FALL, PatternLabel.FALL)],
        false_stand=counts[(PatternLabel.FALL, PatternLabel.STAND)],
        false_fall=counts[(PatternLabel.STAND, PatternLabel.FALL)],
        true_stand=counts[(PatternLabel.STAND, PatternLabel.STAND)],
    )


def classify_day(
    model: SvmModel,
    frames: Iterable[Tuple[ForegroundMask, str]],
    roi: RoiRegion,
    output_dir: Union[str, Path],
) -> List[Tuple[str, Optional[PatternLabel]]]:
    """
    Classify a day's masks and route snapshot names to fall.list, stand.list or skip.list.

    Returns:
        (snapshot name, label) per frame; the label is None for empty silhouettes
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    routed: dict = {"fall.list": [], "stand.list": [], "skip.list": []}
    results: List[Tuple[str, Optional[PatternLabel]]] = []

    for mask, name in frames:
        feature = extract_features(mask, roi)
        if feature is None:
            routed["skip.list"].append(name)
            results.append((name, None))
            continue
        label, _ = predict(model, feature)
        routed["fall.list" if label is PatternLabel.FALL else "stand.list"].append(name)
        results.append((name, label))

    for filename, names in routed.items():
        (output_dir / filename).write_text("".join(f"{n}\n" for n in names), encoding="utf-8")
    logger.info(
        f"📂 Routed {len(results)} frames: {len(routed['fall.list'])} fall, "
        f"{len(routed['stand.list'])} stand, {len(routed['skip.list'])} skipped"
    )
    return results


def save_model(model: SvmModel, path: Union[str, Path]) -> None:
    lines = [
        MODEL_VERSION,
        f"dimension {model.dimension}",
        f"C {model.C!r}",
        f"bias {model.bias!r}",
        f"count_fall {model.count_fall}",
        f"count_stand {model.count_stand}",
        "weights " + " ".join(repr(float(w)) for w in model.weights),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: Union[str, Path]) -> SvmModel:
    """
    Read an svm-v1 model file.

    Raises:
        ModelFormatError: Wrong version, missing field, bad number or dimension
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MODEL_VERSION:
        raise ModelFormatError(f"{path}: expected '{MODEL_VERSION}' header")
    fields = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        key, _, value = line.partition(" ")
        fields[key] = value.strip()

    try:
        dimension = int(fields["dimension"])
        C = float(fields["C"])
        bias = float(fields["bias"])
        count_fall = int(fields["count_fall"])
        count_stand = int(fields["count_stand"])
        weights = np.array([float(v) for v in fields["weights"].split()], dtype=np.float64)
    except KeyError as e:
        raise ModelFormatError(f"{path}: missing field {e.args[0]}") from e
    except ValueError as e:
        raise ModelFormatError(f"{path}: {e}") from e

    if weights.shape != (dimension,):
        raise ModelFormatError(f"{path}: {weights.size} weights for dimension {dimension}")
    if not (np.all(np.isfinite(weights)) and math.isfinite(bias) and math.isfinite(C)):
        raise ModelFormatError(f"{path}: non-finite parameters")
    return SvmModel(weights, bias, C, count_fall, count_stand)
