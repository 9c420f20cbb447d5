"""
Adaptive mixture-of-Gaussians background model

Every pixel keeps up to K weighted Gaussian components sorted by weight over
standard deviation. Each frame updates the mixtures and yields a foreground
mask; the foreground pixel count inside an ROI is the motion metric used by
the event engine.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy.stats import norm

from ..tools.frame_io import FrameDimensionError, GrayFrame, write_frame_file
from ..utils.config_loader import BackgroundParams, ConfigurationError, RhoMode
from ..utils.regions import RoiRegion

logger = logging.getLogger(__name__)

RHO_FLOOR_FACTOR = 1e-4
UNSEEDED = math.nan


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: float
    variance: float


@dataclass(frozen=True)
class PixelMixture:
    """Components of one pixel in descending weight/sigma order."""

    components: Tuple[GaussianComponent, ...]

    @property
    def seeded(self) -> bool:
        return not math.isnan(self.components[0].mean)

    def total_weight(self) -> float:
        total = 0.0
        for c in self.components:
            total += c.weight
        return total


@dataclass(frozen=True, eq=False)
class ForegroundMask:
    """Boolean foreground flags with shape (height, width)."""

    bits: np.ndarray
    timestamp: int = 0

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def to_frame(self) -> GrayFrame:
        """Render as a gray frame: 0 background, 255 foreground."""
        return GrayFrame(np.where(self.bits, 255, 0).astype(np.uint8), self.timestamp)


def matches(x: float, component: GaussianComponent, match_lambda: float) -> bool:
    """True iff x lies within match_lambda standard deviations of the component mean."""
    return abs(x - component.mean) <= match_lambda * math.sqrt(component.variance)


def decay_weight(weight: float, alpha: float, matched: bool) -> float:
    """One weight update step before normalization."""
    return (1.0 - alpha) * weight + alpha * (1.0 if matched else 0.0)


def learning_rate(x: float, mean: float, variance: float, params: BackgroundParams) -> float:
    """Mean/variance adaptation rate for a matched component."""
    alpha = params.alpha
    if params.rho_mode is RhoMode.SIMPLE:
        return alpha
    density = norm.pdf(x, mean, math.sqrt(variance))
    return min(max(alpha * float(density), alpha * RHO_FLOOR_FACTOR), 1.0)


def initial_mixture(params: BackgroundParams) -> PixelMixture:
    return PixelMixture((GaussianComponent(1.0, UNSEEDED, params.var_init),))


def update_pixel(
    mixture: PixelMixture, x: float, params: BackgroundParams
) -> Tuple[PixelMixture, bool]:
    """
    Advance one pixel's mixture by one observation.

    An unseeded mixture takes x as its mean and reports background.

    Returns:
        The updated mixture and whether x is foreground
    """
    if not mixture.seeded:
        first = mixture.components[0]
        return PixelMixture((GaussianComponent(first.weight, float(x), first.variance),)), False

    x = float(x)
    comps = list(mixture.components)
    matched = next(
        (k for k, c in enumerate(comps) if matches(x, c, params.match_lambda)), None
    )

    weights = [decay_weight(c.weight, params.alpha, k == matched) for k, c in enumerate(comps)]
    means = [c.mean for c in comps]
    variances = [c.variance for c in comps]

    if matched is not None:
        rho = learning_rate(x, means[matched], variances[matched], params)
        mean = (1.0 - rho) * means[matched] + rho * x
        d = x - mean
        variance = (1.0 - rho) * variances[matched] + rho * (d * d)
        means[matched] = mean
        variances[matched] = max(variance, params.variance_floor)
    else:
        slot = len(comps) if len(comps) < params.K else len(comps) - 1
        if slot == len(comps):
            weights.append(0.0)
            means.append(0.0)
            variances.append(0.0)
        weights[slot] = params.weight_init
        means[slot] = x
        variances[slot] = params.var_init

    total = weights[0]
    for w in weights[1:]:
        total = total + w
    weights = [w / total for w in weights]

    keys = [w / math.sqrt(v) for w, v in zip(weights, variances)]
    order = sorted(range(len(weights)), key=lambda k: -keys[k])
    updated = PixelMixture(
        tuple(GaussianComponent(weights[k], means[k], variances[k]) for k in order)
    )

    if matched is None:
        return updated, True
    position = order.index(matched)
    return updated, position >= _background_count(updated, params.T)


def _background_count(mixture: PixelMixture, T: float) -> int:
    cumulative = 0.0
    for b, c in enumerate(mixture.components):
        cumulative = cumulative + c.weight
        if cumulative > T:
            return b + 1
    return len(mixture.components)


@dataclass
class _MixtureArrays:
    weight: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    count: np.ndarray


class BackgroundModel:
    """
    Per-pixel adaptive mixture background model.

    State is held as (height, width, K) arrays with components kept in rank
    order; slots past a pixel's component count carry zero weight.
    """

    def __init__(self, width: int, height: int, params: Optional[BackgroundParams] = None):
        if width < 1 or height < 1:
            raise ConfigurationError(
                f"Background model needs positive dimensions, got {width}x{height}"
            )
        self.width = width
        self.height = height
        self.params = params or BackgroundParams()
        K = self.params.K

        weight = np.zeros((height, width, K))
        weight[..., 0] = 1.0
        self._state = _MixtureArrays(
            weight=weight,
            mean=np.zeros((height, width, K)),
            variance=np.full((height, width, K), self.params.var_init),
            count=np.ones((height, width), dtype=np.int64),
        )
        self._seeded = False
        self.frames_seen = 0

        if self.params.debug_dir is not None:
            Path(self.params.debug_dir).mkdir(parents=True, exist_ok=True)

    @property
    def seeded(self) -> bool:
        return self._seeded

    def mixture_at(self, row: int, col: int) -> PixelMixture:
        """Snapshot of one pixel's mixture."""
        s = self._state
        n = int(s.count[row, col])
        comps = []
        for k in range(n):
            mean = float(s.mean[row, col, k]) if self._seeded else UNSEEDED
            comps.append(
                GaussianComponent(
                    float(s.weight[row, col, k]), mean, float(s.variance[row, col, k])
                )
            )
        return PixelMixture(tuple(comps))

    def apply(self, frame: GrayFrame) -> ForegroundMask:
        """
        Update every pixel with frame and return the foreground mask.

        Raises:
            FrameDimensionError: Frame size differs from the model
        """
        if frame.width != self.width or frame.height != self.height:
            raise FrameDimensionError(
                f"Frame is {frame.width}x{frame.height}, model is {self.width}x{self.height}"
            )

        x = frame.pixels.astype(np.float64)
        if not self._seeded:
            self._state.mean[..., 0] = x
            self._seeded = True
            bits = np.zeros((self.height, self.width), dtype=bool)
        else:
            bits = self._update(x)

        self.frames_seen += 1
        mask = ForegroundMask(bits, frame.timestamp)
        if self.params.debug_dir is not None:
            write_frame_file(
                mask.to_frame(), Path(self.params.debug_dir) / f"mask_{frame.timestamp}.pgm"
            )
        return mask

    def _update(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        s = self._state
        K = p.K
        slots = np.arange(K)
        active = slots < s.count[..., None]

        deviation = np.abs(x[..., None] - s.mean)
        match_k = active & (deviation <= p.match_lambda * np.sqrt(s.variance))
        matched = match_k.any(axis=-1)
        matched_index = np.argmax(match_k, axis=-1)
        is_matched_slot = matched[..., None] & (slots == matched_index[..., None])

        weight = (1.0 - p.alpha) * s.weight + p.alpha * is_matched_slot.astype(np.float64)
        mean = s.mean.copy()
        variance = s.variance.copy()

        # matched component: mean and variance adaptation
        rows, cols = np.nonzero(matched)
        if rows.size:
            k = matched_index[rows, cols]
            mu = s.mean[rows, cols, k]
            var = s.variance[rows, cols, k]
            xv = x[rows, cols]
            if p.rho_mode is RhoMode.SIMPLE:
                rho = np.full(xv.shape, p.alpha)
            else:
                density = norm.pdf(xv, mu, np.sqrt(var))
                rho = np.minimum(np.maximum(p.alpha * density, p.alpha * RHO_FLOOR_FACTOR), 1.0)
            new_mu = (1.0 - rho) * mu + rho * xv
            d = xv - new_mu
            new_var = (1.0 - rho) * var + rho * (d * d)
            mean[rows, cols, k] = new_mu
            variance[rows, cols, k] = np.maximum(new_var, p.variance_floor)

        # no match: append while below capacity, otherwise replace the last-ranked slot
        count = s.count.copy()
        rows, cols = np.nonzero(~matched)
        if rows.size:
            n = count[rows, cols]
            k = np.where(n < K, n, K - 1)
            weight[rows, cols, k] = p.weight_init
            mean[rows, cols, k] = x[rows, cols]
            variance[rows, cols, k] = p.var_init
            count[rows, cols] = np.minimum(n + 1, K)

        total = weight[..., 0].copy()
        for k in range(1, K):
            total = total + weight[..., k]
        weight = weight / total[..., None]

        active = slots < count[..., None]
        key = np.where(active, weight / np.sqrt(variance), -np.inf)
        order = np.argsort(-key, axis=-1, kind="stable")
        weight = np.take_along_axis(weight, order, axis=-1)
        mean = np.take_along_axis(mean, order, axis=-1)
        variance = np.take_along_axis(variance, order, axis=-1)

        cumulative = np.empty_like(weight)
        cumulative[..., 0] = weight[..., 0]
        for k in range(1, K):
            cumulative[..., k] = cumulative[..., k - 1] + weight[..., k]
        exceeds = cumulative > p.T
        background_last = np.where(exceeds.any(axis=-1), np.argmax(exceeds, axis=-1), K - 1)

        position = np.argmax(order == matched_index[..., None], axis=-1)
        background = matched & (position <= background_last)

        self._state = _MixtureArrays(weight=weight, mean=mean, variance=variance, count=count)
        return ~background

    def component_counts(self) -> np.ndarray:
        return self._state.count.copy()

    def weights(self) -> np.ndarray:
        return self._state.weight.copy()

    def variances(self) -> np.ndarray:
        return self._state.variance.copy()


def init_model(
    width: int, height: int, params: Optional[BackgroundParams] = None
) -> BackgroundModel:
    return BackgroundModel(width, height, params)


def foreground_area(mask: ForegroundMask, roi: RoiRegion) -> int:
    """
    Count foreground pixels inside the ROI rectangle.

    Raises:
        RegionError: ROI is not within the mask
    """
    roi.require_within(mask.width, mask.height)
    return int(np.count_nonzero(mask.bits[roi.slices()]))

