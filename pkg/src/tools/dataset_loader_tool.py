"""
Dataset loader tool - Load labelled silhouette masks for the fall classifier

A dataset file has one sample per line: label<TAB>mask_file. Labels are
Fall or Stand, mask files are P5/P6 images (nonzero pixels are foreground)
relative to the dataset file. Blank lines and lines starting with # are
ignored.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .frame_io import FrameReadError, GrayFrame, read_frame_file, to_gray
from ..detectors.background_model import ForegroundMask
from ..detectors.fall_classifier import PatternLabel, Sample, extract_features
from ..utils.regions import EventKind, RoiRegion

logger = logging.getLogger(__name__)


def load_mask(path: Union[str, Path]) -> ForegroundMask:
    """
    Read a mask image.

    Raises:
        FrameReadError: File missing or not a valid PNM image
    """
    frame = read_frame_file(path)
    gray = frame if isinstance(frame, GrayFrame) else to_gray(frame)
    return ForegroundMask(gray.pixels > 0, gray.timestamp)


def full_frame_roi(mask: ForegroundMask) -> RoiRegion:
    return RoiRegion(id=0, kind=EventKind.DANGER_NOTICE, rect=(0, 0, mask.width, mask.height))


def parse_dataset_line(line: str) -> Optional[Tuple[PatternLabel, str]]:
    parts = line.rstrip("\r\n").split("\t")
    if len(parts) != 2 or not parts[1]:
        return None
    try:
        return PatternLabel(parts[0].strip()), parts[1].strip()
    except ValueError:
        return None


def load_dataset(
    dataset_path: Union[str, Path], roi: Optional[RoiRegion] = None
) -> Dict[str, Any]:
    """
    Load a labelled dataset and extract one feature vector per mask.

    Args:
        dataset_path: Path to the tab-separated dataset file
        roi: Region to extract features from. Defaults to the whole mask

    Returns:
        Dictionary containing:
        - success: bool indicating if the dataset file could be read
        - samples: List of (feature vector, label) tuples
        - count: Number of samples loaded
        - skipped: Number of lines or masks that were skipped
        - source: Dataset file path
        - error: Error message if failed
    """
    dataset_path = Path(dataset_path)
    logger.info(f"Loading dataset from: {dataset_path}")

    try:
        lines = dataset_path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        logger.error(f"Error loading dataset: {e}")
        return {
            "success": False,
            "samples": [],
            "count": 0,
            "skipped": 0,
            "source": str(dataset_path),
            "error": str(e),
        }

    samples: List[Sample] = []
    skipped = 0
    for number, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue

        entry = parse_dataset_line(line)
        if entry is None:
            logger.warning(f"Invalid dataset line {number}: {line!r}")
            skipped += 1
            continue
        label, mask_name = entry

        try:
            mask = load_mask(dataset_path.parent / mask_name)
        except FrameReadError as e:
            logger.warning(f"Skipping line {number}: {e}")
            skipped += 1
            continue

        feature = extract_features(mask, roi or full_frame_roi(mask))
        if feature is None:
            logger.warning(f"Skipping line {number}: empty silhouette in {mask_name}")
            skipped += 1
            continue
        samples.append((np.asarray(feature), label))

    logger.info(f"Loaded {len(samples)} samples ({skipped} skipped)")

    return {
        "success": True,
        "samples": samples,
        "count": len(samples),
        "skipped": skipped,
        "source": str(dataset_path),
    }
