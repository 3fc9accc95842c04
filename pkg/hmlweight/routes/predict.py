"""
Prediction endpoint backed by the checkpoint named in HMLW_CHECKPOINT.
"""

import logging
from functools import lru_cache
from pathlib import Path

import numpy as np
from fastapi import APIRouter, HTTPException

from ..config import get_checkpoint_path
from ..ensemble import Checkpoint, load_checkpoint
from ..hierarchy import Hierarchy, build_hierarchy
from ..metrics import binarize
from ..models import PredictRequest, PredictResponse

logger = logging.getLogger(__name__)

router = APIRouter()


@lru_cache(maxsize=4)
def _load(path: Path, mtime_ns: int) -> tuple[Checkpoint, Hierarchy]:
    # keyed on mtime so a retrained checkpoint at the same path is picked up
    checkpoint = load_checkpoint(path)
    logger.info("Loaded %d-member checkpoint %s (config %s)",
                checkpoint.ensemble.size, path, checkpoint.config_hash[:12])
    return checkpoint, build_hierarchy(checkpoint.node_ids, checkpoint.edges)


def served_checkpoint() -> tuple[Checkpoint, Hierarchy]:
    path = get_checkpoint_path()
    if path is None or not path.is_file():
        raise HTTPException(status_code=404, detail="No checkpoint configured")
    return _load(path, path.stat().st_mtime_ns)


@router.post("/predict", response_model=PredictResponse)
async def predict(request: PredictRequest):
    """Constrained ensemble-mean probabilities and thresholded labels per row."""
    checkpoint, h = served_checkpoint()
    model = checkpoint.ensemble.model
    widths = {len(row) for row in request.features}
    if widths != {model.input_dim}:
        raise HTTPException(
            status_code=400,
            detail=f"Every row needs {model.input_dim} features, got widths {sorted(widths)}",
        )
    x = np.asarray(request.features, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise HTTPException(status_code=400, detail="Features must be finite")

    threshold = request.threshold
    if threshold is None:
        threshold = float(checkpoint.config.get("threshold", 0.5))
    probs = checkpoint.ensemble.predict_proba(x, h.matrix)
    return PredictResponse(
        node_ids=list(h.node_ids),
        probabilities=probs.tolist(),
        labels=binarize(probs, threshold).tolist(),
        threshold=threshold,
    )
