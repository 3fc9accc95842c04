"""
Read-only listing of training runs under the output directory.
"""

import json
from datetime import datetime
from pathlib import Path

from fastapi import APIRouter, HTTPException

from ..config import get_output_dir
from ..models import RunListResponse, RunMetadata

router = APIRouter()


@router.get("/runs", response_model=RunListResponse)
async def list_runs():
    """List run directories with metadata, newest first."""
    runs = []
    for path in get_output_dir().iterdir():
        if not path.is_dir():
            continue
        runs.append(RunMetadata(
            name=path.name,
            updatedAt=datetime.fromtimestamp(path.stat().st_mtime).isoformat(),
            hasCheckpoint=(path / "model.hmlc").is_file(),
            hasMetrics=(path / "metrics.json").is_file(),
        ))

    runs.sort(key=lambda r: r.updatedAt, reverse=True)
    return RunListResponse(runs=runs)


@router.get("/runs/{name}/metrics")
async def run_metrics(name: str):
    """Training history and test metrics of one run."""
    # Sanitize name to prevent directory traversal
    path = get_output_dir() / Path(name).name / "metrics.json"
    if not path.is_file():
        raise HTTPException(status_code=404, detail="Run metrics not found")
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except json.JSONDecodeError:
        raise HTTPException(status_code=500, detail="Invalid metrics file")
