"""
FastAPI server for hierarchical multi-label inference and inspection.

Endpoints:
- GET /health: Liveness check
- POST /predict: Constrained ensemble predictions from the served checkpoint
- POST /weights: Imbalance weight table of an uploaded ARFF file
- GET /runs: Training runs under the output directory
"""

import logging

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import get_checkpoint_path, get_output_dir
from .errors import HmlError
from .routes import predict_router, runs_router, weights_router

logger = logging.getLogger(__name__)


# Create FastAPI app
app = FastAPI(
    title="HML Weighting Service",
    description="Ancestor-consistent predictions and node-wise imbalance weights",
    version="1.0.0"
)

# Include routers
app.include_router(predict_router)
app.include_router(weights_router)
app.include_router(runs_router)


@app.exception_handler(HmlError)
async def hml_error_handler(request: Request, exc: HmlError):
    """Library errors are client errors: bad uploads, wrong widths, empty data."""
    return JSONResponse(status_code=400, content={"detail": f"{type(exc).__name__}: {exc}"})


@app.on_event("startup")
async def log_config():
    """Log the served checkpoint and output directory on startup."""
    logger.info("Output directory: %s", get_output_dir())
    logger.info("Checkpoint: %s", get_checkpoint_path() or "none (POST /predict disabled)")


@app.get("/health")
async def health_check():
    """Health check endpoint."""
    return {"status": "healthy"}


def main():
    """Run the server."""
    import uvicorn
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    uvicorn.run(app, host="0.0.0.0", port=8000)


if __name__ == "__main__":
    main()
