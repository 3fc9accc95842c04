"""
API route modules.
"""

from .predict import router as predict_router
from .weights import router as weights_router
from .runs import router as runs_router

__all__ = ['predict_router', 'weights_router', 'runs_router']
