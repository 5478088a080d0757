"""
HTTP routes of the toolkit, mounted under settings.API_V1_STR.
"""

from .endpoints import router as api_router

__all__ = ["api_router"]
