"""
Main FastAPI application module.
"""
import logging
import time
import traceback

from fastapi import FastAPI, Request, status
from fastapi.exceptions import RequestValidationError
from fastapi.middleware import Middleware
from fastapi.middleware.cors import CORSMiddleware
from fastapi.middleware.gzip import GZipMiddleware
from fastapi.responses import JSONResponse
from starlette.middleware.base import BaseHTTPMiddleware

from app import __version__
from app.api import api_router
from app.config import settings
from app.exceptions import SpinBathError
from app.logging_config import configure_logging

configure_logging()
logger = logging.getLogger(__name__)


class ProcessTimeMiddleware(BaseHTTPMiddleware):
    async def dispatch(self, request: Request, call_next):
        start_time = time.time()
        response = await call_next(request)
        response.headers["X-Process-Time"] = str(time.time() - start_time)
        return response


middleware = [
    Middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    ),
    Middleware(ProcessTimeMiddleware),
]

app = FastAPI(
    title=settings.PROJECT_NAME,
    description="Loschmidt echo of a qubit coupled to spin-chain baths",
    version=__version__,
    docs_url="/docs",
    redoc_url="/redoc",
    openapi_url="/openapi.json",
    middleware=middleware,
)

app.add_middleware(GZipMiddleware, minimum_size=1000)

app.include_router(api_router, prefix=settings.API_V1_STR, tags=["API"])


@app.get("/", status_code=status.HTTP_200_OK, include_in_schema=False)
async def root():
    """Root endpoint for health checks."""
    return {
        "status": "running",
        "name": settings.PROJECT_NAME,
        "version": __version__,
    }


@app.exception_handler(SpinBathError)
async def spinbath_exception_handler(request: Request, exc: SpinBathError):
    """Map toolkit errors to their HTTP status."""
    if exc.status_code >= 500:
        logger.error(
            f"Numerical failure: {exc}\n"
            f"Path: {request.url.path}\n"
            f"Traceback: {''.join(traceback.format_exception(type(exc), exc, exc.__traceback__))}"
        )
    else:
        logger.warning(f"{exc.__class__.__name__} on {request.url.path}: {exc}")
    return JSONResponse(
        status_code=exc.status_code,
        content={"detail": str(exc), "type": exc.__class__.__name__},
    )


@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request: Request, exc: RequestValidationError):
    logger.error(f"Validation error: {exc}")
    return JSONResponse(
        status_code=422,
        content={"detail": exc.errors()},
    )


@app.on_event("startup")
async def startup_event():
    logger.info(f"Starting {settings.PROJECT_NAME} {__version__}")
    logger.info(f"Environment: {settings.ENV}")
