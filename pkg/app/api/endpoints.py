"""
API endpoints for the decoherence toolkit.

Computations are CPU bound, so the handlers are plain functions and run in
FastAPI's thread pool.
"""
import logging
from typing import List

import numpy as np
from fastapi import APIRouter, status

from app.models import (CompileRequest, ConcurrenceProfile, ConcurrenceRequest, EchoRequest, EchoResponse,
                        RecipeInfo, RunConfig, ScheduleResponse)
from app.services import latticecompiler
from app.services.echo import DETERMINANT_EXPONENT
from app.services.entanglement import nn_concurrence_scan
from app.services.recipes import recipes
from app.services.model import resolve_sites
from app.services.runner import SweepPoint, check_dispatch, compute_echo

logger = logging.getLogger(__name__)

router = APIRouter()


@router.get("/recipes", response_model=List[RecipeInfo], summary="List reproduction recipes")
def list_recipes() -> List[RecipeInfo]:
    """
    List the named reproduction bundles available to ``recipe <name>``.
    """
    return [RecipeInfo(name=r.name, description=r.description, runs=len(r.configs)) for r in recipes()]


@router.post("/echo", response_model=EchoResponse, status_code=status.HTTP_200_OK, summary="Compute L(t)")
def compute_echo_endpoint(request: EchoRequest) -> EchoResponse:
    """
    Compute the Loschmidt echo on a uniform time grid.

    - **model**: bath parameters (N, J, gamma, delta, lambda, boundary)
    - **coupling**: epsilon, number of links m and their geometry
    - **time**: t_max and number of points
    - **method**: determinant, central_spin, ed or trotter
    """
    check_dispatch(request.method, request.model)
    resolve_sites(request.model, request.coupling)
    config = RunConfig(model=request.model, coupling=request.coupling, time=request.time,
                       method=request.method, sector_rule=request.sector_rule)
    times = np.linspace(0.0, request.time.t_max, request.time.steps)
    series = compute_echo(config, SweepPoint(0, None, None, request.model, request.coupling), times)
    logger.info(f"echo N={request.model.N} method={request.method.value} points={times.shape[0]}")
    return EchoResponse(method=request.method.value, times=series.times.tolist(), values=series.values.tolist(),
                        determinant_exponent=DETERMINANT_EXPONENT)


@router.post("/concurrence", response_model=ConcurrenceProfile, summary="Nearest-neighbor concurrence")
def concurrence_endpoint(request: ConcurrenceRequest) -> ConcurrenceProfile:
    """
    Concurrence C(1) of every nearest-neighbor pair in the exact ground state.

    - **model**: bath parameters, N up to the ED cap
    - **sector_rule**: how a degenerate ground space is resolved
    """
    return nn_concurrence_scan(request.model, request.sector_rule)


@router.post("/compile", response_model=ScheduleResponse, summary="Compile the lattice schedule")
def compile_endpoint(request: CompileRequest) -> ScheduleResponse:
    """
    Stroboscopic gate schedule for the qubit at lattice site 0 and the bath on 1..N.

    - **level**: step, gate or pulse
    """
    sequence = latticecompiler.compile(request.model, request.coupling, request.t, request.n_steps, request.level)
    return latticecompiler.schedule(sequence)
