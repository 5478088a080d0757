"""
Named reproduction bundles.

Each recipe is a command plus one or more run configurations; ``run_recipe``
executes them into ``<out>/<recipe>/<index>``.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from app.exceptions import UnknownRecipeError
from app.models import RunConfig, RunManifest
from app.services.runner import run

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Recipe:
    name: str
    description: str
    command: str
    configs: List[RunConfig]


def _config(**data) -> RunConfig:
    return RunConfig.model_validate(data)


def _ising(N: int, lam: float, **extra) -> dict:
    return {"N": N, "J": 1.0, "gamma": 1.0, "delta": 0.0, "lambda": lam, "boundary": "periodic", **extra}


def _near_critical_grid() -> List[float]:
    grid = np.round(np.arange(0.9, 1.1 + 1e-9, 5e-3), 6)
    return [float(x) for x in grid if abs(x - 1.0) > 1e-9]


def _build() -> Dict[str, Recipe]:
    recipes = [
        Recipe("fig2", "Echo of N=300 periodic Ising baths across the transition, eps=0.25", "sweep", [
            _config(model=_ising(300, 0.5), coupling={"epsilon": 0.25},
                    time={"t_max": 200.0, "steps": 2001},
                    sweep={"param": "lambda", "values": [0.25, 0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5, 1.75]}),
        ]),
        Recipe("fig3", "Short-time rate alpha near lambda=1 for three couplings, N=200", "alpha-scan", [
            _config(model=_ising(200, 1.0), coupling={"epsilon": eps}, time={"t_max": 2.0, "steps": 401},
                    sweep={"param": "lambda", "values": _near_critical_grid()})
            for eps in (0.05, 0.1, 0.25)
        ]),
        Recipe("fig4", "Saturation value of the echo versus lambda, N=300, eps=0.25", "plateau-scan", [
            _config(model=_ising(300, 0.5), coupling={"epsilon": 0.25}, time={"t_max": 200.0, "steps": 2001},
                    sweep={"param": "lambda", "values": [0.1, 0.25, 0.5, 0.75, 0.9, 1.1, 1.25, 1.5, 2.0]}),
        ]),
        Recipe("fig7", "Echo minimum at lambda=1 against chain length", "critical-scaling", [
            _config(model=_ising(50, 1.0), coupling={"epsilon": 0.25}, time={"t_max": 160.0, "steps": 3201},
                    sweep={"param": "N", "values": [50, 100, 200, 300, 400]}),
        ]),
        Recipe("xx_fig", "XX bath (gamma=0): decay at lambda=0.5, no decay at lambda=1.5", "sweep", [
            _config(model=_ising(100, 0.5, gamma=0.0), coupling={"epsilon": 0.25},
                    time={"t_max": 50.0, "steps": 1001}, sweep={"param": "lambda", "values": [0.5, 1.5]}),
        ]),
        Recipe("xxz_smallN", "XXZ baths by exact diagonalization, N=10, eps=0.1", "alpha-scan", [
            _config(model={"N": 10, "gamma": 0.0, "delta": 0.0, "lambda": 0.0, "boundary": "open"},
                    coupling={"epsilon": 0.1}, time={"t_max": 0.5, "steps": 101}, method="ed",
                    sweep={"param": "delta", "values": [1.5, 0.5, 0.0, -0.5, -2.5]}),
        ]),
        Recipe("mlink_alpha", "alpha against the number of equally spaced links, N=300", "alpha-scan", [
            _config(model=_ising(300, 0.5), coupling={"epsilon": 0.25, "geometry": "A"},
                    time={"t_max": 0.3, "steps": 601}, sweep={"param": "m", "values": [1, 2, 3, 5, 10]}),
        ]),
        Recipe("strong_envelope", "Gaussian envelope in the strong-coupling regime", "envelope-fit", [
            _config(model=_ising(300, 0.5), coupling={"epsilon": 20.0, "m": 300}, method="central_spin",
                    time={"t_max": 0.6, "steps": 6001}, sweep={"param": "epsilon", "values": [20.0, 40.0]}),
            _config(model=_ising(300, 0.5), coupling={"epsilon": 20.0, "m": 10, "geometry": "B"},
                    time={"t_max": 0.6, "steps": 6001}, sweep={"param": "m", "values": [10, 30, 100]}),
            _config(model=_ising(300, 0.2), coupling={"epsilon": 20.0, "m": 25, "geometry": "A"},
                    time={"t_max": 0.6, "steps": 6001}, sweep={"param": "lambda", "values": [0.2, 0.4]}),
        ]),
        Recipe("compiler_verify", "Stroboscopic schedule against the exact propagator, N=4", "verify", [
            _config(model={"N": 4, "gamma": 1.0, "lambda": 0.5, "boundary": "open"},
                    coupling={"epsilon": 0.25, "omega_e": 1.0},
                    compiler={"t": 1.0, "n_steps": 10, "n_list": [10, 20, 40, 80]}),
        ]),
        Recipe("xy_gamma", "Anisotropy scan of the echo at the critical field, N=300", "sweep", [
            _config(model=_ising(300, 1.0), coupling={"epsilon": 0.25}, time={"t_max": 50.0, "steps": 1001},
                    sweep={"param": "gamma", "values": [0.25, 0.5, 0.75, 1.0]}),
        ]),
    ]
    return {r.name: r for r in recipes}


RECIPES: Dict[str, Recipe] = _build()


def recipes() -> List[Recipe]:
    return list(RECIPES.values())


def get_recipe(name: str) -> Recipe:
    if name not in RECIPES:
        raise UnknownRecipeError(name, RECIPES)
    return RECIPES[name]


def run_recipe(name: str, out: str = "results", threads: Optional[int] = None) -> List[RunManifest]:
    recipe = get_recipe(name)
    logger.info(f"Recipe {name}: {len(recipe.configs)} run(s) of {recipe.command}")
    return [run(config, recipe.command, out=str(Path(out) / name / str(i)), threads=threads)
            for i, config in enumerate(recipe.configs)]
