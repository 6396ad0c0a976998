import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

import numpy as np

from errors import NoConvergence, PositivityBreach
from numerics.solver import NewtonOptions, StateVector, newton_solve
from settings import get_thread_cap
from spectral.spectral_sphere import SpectralField, SphereGrid, synthesize
from system.system_algebra import SystemParams

logger = logging.getLogger(__name__)

LOW_MODES = 6


def _random_positive_field(grid: SphereGrid, rng: np.random.Generator, scale: float) -> SpectralField:
    coeffs = np.zeros(grid.N)
    level = scale * rng.uniform(0.5, 2.0)
    coeffs[0] = level / grid.basis_values[0, 0]
    modes = min(LOW_MODES, grid.N)
    coeffs[1:modes] = rng.normal(0.0, 0.3 * level, modes - 1) / np.arange(2, modes + 1)
    field = SpectralField(coeffs=coeffs, grid=grid)
    values = synthesize(field)
    floor = 0.1 * level
    if values.min() < floor:
        # shrink the oscillating part until the field clears the floor
        shrink = (level - floor) / (level - values.min())
        coeffs[1:modes] *= shrink
        field = SpectralField(coeffs=coeffs, grid=grid)
    return field


def random_positive_state(grid: SphereGrid, rng: np.random.Generator, scale: float = 1.0) -> StateVector:
    """Smooth positive pair: a random level plus decaying low-mode oscillations"""
    return StateVector(
        u1=_random_positive_field(grid, rng, scale),
        u2=_random_positive_field(grid, rng, scale),
    )


def _solve_one(initial: StateVector, p: SystemParams, opts: NewtonOptions) -> Optional[StateVector]:
    try:
        return newton_solve(initial, p, opts)
    except (NoConvergence, PositivityBreach) as e:
        logger.debug(f"Multistart solve rejected: {e}")
        return None


def multistart_solve(p: SystemParams, grid: SphereGrid, count: int, seed: int,
                     opts: Optional[NewtonOptions] = None, scale: float = 1.0) -> List[Optional[StateVector]]:
    """
    Newton solves from `count` seeded random positive guesses.

    Guesses are drawn up front from one generator; solves run on up to
    SCHRO_BRANCH_THREADS threads and come back in submission order.

    Returns:
        One entry per guess: the converged state, or None
    """
    opts = opts or NewtonOptions()
    rng = np.random.default_rng(seed)
    guesses = [random_positive_state(grid, rng, scale) for _ in range(count)]
    workers = get_thread_cap()
    if workers == 1:
        results = [_solve_one(guess, p, opts) for guess in guesses]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_solve_one, guess, p, opts) for guess in guesses]
            results = [future.result() for future in futures]
    converged = sum(result is not None for result in results)
    logger.info(f"Multistart: {converged}/{count} solves converged (threads={workers})")
    return results
