"""Derivative-free Nelder-Mead simplex minimizer.

Kept dependency-free on purpose: the curve-fitting objective needs a full
ODE integration per evaluation, so gradients are unavailable and a simplex
is robust enough. Standard coefficients (reflect 1, expand 2, contract 0.5,
shrink 0.5). Objectives may return +inf to veto a region.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray        # best vertex found
    fun: float           # objective there
    iterations: int      # simplex iterations performed
    evaluations: int     # objective evaluations
    converged: bool      # relative spread fell below the tolerance


def _spread(vertices: np.ndarray) -> float:
    """Relative parameter spread of the simplex around its best vertex."""
    best = vertices[0]
    return float(np.max(np.abs(vertices[1:] - best) / (1.0 + np.abs(best))))


def nelder_mead(
    f: Callable[[np.ndarray], float],
    x0,
    initial_step: float = 0.05,
    max_iterations: int = 2000,
    tolerance: float = 1e-8,
) -> SimplexResult:
    """Minimize f starting from x0.

    The initial simplex perturbs each coordinate by initial_step relative
    (or absolute when the coordinate is ~0). Converged means the relative
    spread of the vertices around the best one fell below `tolerance`
    within `max_iterations` iterations.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    vertices = np.tile(x0, (n + 1, 1))
    for i in range(n):
        if abs(vertices[i + 1, i]) > 1e-12:
            vertices[i + 1, i] *= 1.0 + initial_step
        else:
            vertices[i + 1, i] = initial_step
    values = np.array([f(v) for v in vertices])
    if not np.isfinite(values[0]):
        raise ValueError("objective is not finite at the starting point")
    evals = n + 1

    iteration = 0
    while iteration < max_iterations:
        order = np.argsort(values, kind="stable")
        vertices, values = vertices[order], values[order]
        if _spread(vertices) < tolerance:
            return SimplexResult(vertices[0], float(values[0]), iteration, evals, True)
        iteration += 1

        centroid = vertices[:-1].mean(axis=0)
        worst = vertices[-1]
        reflected = centroid + (centroid - worst)
        f_r = f(reflected)
        evals += 1

        if f_r < values[0]:
            expanded = centroid + 2.0 * (centroid - worst)
            f_e = f(expanded)
            evals += 1
            if f_e < f_r:
                vertices[-1], values[-1] = expanded, f_e
            else:
                vertices[-1], values[-1] = reflected, f_r
        elif f_r < values[-2]:
            vertices[-1], values[-1] = reflected, f_r
        else:
            if f_r < values[-1]:
                contracted = centroid + 0.5 * (reflected - centroid)
            else:
                contracted = centroid + 0.5 * (worst - centroid)
            f_c = f(contracted)
            evals += 1
            if f_c < min(f_r, values[-1]):
                vertices[-1], values[-1] = contracted, f_c
            else:
                # shrink everything toward the best vertex
                for i in range(1, n + 1):
                    vertices[i] = vertices[0] + 0.5 * (vertices[i] - vertices[0])
                    values[i] = f(vertices[i])
                evals += n

    order = np.argsort(values, kind="stable")
    vertices, values = vertices[order], values[order]
    return SimplexResult(vertices[0], float(values[0]), iteration, evals, False)
