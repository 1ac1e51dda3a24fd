"""Shared fixtures: benchmark systems and a random valid-model generator."""

import math

import numpy as np
import pytest

from redmap import (
    BetaShape,
    ControlParams,
    DerivedModel,
    ModelError,
    SystemParams,
    derive_model,
)
from redmap.model import connections_for_a1, delay_for_a2


BUFFER = 2000.0


def desk_system(tcp_constant: float = 1.2247) -> SystemParams:
    return SystemParams(
        connections=1850.0,
        tcp_constant=tcp_constant,
        capacity=321000.0,
        delay=0.012,
        packet_size=1.0,
        buffer=BUFFER,
    )


def desk_control(w: float = 0.15, alpha: float = 1.0, beta: float = 1.0) -> ControlParams:
    return ControlParams(
        p_max=1.0,
        q_min=500.0,
        q_max=1500.0,
        w=w,
        shape=BetaShape(alpha, beta),
    )


@pytest.fixture
def bench_model() -> DerivedModel:
    """Baseline desk system, uniform drop profile."""
    return derive_model(desk_system(), desk_control())


@pytest.fixture
def bench_model_skewed() -> DerivedModel:
    """Baseline desk system with a left-skewed drop profile."""
    return derive_model(desk_system(), desk_control(alpha=0.5, beta=0.2))


@pytest.fixture
def bench_model_round() -> DerivedModel:
    """Desk system with the rounded gain constant 1.225."""
    return derive_model(desk_system(1.225), desk_control())


def model_from_targets(a1: float, a2: float, buffer: float, q_min: float,
                       q_max: float, w: float, alpha: float, beta: float,
                       p_max: float = 1.0, capacity: float = 100000.0,
                       tcp_constant: float = 1.2) -> DerivedModel:
    """Build a model hitting given load/headroom aggregates exactly.

    Back-solves the connection count and delay from a1 and a2 so tests can
    place the piecewise map's geometry directly.
    """
    n = connections_for_a1(a1, tcp_constant, p_max)
    d = delay_for_a2(a2, capacity, 1.0)
    system = SystemParams(connections=n, tcp_constant=tcp_constant,
                          capacity=capacity, delay=d, packet_size=1.0,
                          buffer=buffer)
    control = ControlParams(p_max=p_max, q_min=q_min, q_max=q_max, w=w,
                            shape=BetaShape(alpha, beta))
    return derive_model(system, control)


def random_valid_model(rng: np.random.Generator,
                       w_range: tuple = (0.005, 0.35)) -> DerivedModel:
    """Draw a random model that has an interior fixed point.

    May raise when a draw lands outside the valid region; callers loop.
    """
    alpha = float(np.exp(rng.uniform(math.log(0.05), math.log(5.0))))
    beta = float(np.exp(rng.uniform(math.log(0.05), math.log(5.0))))
    buffer = float(rng.uniform(800.0, 4000.0))
    q_min = float(rng.uniform(0.0, 0.3)) * buffer
    q_max = float(rng.uniform(0.6, 1.0)) * buffer
    a2 = float(np.exp(rng.uniform(math.log(1500.0), math.log(40000.0))))
    # keep a1 below a2 + q_max so the interior fixed point exists
    a1 = float(rng.uniform(0.35, 0.97)) * (a2 + q_max)
    w = float(rng.uniform(*w_range))
    k = float(rng.uniform(1.0, 1.6329))
    p_max = float(rng.uniform(0.05, 1.0))
    capacity = float(np.exp(rng.uniform(math.log(1e4), math.log(1e6))))
    return model_from_targets(a1, a2, buffer, q_min, q_max, w, alpha, beta,
                              p_max=p_max, capacity=capacity, tcp_constant=k)


def draw_models(seed: int, count: int, w_range: tuple = (0.005, 0.35)):
    """Yield exactly `count` random valid models."""
    rng = np.random.default_rng(seed)
    made = 0
    tries = 0
    while made < count:
        tries += 1
        if tries > 200 * count:
            raise RuntimeError("random model generator starved")
        try:
            m = random_valid_model(rng, w_range)
        except (ValueError, ModelError):
            continue
        made += 1
        yield m
