import pytest
import torch

from landingflow.config import numerics_config
from landingflow.problems import (
    make_generator,
    make_linear,
    make_procrustes,
    make_rayleigh,
    random_point_with_gram_spectrum,
)

DTYPE = numerics_config.DTYPE


@pytest.fixture
def generator():
    return make_generator(20240611)


@pytest.fixture
def point_factory(generator):
    """Well-conditioned full-rank points: Gram eigenvalues drawn from [low, high]."""

    def factory(n, p, low=0.5, high=2.0):
        chi = low + (high - low) * torch.rand(p, generator=generator, dtype=DTYPE)
        return random_point_with_gram_spectrum(n, p, chi, generator)

    return factory


@pytest.fixture
def objective_factory(generator):
    """The three benchmark objectives at arbitrary (n, p)."""

    def factory(kind, n, p):
        if kind == "linear":
            return make_linear(n, p, torch.randn((n, p), generator=generator, dtype=DTYPE)).objective
        if kind == "procrustes":
            B = torch.randn((n, p), generator=generator, dtype=DTYPE)
            return make_procrustes(n, p, torch.eye(n, dtype=DTYPE), B).objective
        M = torch.randn((n, n), generator=generator, dtype=DTYPE)
        return make_rayleigh(n, p, (M + M.T) / 2).objective

    return factory


@pytest.fixture
def tangent_factory(generator):
    """Random tangent vectors W Y at Y."""

    def factory(Y):
        n = Y.shape[0]
        W = torch.randn((n, n), generator=generator, dtype=DTYPE)
        return (W - W.T) @ Y

    return factory
