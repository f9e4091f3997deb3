"""Shared fixtures: the canonical models from models/ used across suites."""

from __future__ import annotations

from pathlib import Path

import pytest

from branchtilt.kernels import load_model

MODELS_DIR = Path(__file__).resolve().parent.parent / "models"


@pytest.fixture(scope="session")
def bgw_super():
    """Single type, p_0 = 1/4, p_2 = 3/4 (supercritical, q = 1/3)."""
    return load_model(MODELS_DIR / "bgw-supercritical.json")


@pytest.fixture(scope="session")
def bgw_sub():
    """Mirror model, p_0 = 3/4, p_2 = 1/4 (subcritical, q = 1)."""
    return load_model(MODELS_DIR / "bgw-subcritical.json")


@pytest.fixture(scope="session")
def bgw_geometric():
    """Geometric offspring p_k = (1/3)(2/3)^k (q = 1/2)."""
    return load_model(MODELS_DIR / "bgw-geometric.json")


@pytest.fixture(scope="session")
def bgw_flip():
    """Two types; each bears two children of the other type w.p. 3/4."""
    return load_model(MODELS_DIR / "bgw-flip.json")


@pytest.fixture(scope="session")
def sevastyanov_uniform():
    """Life span uniform on {1, 2}; split 0/2 children with age-dependent
    weights (1/2, 1/2) at age 1 and (1/8, 7/8) at age 2."""
    return load_model(MODELS_DIR / "sevastyanov-uniform.json")


@pytest.fixture(scope="session")
def markov_splitting():
    """Exponential(1) life span, constant split p_0 = 1/4, p_2 = 3/4."""
    return load_model(MODELS_DIR / "markov-splitting.json")


@pytest.fixture(scope="session")
def general_two_type():
    """Two-type general model: 0 or 2 children at iid uniform ages on
    [0, 2], child types fair coin, life span 2."""
    return load_model(MODELS_DIR / "general-two-type.json")
