from __future__ import annotations

import contextlib
import time

import numpy as np
import pytest
from hypothesis import settings

from wcurv import functionals as F
from wcurv import geometry as G
from wcurv import variations as V
from wcurv.tensorfield import GridSpec

TWO_PI = 2 * np.pi


def torus_grid(n: int = 2, size: int | None = None) -> GridSpec:
    size = size or (32 if n == 2 else 24)
    return GridSpec((size,) * n, (TWO_PI,) * n)


def perturbed_torus(seed: int, n: int = 2, size: int | None = None, *, tau=None, lam=0.7, eps=0.05, amp=0.3):
    grid = torus_grid(n, size)
    rng = np.random.default_rng(seed)
    phi = G.trig_field(grid, modes=2, amplitude=amp, rng=rng)
    u = G.trig_field(grid, modes=2, amplitude=eps, rng=rng)
    if tau is not None:
        return G.conformal_torus(grid, u, phi, tau=tau)
    return G.conformal_torus(grid, u, phi, lam=lam)


@pytest.fixture(scope="session")
def gauss2():
    return G.gaussian_soliton(2, 0.5)


@pytest.fixture(scope="session")
def sphere2():
    return G.round_sphere(2)


@pytest.fixture(scope="session")
def prod21():
    return G.build_backend({"scenario": "product", "n": 3, "gaussian_dim": 1})


TIMINGS: dict = {}


@pytest.fixture(scope="session")
def product_gram(prod21):
    t0 = time.perf_counter()
    rep = V.gram_quadratic_form(F.W3, prod21, V.default_basis(prod21), threads=4)
    TIMINGS["product_gram"] = time.perf_counter() - t0
    return rep


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict = {}


@contextlib.contextmanager
def criterion(num: int, title: str):
    detail: dict = {}
    t0 = time.perf_counter()
    ok = False
    try:
        yield detail
        ok = True
    finally:
        detail["runtime_s"] = round(time.perf_counter() - t0, 2)
        body = ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in detail.items())
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {title} ({body})"
        ACCEPTANCE[num] = line
        print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[num])


settings.register_profile("wcurv", deadline=None, derandomize=True, max_examples=20)
settings.load_profile("wcurv")
