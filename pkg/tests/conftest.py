import numpy as np
import pytest
from hypothesis import strategies as st

from mfbwalk import make_model

# the two reference configurations used throughout
CFG_SYM = dict(p=0.5, q=0.5, r=0.0, p0=0.25, q0=0.25, r0=0.25, s0=0.25,
               N=2, i0=0)
CFG_DRIFT = dict(p=0.4, q=0.2, r=0.4, p0=0.2, q0=0.2, r0=0.4, s0=0.2,
                 N=2, i0=0)


@pytest.fixture(scope="session")
def cfg_sym():
    return make_model(**CFG_SYM)


@pytest.fixture(scope="session")
def cfg_drift():
    return make_model(**CFG_DRIFT)


def random_model(rng: np.random.Generator, branch: str = "DRIFT",
                 N: int | None = None, i0: int | None = None,
                 pq_floor: float = 0.05, min_gap: float = 0.05):
    """Deterministic random valid model, kept away from the edges of the
    parameter space so truncations and tolerances stay desk scale.

    ``pq_floor`` bounds p and q from below; ``min_gap`` bounds |rho - 1|
    from below on the drift branch (tighter values give well-conditioned
    spectra for finite-difference checks)."""
    n = int(rng.integers(2, 6)) if N is None else N
    start = int(rng.integers(0, n)) if i0 is None else i0
    while True:
        p = rng.uniform(pq_floor, 0.45)
        q = p if branch == "BALANCED" else rng.uniform(pq_floor, 0.45)
        if branch == "DRIFT" and abs(p / q - 1.0) < min_gap:
            continue
        p0 = rng.uniform(0.05, 0.45)
        q0 = rng.uniform(0.05, 0.45)
        s0 = rng.uniform(0.08, 0.4)
        if p0 + q0 + s0 > 0.98:
            continue
        return make_model(p=p, q=q, p0=p0, q0=q0, s0=s0, N=n, i0=start)


@st.composite
def model_strategy(draw, branch=None):
    """Valid models away from the near-balance drift zone, where the drift
    closed forms intrinsically lose precision."""
    n = draw(st.integers(2, 5))
    i0 = draw(st.integers(0, n - 1))
    p = draw(st.floats(0.05, 0.45))
    if branch == "BALANCED":
        q = p
    else:
        q = draw(st.floats(0.05, 0.45))
        if abs(p / q - 1.0) < 0.05:
            q = q * 1.2 + 0.01 if branch == "DRIFT" else p
    p0 = draw(st.floats(0.05, 0.4))
    q0 = draw(st.floats(0.05, 0.4))
    s0 = draw(st.floats(0.08, 0.4))
    total = p0 + q0 + s0
    if total > 0.98:
        p0, q0, s0 = (x * 0.98 / total for x in (p0, q0, s0))
    return make_model(p=p, q=q, p0=p0, q0=q0, s0=s0, N=n, i0=i0)
