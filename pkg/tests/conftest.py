import numpy as np
import pytest

from agm.agmap import generate_instance
from agm.expr import parse
from agm.space import ConnectionField
from agm.tensor import TensorField, make_grid

# constant affinors with F0 F0 = e I
AFFINORS = {
    (2, 0): [[0, 1], [0, 0]],
    (2, 1): [[0, 1], [1, 0]],
    (2, -1): [[0, -1], [1, 0]],
    (3, 0): [[0, 1, 0], [0, 0, 0], [0, 0, 0]],
    (3, 1): [[0, 1, 0], [1, 0, 0], [0, 0, 1]],
    (4, 0): [[0, 0, 1, 0], [0, 0, 0, 1], [0, 0, 0, 0], [0, 0, 0, 0]],
    (4, 1): [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, -1, 0], [0, 0, 0, 1]],
    (4, -1): [[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]],
}

_VECTORS = {
    "p": ["x2", "x3*x1", "sin(x4)", "0.5"],
    "q": ["x1^2", "0.2", "cos(x2)", "x3"],
    "sigma": ["x1", "x2*x1", "1", "exp(0.5*x1)"],
    "psi": ["1", "0", "x2", "x1"],
}


def _fit(vals, n):
    # drop coordinates the chart does not have
    out = []
    for v in vals[:n]:
        for k in range(n + 1, 5):
            v = v.replace(f"x{k}", f"x{n}")
        out.append(v)
    return out


def generated(n, e):
    vecs = {k: _fit(v, n) for k, v in _VECTORS.items()}
    return generate_instance(n, e, AFFINORS[(n, e)], vecs["p"], vecs["q"], vecs["sigma"], vecs["psi"])


GENERATED_CASES = sorted(AFFINORS)


@pytest.fixture(scope="session")
def gen_cache():
    cache = {}

    def get(n, e):
        if (n, e) not in cache:
            cache[(n, e)] = generated(n, e)
        return cache[(n, e)]
    return get


def random_expr(rng, n, terms=3):
    """Smooth random expression text built from a few monomial and trig terms."""
    parts = []
    for _ in range(terms):
        c = round(float(rng.uniform(-1.5, 1.5)), 3)
        i, j = rng.integers(1, n + 1, size=2)
        kind = rng.integers(0, 5)
        if kind == 0:
            parts.append(f"{c}")
        elif kind == 1:
            parts.append(f"{c}*x{i}*x{j}")
        elif kind == 2:
            parts.append(f"{c}*sin(x{i} - {abs(c)}*x{j})")
        elif kind == 3:
            parts.append(f"{c}*exp(0.5*x{i})*x{j}")
        else:
            parts.append(f"{c}*cos(x{i})^2")
    return " + ".join(parts)


def random_connection(rng, n, density=0.6):
    comps = np.empty((n, n, n), dtype=object)
    for idx in np.ndindex(comps.shape):
        comps[idx] = parse(random_expr(rng, n) if rng.random() < density else "0", n)
    return ConnectionField(comps, n)


def random_field(rng, n, valence):
    comps = np.empty((n,) * sum(valence), dtype=object)
    for idx in np.ndindex(comps.shape):
        comps[idx] = parse(random_expr(rng, n, 2), n)
    return TensorField(comps, n, valence)


@pytest.fixture
def grid3():
    return make_grid(3, 20, seed=3)


# acceptance outcomes, filled in by test_acceptance and echoed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split("-")[1])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}  {detail}")
