import numpy as np
import pytest

from effham import DiscreteState, make_grid, make_hamiltonian, PenalizedParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(rng, N, mean_one=True, spread=0.8):
    M = np.exp(spread * rng.standard_normal(N))
    if mean_one:
        M /= M.mean()
    U = rng.standard_normal(N)
    return DiscreteState(M, U - U.mean())


PRESET_CASES = [
    ("minus_sin", 1, 9, [0.5]),
    ("strong_mix", 1, 8, [0.3]),
    ("two_cos", 2, 4, [1.5, 2.5]),
    ("sin_sin", 2, 4, [-0.7, 0.4]),
]


def setup_case(name, d, n, P, k=10.0):
    return make_hamiltonian(name, P), make_grid(d, n), PenalizedParams(k)


# acceptance criteria outcomes, reported once at the end of the session
ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


class _Criterion:
    def __init__(self, num: int, title: str):
        self.num, self.title = num, title
        self.notes: list[str] = []

    def note(self, msg: str) -> None:
        self.notes.append(msg)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.notes)
        if exc is not None:
            detail = (detail + "; " if detail else "") + str(exc).splitlines()[0][:200]
        ACCEPTANCE[self.num] = (status, self.title, detail)
        print(f"criterion {self.num:2d} {status}: {self.title} [{detail}]")
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        status, title, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d} {status}: {title}")
        if detail:
            terminalreporter.write_line(f"    {detail}")
