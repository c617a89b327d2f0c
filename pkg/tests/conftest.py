import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def quat_from_rotvec(w):
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    if theta == 0:
        return np.array([1.0, 0.0, 0.0, 0.0])
    axis = w / theta
    return np.concatenate([[np.cos(theta / 2)], np.sin(theta / 2) * axis])


def quat_mul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_rotate(q, v):
    qc = q * np.array([1, -1, -1, -1])
    return quat_mul(quat_mul(q, np.concatenate([[0.0], v])), qc)[1:]


def quat_matrix(q):
    """Rotation matrix built column by column by rotating the basis vectors."""
    return np.column_stack([quat_rotate(q, e) for e in np.eye(3)])


def random_rotvec(rng, max_angle=np.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return axis * rng.uniform(0, max_angle)


ACCEPTANCE_LINES = []


def report(number, name, passed, detail):
    """Record one acceptance verdict; printed in the terminal summary."""
    line = f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
