"""Shared oracles for the test suite.

Everything here is computed without the package's FFT machinery: direct
mode sums on explicit grids and O(K^4) convolution loops.
"""

import numpy as np
import pytest

TWO_PI = 2.0 * np.pi


def modes(K):
    return [(a, b) for a in range(-K, K + 1) for b in range(-K, K + 1)]


def synthesize(coeffs, x1, x2):
    """Direct sum_k c_k exp(2 pi i k.x) at the given points (real part)."""
    K = (coeffs.shape[-1] - 1) // 2
    out = np.zeros(coeffs.shape[:-2] + np.shape(x1), dtype=complex)
    for a, b in modes(K):
        c = coeffs[..., a + K, b + K]
        if np.any(c != 0):
            out = out + c[..., None, None] * np.exp(1j * TWO_PI * (a * x1 + b * x2))
    return out


def brute_advect(u, xi):
    """Truncated (u . grad) xi by direct convolution over mode pairs."""
    K = (xi.shape[-1] - 1) // 2
    out = np.zeros_like(xi, dtype=complex)
    nz_u = [(p, q) for p, q in modes(K) if np.any(u[:, p + K, q + K] != 0)]
    nz_x = [(p, q) for p, q in modes(K) if np.any(xi[:, p + K, q + K] != 0)]
    for p1, p2 in nz_u:
        up = u[:, p1 + K, p2 + K]
        for q1, q2 in nz_x:
            m1, m2 = p1 + q1, p2 + q2
            if max(abs(m1), abs(m2)) > K:
                continue
            dot = 1j * TWO_PI * (up[0] * q1 + up[1] * q2)
            out[:, m1 + K, m2 + K] += dot * xi[:, q1 + K, q2 + K]
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
