"""Reference computations that share no code with the package under test."""

from itertools import product

import numpy as np


def hinf_norm(A, B, C, D, grid=4001, refine=60):
    """Peak singular value of the transfer matrix on the unit circle.

    Dense frequency grid, then golden-section refinement around the best point.
    """
    A, B, C, D = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C, D))
    n = A.shape[0]

    def sigma(w):
        G = C @ np.linalg.solve(np.exp(1j * w) * np.eye(n) - A, B) + D
        return np.linalg.svd(G, compute_uv=False)[0]

    ws = np.linspace(0.0, np.pi, grid)
    vals = np.array([sigma(w) for w in ws])
    k = int(np.argmax(vals))
    lo, hi = ws[max(k - 1, 0)], ws[min(k + 1, grid - 1)]
    phi = (np.sqrt(5) - 1) / 2
    for _ in range(refine):
        a, b = hi - phi * (hi - lo), lo + phi * (hi - lo)
        if sigma(a) > sigma(b):
            hi = b
        else:
            lo = a
    return max(vals[k], sigma(0.5 * (lo + hi)))


def gramian(A, B, terms=5000):
    """Controllability Gramian by truncated series (A assumed Schur stable)."""
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    W = np.zeros((A.shape[0], A.shape[0]))
    M = B.copy()
    for _ in range(terms):
        W += M @ M.T
        M = A @ M
    return W


def energy_to_peak(A, B, C):
    """Energy-to-peak gain sqrt(lambda_max(C W C^T)) of a single LTI system."""
    C = np.atleast_2d(C)
    return float(np.sqrt(np.linalg.eigvalsh(C @ gramian(A, B) @ C.T).max()))


def window_admissible(word, n, k):
    """Whether ``word`` (1 = success) extends to a sequence meeting "k of every n"."""
    padded = [1] * n + list(word) + [1] * n
    return all(sum(padded[s : s + n]) >= k for s in range(len(padded) - n + 1))


def binary_words(max_len):
    for L in range(1, max_len + 1):
        yield from product((0, 1), repeat=L)


def labels_of(word):
    """Split a word starting with 1 into block lengths (1 0^r -> r + 1)."""
    out = []
    for b in word:
        if b:
            out.append(1)
        else:
            out[-1] += 1
    return out


def step_plant(A, B, Bu, C, D, Du, word, x0, w, u, hold):
    """Step ``x+ = Ax + Bw + Bu u`` through a loss word; one u sample per success."""
    x = np.array(x0, dtype=float)
    held = np.zeros(np.atleast_2d(Bu).shape[1])
    zs, k = [], 0
    for t, bit in enumerate(word):
        if bit:
            held = np.asarray(u[k], dtype=float)
            k += 1
            ut = held
        else:
            ut = held if hold else np.zeros_like(held)
        zs.append(C @ x + D @ w[t] + Du @ ut)
        x = A @ x + B @ w[t] + Bu @ ut
    return x, np.concatenate(zs)


def random_stable(rng, n, m=1, p=1, radius=0.9):
    """Random (A, B, C, D) with spectral radius ``radius``."""
    A = rng.standard_normal((n, n))
    A *= radius / max(abs(np.linalg.eigvals(A)))
    return A, rng.standard_normal((n, m)), rng.standard_normal((p, n)), rng.standard_normal((p, m))
