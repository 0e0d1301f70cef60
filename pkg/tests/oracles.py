"""Independent dense-matrix references for the amplifier.

Everything here builds full matrices on a square Fock box and calls
``scipy.linalg.expm``; nothing is shared with the package's sparse code.
"""

import numpy as np
from scipy.linalg import expm


def lowering(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), 1)


def single_mode_squeezed(g: float, dim: int, photons: int, sign: int = 1) -> np.ndarray:
    """Amplitudes of exp(sign * g/2 (a^dag^2 - a^2)) |photons>."""
    a = lowering(dim)
    gen = 0.5 * sign * g * (a.T @ a.T - a @ a)
    psi0 = np.zeros(dim)
    psi0[photons] = 1.0
    return expm(gen) @ psi0


def two_mode_hv(alpha: complex, beta: complex, g: float, dim: int) -> np.ndarray:
    """exp(g (a_H^dag a_V^dag - a_H a_V)) (alpha|1,0> + beta|0,1>) as a [n_H, n_V] table."""
    a = lowering(dim)
    eye = np.eye(dim)
    aH, aV = np.kron(a, eye), np.kron(eye, a)
    gen = g * (aH.T @ aV.T - aH @ aV)
    psi0 = np.zeros(dim * dim, dtype=complex)
    psi0[1 * dim + 0] = alpha
    psi0[0 * dim + 1] = beta
    return (expm(gen) @ psi0).reshape(dim, dim)


def rotate_table(table: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Apply the passive map with single-photon matrix W (target_j <- source_i) on a square box.

    Uses the generating-function expansion |n_a, n_b> -> (sum_j W[j,0] b_j^dag)^n_a (sum_j W[j,1] b_j^dag)^n_b |0> / sqrt(n_a! n_b!).
    """
    from math import comb, factorial, sqrt

    dim = table.shape[0]
    out = np.zeros_like(table, dtype=complex)
    for na in range(dim):
        for nb in range(dim - na):
            c = table[na, nb]
            if c == 0:
                continue
            pref = c / sqrt(factorial(na) * factorial(nb))
            for i in range(na + 1):
                for k in range(nb + 1):
                    coef = (
                        comb(na, i) * comb(nb, k)
                        * W[0, 0] ** i * W[1, 0] ** (na - i)
                        * W[0, 1] ** k * W[1, 1] ** (nb - k)
                    )
                    m0, m1 = i + k, na + nb - i - k
                    out[m0, m1] += pref * coef * sqrt(factorial(m0) * factorial(m1))
    return out
