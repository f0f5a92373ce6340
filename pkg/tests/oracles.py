"""Independent reference computations used by the tests.

None of these call into the package's numerical kernels; they are built
from closed forms, brute-force enumeration or generic library routines.
"""
import itertools
import math

import numpy as np
from numpy.polynomial import hermite_e, polynomial as P
from scipy.integrate import quad


def gaussian_derivative(x, order):
    """d^n/dx^n exp(-x^2) = (-1)^n H_n(x) exp(-x^2) with physicists' Hermite H_n."""
    coeffs = np.zeros(order + 1)
    coeffs[order] = 1.0
    # H_n(x) = 2^{n/2} He_n(sqrt(2) x)
    h = 2 ** (order / 2) * hermite_e.hermeval(np.sqrt(2) * x, coeffs)
    return (-1) ** order * h * np.exp(-x**2)


def gaussian_delta_hs_norm(eps, s):
    """H^s norm of the unit-mass Gaussian of width eps on the line, by quadrature."""
    val, _ = quad(lambda xi: (1 + xi**2) ** s * np.exp(-(eps**2) * xi**2), -np.inf, np.inf,
                  epsabs=0, epsrel=1e-13, limit=500)
    return math.sqrt(val / (2 * math.pi))


def eig_oracle(a3, b1, b2):
    """Eigenvalues of the dispersion matrix via a generic eigensolver, larger first."""
    A = np.array([[1.0, a3], [a3 * b2 / b1, 1.0 / b1]])
    w = np.linalg.eigvals(A).real
    return float(max(w)), float(min(w))


def reduced_oracle(a1, a2, a3, b1, b2):
    """Reduced coefficients by probing the conjugated nonlinearity at sample points."""
    A = np.array([[1.0, a3], [a3 * b2 / b1, 1.0 / b1]])
    w, V = np.linalg.eig(A)
    order = np.argsort(-w.real)
    w, V = w.real[order], V.real[:, order]
    for j in range(2):
        V[:, j] /= np.linalg.norm(V[:, j])
        if V[0, j] < 0 or (V[0, j] == 0 and V[1, j] < 0):
            V[:, j] *= -1
    Si = np.linalg.inv(V)

    def G(u, v):
        return np.array([u * u / 2 + a1 * v * v / 2 + a2 * u * v,
                         (v * v / 2 + b2 * a2 * u * u / 2 + b2 * a1 * u * v) / b1])

    def F(p, q):
        return Si @ G(*(V @ np.array([p, q])))

    f10, f01, f11 = F(1, 0), F(0, 1), F(1, 1)
    lam = np.cbrt(1 / w)
    a, at = 2 * f10
    b, bt = 2 * f01
    c, ct = f11 - f10 - f01
    return (lam[0] * a, lam[0] * b, lam[0] * c, lam[1] * at, lam[1] * bt, lam[1] * ct)


def soliton_exact(x, t, kappa, a, x0=0.0):
    return 12 * kappa**2 / a / np.cosh(kappa * (x - x0 - 4 * kappa**2 * t)) ** 2


def multinomial_bruteforce(k):
    """Sum over ordered triples of k!/(k1!k2!k3!) 2^k1, enumerating all words of length k."""
    # each word over {P+2's "2", left P, right P} is one term; weight 2 for the first letter
    return sum(2 ** word.count(0) for word in itertools.product(range(3), repeat=k))


def separable_powers(x, t, jmax):
    """P^j u for u = exp(-x^2)(1 + t), j = 0..jmax, as physical samples.

    P = 3t d_t + x d_x splits over the two factors, so
    P^j (g h) = sum_i C(j, i) (x d_x)^i g (3t d_t)^(j-i) h with
    (3t d_t)^m (1 + t) = 3^m t for m >= 1 and (x d_x)(p e^{-x^2}) = (x p' - 2x^2 p) e^{-x^2}.
    """
    polys = [np.array([1.0])]
    for _ in range(jmax):
        p = polys[-1]
        polys.append(P.polysub(P.polymulx(P.polyder(p)), 2 * P.polymulx(P.polymulx(p))))
    out = []
    for j in range(jmax + 1):
        total = np.zeros_like(x)
        for i in range(j + 1):
            m = j - i
            h = (1 + t) if m == 0 else 3**m * t
            total = total + math.comb(j, i) * P.polyval(x, polys[i]) * np.exp(-x**2) * h
        out.append(total)
    return out
