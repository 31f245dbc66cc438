"""8-level 87Rb ground-state Hamiltonian in the microwave rotating frame.

Basis order (quantization axis along the local static field):

    0..2 : |1,-1>, |1,0>, |1,+1>
    3..7 : |2,-2>, |2,-1>, |2,0>, |2,+1>, |2,+2>

Coupling to the fields keeps only the electron spin with g_J = 2, the static
Zeeman shift is linear (or the Breit-Rabi energies, optionally), and the
microwave is treated in the rotating-wave approximation.  All functions
accept batches: fields of shape (N, 3) give matrices of shape (N, 8, 8).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import CONSTANTS, PhysicalConstants

BASIS = [(1, -1), (1, 0), (1, 1), (2, -2), (2, -1), (2, 0), (2, 1), (2, 2)]
F1 = slice(0, 3)
F2 = slice(3, 8)


def index(F: int, m: int) -> int:
    try:
        return BASIS.index((F, m))
    except ValueError:
        raise KeyError(f"|{F},{m}> is not a ground-state level") from None


STATE_0 = index(1, -1)   # |0>
STATE_1 = index(2, 1)    # |1>
STATE_2 = index(2, -1)   # |2>, auxiliary


class LabellingWarning(UserWarning):
    pass


# -- angular momentum ------------------------------------------------------

def _product_operators():
    """J and I components on |m_J, m_I>, m_J in (+1/2, -1/2), m_I in (3/2 .. -3/2)."""
    def spin(s):
        ms = np.arange(s, -s - 1, -1)
        jz = np.diag(ms)
        jp = np.zeros((len(ms), len(ms)))
        for k in range(1, len(ms)):
            m = ms[k]
            jp[k - 1, k] = math.sqrt(s * (s + 1) - m * (m + 1))
        return jp, jz
    jp, jz = spin(0.5)
    eye_i = np.eye(4)
    Jp = np.kron(jp, eye_i)
    Jz = np.kron(jz, eye_i)
    return Jp, Jz


def coupled_basis() -> np.ndarray:
    """Columns are |F, m_F> (BASIS order) expanded in the product basis.

    J = 1/2 coupled to I = 3/2 with Condon-Shortley phases:
    |2,m> = a |up, m-1/2> + b |dn, m+1/2>,  |1,m> = b |up, m-1/2> - a |dn, m+1/2>,
    a = sqrt((2+m)/4), b = sqrt((2-m)/4).
    """
    U = np.zeros((8, 8))

    def prod(mj, mi):
        return (0 if mj > 0 else 4) + int(round(1.5 - mi))

    for col, (F, m) in enumerate(BASIS):
        a = math.sqrt((2 + m) / 4)
        b = math.sqrt((2 - m) / 4)
        up_mi, dn_mi = m - 0.5, m + 0.5
        if F == 2:
            if abs(up_mi) <= 1.5:
                U[prod(0.5, up_mi), col] = a
            if abs(dn_mi) <= 1.5:
                U[prod(-0.5, dn_mi), col] = b
        else:
            U[prod(0.5, up_mi), col] = b
            U[prod(-0.5, dn_mi), col] = -a
    return U


def electron_spin_operators() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(J_x, J_y, J_z) in the |F, m_F> basis."""
    Jp, Jz = _product_operators()
    U = coupled_basis()
    Jp_F = U.T @ Jp @ U
    Jz_F = U.T @ Jz @ U
    Jx = 0.5 * (Jp_F + Jp_F.T)
    Jy = -0.5j * (Jp_F - Jp_F.T)
    return Jx.astype(complex), Jy, Jz_F.astype(complex)


_JX, _JY, _JZ = electron_spin_operators()
_M_F = np.array([m for _, m in BASIS], float)
_IS_F2 = np.array([F == 2 for F, _ in BASIS])


def local_frame(B: np.ndarray) -> np.ndarray:
    """Orthonormal frames (N, 3, 3), rows (e1, e2, e_z) with e_z along B."""
    B = np.atleast_2d(B)
    Bmag = np.linalg.norm(B, axis=-1)
    if np.any(Bmag == 0):
        raise ValueError("quantization axis undefined: static field is zero")
    ez = B / Bmag[:, None]
    ref = np.where(np.abs(ez[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = np.cross(ref, ez)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(ez, e1)
    return np.stack([e1, e2, ez], axis=1)


def angular_momentum_couplings(B_mw_local, constants: PhysicalConstants = CONSTANTS) -> np.ndarray:
    """Rabi frequencies Omega[m1 + 1, m2 + 2] = (2 mu_B / hbar) <2,m2| B_mw . J |1,m1>.

    ``B_mw_local`` is the complex microwave amplitude in the local frame
    (e1, e2, along B), shape (3,) or (N, 3).  Returns (3, 5) or (N, 3, 5), rad/s.
    """
    b = np.asarray(B_mw_local, complex)
    single = b.ndim == 1
    b = np.atleast_2d(b)
    op = b[:, 0, None, None] * _JX + b[:, 1, None, None] * _JY + b[:, 2, None, None] * _JZ
    omega = 2 * constants.mu_B / constants.hbar * op[:, F2, F1].transpose(0, 2, 1)
    return omega[0] if single else omega


def breit_rabi_energies(B, constants: PhysicalConstants = CONSTANTS) -> np.ndarray:
    """Full static Zeeman energies (J) of the 8 levels, hyperfine centroid removed."""
    B = np.atleast_1d(np.asarray(B, float))
    dE = constants.hbar * constants.omega_hfs
    gI, gJ = constants.g_I, constants.g_J
    x = (gJ - gI) * constants.mu_B * B / dE
    out = np.empty(B.shape + (8,))
    for k, (F, m) in enumerate(BASIS):
        lin = gI * constants.mu_B * m * B
        if F == 2 and m == -2:
            root = 1 - x
        else:
            root = np.sqrt(1 + m * x + x**2)
        out[..., k] = lin + (0.5 if F == 2 else -0.5) * dE * root
    return out


@dataclass
class RwaHamiltonian:
    """Batch of rotating-frame Hamiltonians plus their bookkeeping.

    ``rabi`` and ``detuning`` are indexed [N, m1 + 1, m2 + 2] and are in rad/s;
    ``detuning`` is (E_{1,m1} - E_{2,m2}) / hbar from the diagonal.
    """

    matrix: np.ndarray
    Delta0: float
    omega_L: np.ndarray
    rabi: np.ndarray
    detuning: np.ndarray
    constants: PhysicalConstants = CONSTANTS

    @property
    def hbar(self) -> float:
        return self.constants.hbar

    @property
    def Omega_R(self) -> np.ndarray:
        return self.rabi[:, 0, 1]

    @property
    def Delta(self) -> np.ndarray:
        return self.detuning[:, 0, 1]


def build_rwa_hamiltonian(B, B_mw, omega: float, zeeman: str = "linear",
                          constants: PhysicalConstants = CONSTANTS) -> RwaHamiltonian:
    """Assemble H for static field(s) B (T), microwave amplitude(s) B_mw (T), drive omega (rad/s)."""
    B = np.atleast_2d(np.asarray(B, float))
    B_mw = np.atleast_2d(np.asarray(B_mw, complex))
    B_mw = np.broadcast_to(B_mw, B.shape)
    frame = local_frame(B)
    b_local = np.einsum("nij,nj->ni", frame, B_mw)
    hbar = constants.hbar
    Bmag = np.linalg.norm(B, axis=-1)
    Delta0 = omega - constants.omega_hfs
    omega_L = constants.mu_B * Bmag / (2 * hbar)
    n = B.shape[0]
    if zeeman == "linear":
        diag = np.where(_IS_F2, -0.5 * hbar * Delta0 + hbar * omega_L[:, None] * _M_F,
                        0.5 * hbar * Delta0 - hbar * omega_L[:, None] * _M_F)
    elif zeeman == "breit_rabi":
        diag = breit_rabi_energies(Bmag, constants) + np.where(_IS_F2, -0.5, 0.5) * hbar * omega
    else:
        raise ValueError(f"unknown Zeeman model {zeeman!r}")
    rabi = angular_momentum_couplings(b_local, constants)
    H = np.zeros((n, 8, 8), complex)
    H[:, np.arange(8), np.arange(8)] = diag
    H[:, F2, F1] = 0.5 * hbar * rabi.transpose(0, 2, 1)
    H[:, F1, F2] = np.conj(H[:, F2, F1]).transpose(0, 2, 1)
    det = (diag[:, F1, None] - diag[:, None, F2]) / hbar
    return RwaHamiltonian(H, Delta0, omega_L, rabi, det, constants)


# -- eigensolver -----------------------------------------------------------

_PAIRS = [(p, q) for p in range(8) for q in range(p + 1, 8)]


def jacobi_eigh(A: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi diagonalization of a batch of Hermitian matrices.

    Returns ascending eigenvalues (N, n) and eigenvectors as columns (N, n, n).
    Sweeps stop when the off-diagonal Frobenius norm is below ``tol`` times
    the matrix norm.
    """
    A = np.array(A, dtype=complex, copy=True)
    single = A.ndim == 2
    if single:
        A = A[None]
    nb, n, _ = A.shape
    V = np.broadcast_to(np.eye(n, dtype=complex), A.shape).copy()
    scale = np.linalg.norm(A, axis=(1, 2))
    scale = np.where(scale > 0, scale, 1.0)
    pairs = [(p, q) for p in range(n) for q in range(p + 1, n)]
    offmask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(A[:, offmask]) ** 2, axis=1))
        if np.all(off <= tol * scale):
            break
        for p, q in pairs:
            apq = A[:, p, q]
            mag = np.abs(apq)
            if not np.any(mag > 1e-3 * tol * scale / n):
                continue
            app = A[:, p, p].real
            aqq = A[:, q, q].real
            active = mag > 0
            safe = np.where(active, mag, 1.0)
            phase = np.where(active, apq / safe, 1.0)  # e^{i phi}
            theta = (aqq - app) / (2 * safe)
            t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta**2 + 1))
            t = np.where(active, t, 0.0)
            c = 1 / np.sqrt(t**2 + 1)
            s = t * c
            # G = diag(1, e^{-i phi}) . [[c, s], [-s, c]] acting on columns p, q
            gpp, gpq = c, s
            gqp, gqq = -s * np.conj(phase), c * np.conj(phase)
            colp = A[:, :, p].copy()
            colq = A[:, :, q]
            A[:, :, p] = colp * gpp[:, None] + colq * gqp[:, None]
            A[:, :, q] = colp * gpq[:, None] + colq * gqq[:, None]
            rowp = A[:, p, :].copy()
            rowq = A[:, q, :]
            A[:, p, :] = np.conj(gpp)[:, None] * rowp + np.conj(gqp)[:, None] * rowq
            A[:, q, :] = np.conj(gpq)[:, None] * rowp + np.conj(gqq)[:, None] * rowq
            A[:, p, q] = 0.0
            A[:, q, p] = 0.0
            vp = V[:, :, p].copy()
            vq = V[:, :, q]
            V[:, :, p] = vp * gpp[:, None] + vq * gqp[:, None]
            V[:, :, q] = vp * gpq[:, None] + vq * gqq[:, None]
    else:
        raise RuntimeError("Jacobi eigensolver did not converge")
    w = np.real(np.diagonal(A, axis1=1, axis2=2))
    order = np.argsort(w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    if single:
        return w[0], V[0]
    return w, V


@dataclass
class DressedSpectrum:
    """Dressed energies (N, 8) ascending, eigenvectors (N, 8, 8) as columns, and
    ``labels[:, n]`` = index of the bare state dressed level n connects to."""

    energies: np.ndarray
    vectors: np.ndarray
    labels: np.ndarray
    ambiguous: np.ndarray

    def level(self, bare: int) -> np.ndarray:
        """Dressed-level index carrying the given bare label, per point."""
        return np.argmax(self.labels == bare, axis=1)

    def energy_of(self, bare: int) -> np.ndarray:
        k = self.level(bare)
        return np.take_along_axis(self.energies, k[:, None], axis=1)[:, 0]

    def state_of(self, bare: int) -> np.ndarray:
        """Eigenvector (N, 8) with bare label, phased so its bare component is real >= 0."""
        k = self.level(bare)
        vec = np.take_along_axis(self.vectors, k[:, None, None], axis=2)[:, :, 0]
        ref = vec[:, bare]
        ph = np.where(np.abs(ref) > 0, np.conj(ref) / np.where(np.abs(ref) > 0, np.abs(ref), 1), 1)
        return vec * ph[:, None]


def _assign_labels(overlap: np.ndarray, energies: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # overlap[n_point, bare, dressed]
    nb = overlap.shape[0]
    labels = np.argmax(overlap, axis=1)  # bare index for each dressed level
    srt = np.sort(overlap, axis=1)
    ambiguous = np.any(srt[:, -1, :] - srt[:, -2, :] < 1e-9, axis=1)
    bad = np.array([len(set(row)) != row.size for row in labels]) | ambiguous
    for i in np.nonzero(bad)[0]:
        # ties broken toward energy order: tiny bias favours pairing ascending with ascending
        bias = -1e-12 * np.abs(np.arange(8)[:, None] - np.argsort(np.argsort(energies[i]))[None, :])
        rows, cols = linear_sum_assignment(-(overlap[i] + bias))
        labels[i, cols] = rows
    return labels, ambiguous


def dressed_spectrum(H: RwaHamiltonian | np.ndarray, reference: DressedSpectrum | None = None,
                     solver: str = "lapack") -> DressedSpectrum:
    """Diagonalize and label.  Labels follow maximal overlap with ``reference``
    (continuation along a path) or with the bare basis."""
    M = H.matrix if isinstance(H, RwaHamiltonian) else np.atleast_3d(H)
    if M.ndim == 2:
        M = M[None]
    if solver == "jacobi":
        w, V = jacobi_eigh(M)
    elif solver == "lapack":
        w, V = np.linalg.eigh(M)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    if reference is None:
        overlap = np.abs(V) ** 2
    else:
        ref_vecs = np.empty_like(reference.vectors)
        # reference columns reordered into bare-label order
        for b in range(8):
            k = reference.level(b)
            ref_vecs[:, :, b] = np.take_along_axis(reference.vectors, k[:, None, None], axis=2)[:, :, 0]
        overlap = np.abs(np.einsum("nib,nid->nbd", np.conj(ref_vecs), V)) ** 2
    labels, ambiguous = _assign_labels(overlap, w)
    if ambiguous.any():
        warnings.warn(f"ambiguous dressed-state labelling at {int(ambiguous.sum())} point(s); "
                      "ties broken by energy order", LabellingWarning, stacklevel=2)
    return DressedSpectrum(w, V, labels, ambiguous)


def resonant(H: RwaHamiltonian) -> np.ndarray:
    """Mask [N, m1+1, m2+2] of coupled transitions whose detuning is zero to rounding.

    The detuning comes from differences of diagonal entries of order
    hbar * omega_hfs, so it cannot be resolved below ~64 ulp of that scale.
    """
    floor = 64 * np.finfo(float).eps * H.constants.omega_hfs
    return (np.abs(H.rabi) > 0) & (np.abs(H.detuning) <= floor)


def perturbative_shifts(H: RwaHamiltonian) -> np.ndarray:
    """Second-order light shifts (J) of the 8 bare levels, shape (N, 8).

    Each coupled transition adds +hbar|Omega|^2 / 4 Delta to its F=1 level and
    the negative of that to its F=2 level.
    """
    rabi2 = np.abs(H.rabi) ** 2
    coupled = rabi2 > 0
    det = H.detuning
    if np.any(resonant(H)):
        raise ValueError("perturbative limit invalid: a coupled transition is resonant")
    if np.any(coupled & (rabi2 >= det**2)):
        warnings.warn("perturbative limit outside validity (|Omega| >= |Delta|)", RuntimeWarning, stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(coupled, H.hbar * rabi2 / (4 * det), 0.0)
    out = np.zeros(det.shape[:1] + (8,))
    out[:, F1] = term.sum(axis=2)
    out[:, F2] = -term.sum(axis=1)
    return out


def perturbation_parameter(H: RwaHamiltonian, bare: int = STATE_0) -> np.ndarray:
    """Largest |Omega| / |Delta| over the transitions touching one bare level, per point."""
    r = np.abs(H.rabi) / np.maximum(np.abs(H.detuning), np.finfo(float).tiny)
    if bare < 3:
        return r[:, bare, :].max(axis=1)
    return r[:, :, bare - 3].max(axis=1)


def admixture(spectrum: DressedSpectrum, source: int = STATE_0, target: int = STATE_2) -> np.ndarray:
    """Amplitude <target | dressed(source)>, default <2,-1 | 0bar>."""
    return spectrum.state_of(source)[:, target]
