"""Pole of the perturbed guide near a threshold: secular equation and residue.

For ``H = H0 - eps L`` with a localized perturbation ``L`` supported in the
source box, the resolvent pole ``lambda = -k^2`` near the threshold ``mu_m``
solves a scalar secular equation.  Splitting the threshold mode's ``1/(2k)``
degeneracy off the mode-sum resolvent leaves the regularized operator
``T g = V (A~ g)``; with ``S(k) = (I - eps T(k))^{-1}`` the pole is the fixed
point of

    k = (eps / 2) <phi_m, S(k) (V phi_m)>,

a contraction with rate ``O(eps)`` starting from ``k = 0``.  The residue of
the resolvent at the pole is ``psi = A(k) g`` with ``g = S(k)(V phi_m)``; its
transverse mode amplitudes and decay identify it as a genuine eigenfunction
(``m = 1``, or ``m >= 2`` with ``Im k > 0``) or a resonance state.

Pairings are bilinear (no conjugation): the secular function continues
analytically in ``k`` and ``V`` may be complex.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
import numpy.linalg as nla

from .modesum import BoxRegion, ModeSumKernel, apply_mode_sum
from .transverse import TransverseBasis

logger = logging.getLogger(__name__)

# classification labels (also the literal strings in sweep CSV output)
BOUND_STATE = "BoundState"
RESONANCE = "Resonance"
NO_EIGENVALUE = "NoEigenvalue"
POLE_AT_ZERO = "PoleAtZero"

MAX_SECULAR_ITERATIONS = 100
SECULAR_RTOL = 1e-12

# Successive-difference plateau below this multiple of the stop scale counts
# as roundoff-limited convergence.
_PLATEAU_FACTOR = 1e3


class IterationDivergedError(RuntimeError):
    """Secular iteration failed to settle; carries the iterate trace."""

    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


class AmbiguousClassificationError(ValueError):
    """Pole parameters fall on a boundary the classification rules do not cover."""


class LocalizedOperator(Protocol):
    """Perturbation acting on fields sampled over the source box.

    ``apply`` maps grid samples to grid samples (shape preserved); ``bound``
    is an eps-independent operator bound used in the contraction heuristic.
    Multiplication by a potential is the packaged implementation; anything
    satisfying this protocol can be passed to the solver.
    """

    def apply(self, samples: np.ndarray) -> np.ndarray: ...

    @property
    def bound(self) -> float: ...


@dataclass
class PerturbationField:
    """Multiplicative perturbation: sampled potential ``V`` on a box grid."""

    region: BoxRegion
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values)
        if self.values.shape != (self.region.n_long, self.region.n_trans):
            raise ValueError(
                f"potential samples {self.values.shape} do not match grid "
                f"({self.region.n_long}, {self.region.n_trans})"
            )

    @classmethod
    def from_function(cls, region: BoxRegion, fn: Callable) -> "PerturbationField":
        """Sample ``fn(x1, x2)`` on the region grid."""
        return cls(region=region, values=region.sample(fn))

    def apply(self, samples: np.ndarray) -> np.ndarray:
        return self.values * samples.reshape(self.values.shape)

    @property
    def bound(self) -> float:
        """Uniform operator bound ``C(L) = max |V|``."""
        return float(np.max(np.abs(self.values)))


def operator_matrix(op: LocalizedOperator, region: BoxRegion) -> np.ndarray:
    """Dense matrix of a localized operator on flattened grid samples.

    Built column-by-column from unit samples; meant for non-multiplicative
    operators, which have no cheaper representation.  O(N) applications.
    """
    n = region.size
    probe = np.zeros((region.n_long, region.n_trans))
    cols = np.empty((n, n), dtype=complex)
    for p in range(n):
        probe.flat[p] = 1.0
        cols[:, p] = np.asarray(op.apply(probe)).ravel()
        probe.flat[p] = 0.0
    if not np.any(cols.imag):
        return np.ascontiguousarray(cols.real)
    return cols


def operator_norm(matrix: np.ndarray, iterations: int = 20) -> float:
    """Spectral-norm estimate by power iteration on ``M* M``; deterministic."""
    v = np.ones(matrix.shape[1], dtype=matrix.dtype) / np.sqrt(matrix.shape[1])
    for _ in range(iterations):
        u = matrix.conj().T @ (matrix @ v)
        nrm = nla.norm(u)
        if nrm == 0.0:
            return 0.0
        v = u / nrm
    return float(nla.norm(matrix @ v))


def assemble_birman_schwinger(
    V: LocalizedOperator, k: complex, eps: float, kernel: ModeSumKernel
) -> np.ndarray:
    """Matrix of ``I - eps T(k)`` with ``T g = V (A~ g)`` on the box grid.

    Quadrature weights are folded in (through the mode-sum matrix), so this
    is the operator the secular linear solves invert.  When the heuristic
    contraction bound ``eps * C(L) * ||A~|| >= 1`` fails a warning is logged;
    the assembly itself proceeds.
    """
    if eps < 0:
        raise ValueError(f"coupling must be nonnegative, got {eps}")
    M = kernel.assemble(k, regularize_m=True)
    if isinstance(V, PerturbationField):
        vflat = V.values.ravel()
        T = vflat[:, None] * M
    else:
        T = operator_matrix(V, kernel.region) @ M
    if eps > 0:
        # cheap infinity-norm screen first; sharpen by power iteration only
        # when the screen trips, since the sharp estimate costs real matvecs
        rough = float(np.max(np.abs(M).sum(axis=1)))
        if eps * V.bound * rough >= 1.0:
            sharp = eps * V.bound * operator_norm(M)
            if sharp >= 1.0:
                logger.warning(
                    "contraction heuristic violated: eps*C(L)*||A|| = %.3g >= 1; "
                    "secular iteration may not converge",
                    sharp,
                )
    B = -eps * T
    B[np.diag_indices_from(B)] += 1.0
    return B


@dataclass
class PoleResult:
    """Pole location, residue samples, and classification for one solve."""

    k: complex
    classification: str
    residue: np.ndarray = field(repr=False)
    iterates: list = field(repr=False)
    converged: bool
    eps: float
    m: int

    @property
    def lam(self) -> complex:
        """Spectral displacement from the threshold, ``lambda = -k^2``."""
        return -self.k * self.k

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1


def _weighted_mode_row(kernel: ModeSumKernel) -> np.ndarray:
    """Flattened quadrature functional ``f -> <phi_m, f>`` over the box."""
    reg = kernel.region
    phim = kernel.basis.phi(kernel.m, reg.x2)
    return np.repeat(reg.w1, reg.n_trans) * np.tile(reg.w2 * phim, reg.n_long)


def _secular_value(
    V: LocalizedOperator, k: complex, eps: float, kernel: ModeSumKernel, rhs: np.ndarray, row: np.ndarray
) -> tuple[complex, np.ndarray]:
    """One evaluation of the secular map: returns ``((eps/2)<phi_m, g>, g)``."""
    kp = k.real if k.imag == 0.0 else k
    B = assemble_birman_schwinger(V, kp, eps, kernel)
    g = nla.solve(B, rhs)
    return 0.5 * eps * complex(row @ g), g


def solve_secular(
    V: LocalizedOperator,
    eps: float,
    kernel: ModeSumKernel,
    k0: complex = 0.0,
    method: str = "fixed-point",
) -> PoleResult:
    """Solve the secular equation for the pole ``k`` near threshold ``m``.

    Fixed-point iteration of ``k -> (eps/2)<phi_m, S(k)(V phi_m)>`` from
    ``k0`` (default the threshold itself), stopping when the update falls
    below ``1e-12 * max(eps^2, |k|)`` or plateaus at roundoff.  ``method =
    "newton"`` switches to Newton steps on the same map with a
    finite-difference derivative, useful when the contraction is slow.
    ``V phi_m = 0`` short-circuits to a ``PoleAtZero`` result: the threshold
    pole does not detach.
    """
    if method not in ("fixed-point", "newton"):
        raise ValueError(f"unknown method {method!r}")
    reg = kernel.region
    phim_grid = np.broadcast_to(
        kernel.basis.phi(kernel.m, reg.x2)[None, :], (reg.n_long, reg.n_trans)
    )
    rhs = np.asarray(V.apply(np.array(phim_grid))).ravel()
    row = _weighted_mode_row(kernel)
    if not np.any(rhs):
        return PoleResult(
            k=0.0 + 0.0j,
            classification=POLE_AT_ZERO,
            residue=np.zeros((reg.n_long, reg.n_trans)),
            iterates=[complex(k0)],
            converged=True,
            eps=eps,
            m=kernel.m,
        )

    k = complex(k0)
    trace = [k]
    g = None
    prev_step = np.inf
    stalled = 0
    for _ in range(MAX_SECULAR_ITERATIONS):
        try:
            value, g = _secular_value(V, k, eps, kernel, rhs, row)
            if method == "newton":
                h = 1e-6 * max(eps, abs(k))
                value_h, _ = _secular_value(V, k + h, eps, kernel, rhs, row)
                fprime = (value_h - value) / h - 1.0
                knew = k - (value - k) / fprime
            else:
                knew = value
        except ValueError as exc:
            # iterate escaped the kernel's analyticity domain; that is a
            # divergence, not a usage error
            raise IterationDivergedError(
                f"secular iterate k = {k} left the resolvent domain: {exc}",
                trace,
            ) from exc
        step = abs(knew - k)
        trace.append(knew)
        scale = max(eps * eps, abs(knew))
        k = knew
        if step < SECULAR_RTOL * scale:
            break
        if step >= prev_step:
            stalled += 1
            if stalled >= 3 and step < _PLATEAU_FACTOR * SECULAR_RTOL * scale:
                logger.debug("secular iteration plateaued at step %.3e", step)
                break
        else:
            stalled = 0
        prev_step = step
    else:
        raise IterationDivergedError(
            f"secular iteration did not converge in {MAX_SECULAR_ITERATIONS} "
            f"steps (last update {prev_step:.3e})",
            trace,
        )
    # final residue at the converged k
    _, g = _secular_value(V, k, eps, kernel, rhs, row)
    if k.imag == 0.0 and np.iscomplexobj(g) and not np.any(g.imag):
        g = g.real
    a1 = None
    if kernel.m >= 2 and k.real > 0 and k.imag < 0:
        a1 = _mode_amplitude(g, k, kernel, 1)
    return PoleResult(
        k=k,
        classification=classify_pole(k, kernel.m, a1),
        residue=np.asarray(g).reshape(reg.n_long, reg.n_trans),
        iterates=trace,
        converged=True,
        eps=eps,
        m=kernel.m,
    )


def regular_leading_asymptotic(
    V: PerturbationField, eps: float, m: int, basis: TransverseBasis
) -> complex:
    """Leading pole asymptotics ``lambda = -(eps^2/4) <phi_m V phi_m>^2``.

    The average is the quadrature of ``V phi_m^2`` over the source box.
    First order in the detachment parameter; the solver's pole differs from
    this by ``O(eps^3)``.
    """
    reg = V.region
    phim2 = basis.phi(m, reg.x2) ** 2
    avg = complex(np.einsum("i,j,ij->", reg.w1, reg.w2 * phim2, V.values))
    lam = -0.25 * eps * eps * avg * avg
    if lam.imag == 0.0:
        return complex(lam.real)
    return lam


def classify_pole(k: complex, m: int, a1: complex | None = None) -> str:
    """Classify a threshold pole as bound state, resonance, or neither.

    ``m = 1``: any pole with ``Re k > 0`` is a bound state below the
    threshold.  ``m >= 2``: ``Im k > 0`` keeps the pole on the physical
    sheet (bound state); ``Im k < 0`` with a nonzero first-mode amplitude
    ``a1`` is a resonance; ``Re k <= 0`` detaches no eigenvalue; ``k = 0``
    means the pole never left the threshold.  The boundary cases (``m >= 2``
    with ``Im k`` exactly zero, or a missing/vanishing ``a1`` on the
    resonance side) are not covered by the classification rules and raise.
    """
    if m < 1:
        raise ValueError(f"threshold index must be >= 1, got {m}")
    k = complex(k)
    if k == 0:
        return POLE_AT_ZERO
    if k.real <= 0:
        return NO_EIGENVALUE
    if m == 1:
        return BOUND_STATE
    if k.imag > 0:
        return BOUND_STATE
    if k.imag == 0.0:
        raise AmbiguousClassificationError(
            f"m = {m} pole with exactly real k = {k}: bound-state/resonance "
            "boundary case is not classifiable"
        )
    if a1 is None:
        raise AmbiguousClassificationError(
            "resonance-side pole requires the first-mode amplitude a1"
        )
    if a1 == 0:
        raise AmbiguousClassificationError(
            "resonance-side pole with vanishing a1 is not classifiable"
        )
    return RESONANCE


def _mode_amplitude(
    g: np.ndarray, k: complex, kernel: ModeSumKernel, j: int
) -> complex:
    """Amplitude ``a_j`` of ``exp(-K_j |x1|)`` in ``A(k) g`` just outside the box."""
    fld = apply_mode_sum(g, k, kernel, regularize_m=False)
    r = kernel.region.half_length + 1.0
    Kj = fld.exponents[j - 1]
    return complex(fld.mode_profile(j, np.array([r]))[0] * np.exp(Kj * r))


@dataclass
class EigenfunctionField:
    """Residue of the resolvent at the pole, as an evaluator on the guide.

    ``amplitudes[j-1]`` is the coefficient of ``phi_j(x2) exp(-K_j |x1|)``
    outside the source box; for bound states the threshold-mode amplitude is
    normalized to one (evaluator scaled to match).
    ``raw_threshold_amplitude`` is that amplitude before normalization,
    under the natural scaling ``psi = eps A(k) g`` in which it tends to one
    as the coupling vanishes.  ``square_integrable`` is false for resonance
    and no-eigenvalue poles, whose fields grow or radiate; the evaluator
    still returns values there.
    """

    amplitudes: np.ndarray = field(repr=False)
    raw_threshold_amplitude: complex
    decay_rate: float
    square_integrable: bool
    m: int
    _field: "object" = field(repr=False)
    _prefactor: complex = field(repr=False)

    def __call__(self, x1, x2) -> np.ndarray:
        return self._prefactor * self._field(x1, x2)

    def mode_profile(self, j: int, x1) -> np.ndarray:
        """Longitudinal amplitude of transverse mode ``j`` (normalized)."""
        return self._prefactor * self._field.mode_profile(j, x1)


def assemble_residue(p: PoleResult, kernel: ModeSumKernel) -> EigenfunctionField:
    """Assemble the residue field ``psi = eps A(k) g`` and its mode amplitudes.

    Amplitudes are read off one unit outside the source box; the decay rate
    comes from a log-linear fit of the threshold-mode profile over the next
    five units.  Not defined for ``PoleAtZero`` results.
    """
    if p.classification == POLE_AT_ZERO:
        raise ValueError("pole never detached from the threshold; no residue field")
    fld = apply_mode_sum(p.residue, p.k, kernel, regularize_m=False)
    R = kernel.region.half_length
    r0 = R + 1.0
    K = fld.exponents
    amps = np.array(
        [
            fld.mode_profile(j, np.array([r0]))[0] * np.exp(K[j - 1] * r0)
            for j in range(1, kernel.count + 1)
        ]
    )
    raw_m = p.eps * amps[p.m - 1]
    if p.classification == BOUND_STATE:
        if amps[p.m - 1] == 0:
            raise ValueError("threshold-mode amplitude vanished; cannot normalize")
        prefactor = 1.0 / amps[p.m - 1]
    else:
        prefactor = complex(p.eps)
    xs = np.linspace(r0, R + 6.0, 11)
    prof = np.abs(fld.mode_profile(p.m, xs))
    if np.any(prof == 0):
        decay = float("nan")
    else:
        decay = -float(np.polyfit(xs, np.log(prof), 1)[0])
    if p.classification != BOUND_STATE:
        logger.info(
            "residue field for %s pole is not square integrable", p.classification
        )
    return EigenfunctionField(
        amplitudes=amps * prefactor,
        raw_threshold_amplitude=complex(raw_m),
        decay_rate=decay,
        square_integrable=p.classification == BOUND_STATE,
        m=p.m,
        _field=fld,
        _prefactor=complex(prefactor),
    )
