"""Optimal Bayesian estimation of an observable from a weak-measurement record.

Two independent routes compute the same estimate g:

* an integral-free coefficient recursion carried out in configurable-
  precision arithmetic (gmpy2/MPFR), updated in O(n) per measurement, and
* a periodic-trapezoid quadrature over the unknown rotation angle, exact
  for the trigonometric-polynomial integrands that occur here.

The recursion is the production path; the quadrature is its oracle.  The
recursion's weighted sums cancel more and more digits as the record grows
(roughly one bit per measurement for weak diagonal records), which is why
the coefficient table runs at extended precision while everything else in
the package stays in machine doubles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .exceptions import DegenerateOperator, DegenerateRecord, PrecisionExhausted
from .qcore import KrausOperator, MeasurementModel, Outcome, RotationAngle, kraus_of, make_unitary

#: Default significand bits for the coefficient recursion.
DEFAULT_PRECISION_BITS = 256

#: Bits of headroom the recursion must keep above the measured cancellation.
PRECISION_MARGIN_BITS = 48

#: tr[M^dag M] at or below this counts as a null operator.
DEGENERATE_FLOOR = 1e-18

_SWAP = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


@dataclass(frozen=True)
class Observable:
    """A 2x2 hermitian observable; defaults to the projector |1><1|."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"observable must be 2x2, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(m))):
            raise ValueError("observable is not hermitian")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def excited_projector(cls) -> "Observable":
        return cls(np.diag([0.0, 1.0]).astype(complex))

    @classmethod
    def ground_projector(cls) -> "Observable":
        return cls(np.diag([1.0, 0.0]).astype(complex))

    def is_diagonal(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.matrix))))
        return abs(self.matrix[0, 1]) <= tol * scale

    def diagonal(self) -> tuple[float, float]:
        return float(self.matrix[0, 0].real), float(self.matrix[1, 1].real)


class MeasurementRecord(Sequence):
    """Ordered Kraus operators of the completed measurements."""

    def __init__(self, operators: Iterable[KrausOperator]):
        self._ops = tuple(operators)

    @classmethod
    def from_outcomes(cls, model: MeasurementModel, outcomes: Iterable[Outcome]) -> "MeasurementRecord":
        return cls(kraus_of(model, m) for m in outcomes)

    def __len__(self) -> int:
        return len(self._ops)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return MeasurementRecord(self._ops[i])
        return self._ops[i]

    def __iter__(self) -> Iterator[KrausOperator]:
        return iter(self._ops)

    def appended(self, op: KrausOperator) -> "MeasurementRecord":
        return MeasurementRecord(self._ops + (op,))

    def level_swapped(self) -> "MeasurementRecord":
        return MeasurementRecord(op.level_swapped() for op in self._ops)


def estimate_single(M: KrausOperator, A: Observable | None = None) -> float:
    """Best single-shot estimate tr[M^dag A M] / tr[M^dag M]."""
    if A is None:
        A = Observable.excited_projector()
    m = M.matrix if isinstance(M, KrausOperator) else np.asarray(M, dtype=complex)
    den = float(np.trace(m.conj().T @ m).real)
    if den <= DEGENERATE_FLOOR:
        raise DegenerateOperator(f"tr[M^dag M] = {den:g} is below the floor")
    num = float(np.trace(m.conj().T @ A.matrix @ m).real)
    return num / den


def kraus_product(record: MeasurementRecord, phi: RotationAngle | float) -> KrausOperator:
    """The ordered product N_n U ... N_1 U at a fixed rotation angle."""
    if len(record) == 0:
        raise ValueError("kraus_product requires a nonempty record")
    u = make_unitary(phi)
    m = np.eye(2, dtype=complex)
    for op in record:
        m = op.matrix @ (u @ m)
    return KrausOperator(m)


def random_kraus_operator(rng: np.random.Generator, diagonal: bool = False) -> KrausOperator:
    """A random operator with effect eigenvalues scaled into (0, 1]."""
    if diagonal:
        return KrausOperator(np.diag(np.sqrt(rng.uniform(0.05, 1.0, size=2))).astype(complex))
    m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    top = math.sqrt(np.linalg.eigvalsh(m.conj().T @ m)[-1])
    return KrausOperator(m / top)


class _GammaHalfCache:
    """Gamma(k + 1/2) by upward recurrence from Gamma(1/2) = sqrt(pi)."""

    def __init__(self, precision_bits: int):
        self.ctx = gmpy2.context(precision=precision_bits)
        with self.ctx:
            self._values = [gmpy2.sqrt(gmpy2.const_pi())]

    def __getitem__(self, k: int) -> mpfr:
        # context methods, not `with`: callers may already hold self.ctx and
        # gmpy2 contexts do not nest
        values = self._values
        while len(values) <= k:
            values.append(self.ctx.mul(values[-1], mpfr(len(values) - 0.5, 53)))
        return values[k]


class BWeights:
    """Cache of the quadrature weights b_kl = 2 Gamma(k+1/2) Gamma(l+1/2) / (k+l)!.

    b_kl is the full-period integral of cos^2k(phi/2) sin^2l(phi/2); the
    factorial is accumulated incrementally so no entry overflows on the way.
    """

    def __init__(self, precision_bits: int = DEFAULT_PRECISION_BITS):
        self.precision_bits = precision_bits
        self._gamma = _GammaHalfCache(precision_bits)
        self._inv_factorial = [mpfr(1)]
        self._cache: dict[tuple[int, int], mpfr] = {}

    def gamma_half(self, k: int) -> mpfr:
        if k < 0:
            raise ValueError("k must be >= 0")
        return self._gamma[k]

    def b(self, k: int, l: int) -> mpfr:
        if k < 0 or l < 0:
            raise ValueError("indices must be >= 0")
        if k > l:
            k, l = l, k
        key = (k, l)
        got = self._cache.get(key)
        if got is not None:
            return got
        with self._gamma.ctx:
            while len(self._inv_factorial) <= k + l:
                self._inv_factorial.append(self._inv_factorial[-1] / len(self._inv_factorial))
            val = 2 * self._gamma[k] * self._gamma[l] * self._inv_factorial[k + l]
        self._cache[key] = val
        return val


_b_weight_caches: dict[int, BWeights] = {}


def b_weight(k: int, l: int, precision_bits: int = DEFAULT_PRECISION_BITS) -> mpfr:
    """The weight b_kl as a high-precision real (cached per precision)."""
    cache = _b_weight_caches.get(precision_bits)
    if cache is None:
        cache = _b_weight_caches[precision_bits] = BWeights(precision_bits)
    return cache.b(k, l)


class CoefficientTable:
    """State of the integral-free recursion after n measurements.

    Entries a_{jlk} are the coefficients of cos^k(phi/2) sin^(2n-2-k)(phi/2)
    in the matrix elements of M M^dag; k runs over [0, 2n-2].  The table is
    hermitian in (j, l) at every step.  Two storage layouts are used:

    * while every operator seen so far is diagonal with real entries, only
      the real diagonals and the imaginary part of a_{01k} are kept (the
      real part of a_{01k} is identically zero in that case), and
    * a general layout with one 2x2 complex matrix per k otherwise.

    After each update all entries are divided by a power of two so the
    largest magnitude is O(1); the exponent accumulates in ``log_scale``.
    Power-of-two rescaling is exact, and the estimate is a ratio, so the
    bookkeeping never changes g.
    """

    def __init__(self, precision_bits: int = DEFAULT_PRECISION_BITS):
        if precision_bits < 64:
            raise ValueError("precision_bits must be >= 64")
        self.precision_bits = precision_bits
        self.ctx = gmpy2.context(precision=precision_bits)
        self.n = 0
        self.log_scale = 0
        self.hermitian_defect = 0.0
        self._gamma = _GammaHalfCache(precision_bits)
        # reduced quadrature weights W[k] = Gamma(k+1/2) Gamma(n-1/2-k);
        # the common factor 2/(n-1)! of b_{k,n-1-k} cancels in the estimate.
        self._weights: list[mpfr] = []
        self._diag = True
        self._d00: list[mpfr] = []
        self._d11: list[mpfr] = []
        self._s01: list[mpfr] = []
        self._gen: list[np.ndarray] = []

    # -- internal helpers -------------------------------------------------

    def _clone_shell(self) -> "CoefficientTable":
        new = CoefficientTable.__new__(CoefficientTable)
        new.precision_bits = self.precision_bits
        new.ctx = self.ctx
        new.log_scale = self.log_scale
        new.hermitian_defect = self.hermitian_defect
        new._gamma = self._gamma
        return new

    def _generalized(self) -> list[np.ndarray]:
        # caller must already hold self.ctx (gmpy2 contexts do not nest)
        if not self._diag:
            return self._gen
        out = []
        for d00, d11, s in zip(self._d00, self._d11, self._s01):
            m = np.empty((2, 2), dtype=object)
            m[0, 0] = mpc(d00)
            m[1, 1] = mpc(d11)
            m[0, 1] = mpc(0, s)
            m[1, 0] = mpc(0, -s)
            out.append(m)
        return out

    def entry(self, j: int, l: int, k: int) -> complex:
        """a_{jlk} as a machine complex (tests and diagnostics only)."""
        if not 0 <= k <= max(0, 2 * self.n - 2) or self.n == 0:
            return 0j
        if self._diag:
            if j == l:
                return complex(float(self._d00[k] if j == 0 else self._d11[k]), 0.0)
            sign = 1.0 if (j, l) == (0, 1) else -1.0
            return complex(0.0, sign * float(self._s01[k]))
        return complex(self._gen[k][j, l])

    def max_abs(self) -> float:
        if self.n == 0:
            return 0.0
        if self._diag:
            return float(
                max(
                    max(abs(x) for x in self._d00),
                    max(abs(x) for x in self._d11),
                    max(abs(x) for x in self._s01),
                )
            )
        return max(max(abs(m[j, l]) for m in self._gen) for j in (0, 1) for l in (0, 1))

    def scaled_by_2exp(self, e: int) -> "CoefficientTable":
        """Exactly multiply every entry by 2**e (log_scale is not touched)."""
        new = self._clone_shell()
        new.n = self.n
        new._weights = self._weights
        new._diag = self._diag
        mul2 = gmpy2.mul_2exp
        if e >= 0:
            scale = lambda x: mul2(x, e)  # noqa: E731
        else:
            scale = lambda x: gmpy2.div_2exp(x, -e)  # noqa: E731
        with self.ctx:
            new._d00 = [scale(x) for x in self._d00]
            new._d11 = [scale(x) for x in self._d11]
            new._s01 = [scale(x) for x in self._s01]
            new._gen = [m * mpfr(2) ** e for m in self._gen] if not self._diag else []
        return new

    def scaled(self, factor: float) -> "CoefficientTable":
        """Multiply every entry by a positive constant (rounded)."""
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        new = self._clone_shell()
        new.n = self.n
        new._weights = self._weights
        new._diag = self._diag
        with self.ctx:
            c = mpfr(factor)
            new._d00 = [x * c for x in self._d00]
            new._d11 = [x * c for x in self._d11]
            new._s01 = [x * c for x in self._s01]
            new._gen = [m * c for m in self._gen] if not self._diag else []
        return new


def _advance_weights(weights: list[mpfr], gamma: _GammaHalfCache, n: int) -> list[mpfr]:
    """From W_{n-1}[k] = G(k) G(n-2-k) to W_n[k] = G(k) G(n-1-k)."""
    out = [w * (n - 1.5 - k) for k, w in enumerate(weights)]
    out.append(gamma[n - 1] * gamma[0])
    return out


def _update_diagonal(table: CoefficientTable, n0: float, n1: float) -> CoefficientTable:
    """Fast path for a real diagonal operator diag(n0, n1)."""
    new = table._clone_shell()
    new._diag = True
    new._gen = []
    n = table.n + 1
    new.n = n
    with table.ctx:
        zero = mpfr(0)
        p0 = mpfr(n0) * mpfr(n0)  # exact: both factors carry <= 53 bits
        p1 = mpfr(n1) * mpfr(n1)
        if n == 1:
            new._d00 = [p0]
            new._d11 = [p1]
            new._s01 = [zero]
            new._weights = [table._gamma[0] * table._gamma[0]]
            return new
        q = gmpy2.sqrt(p0 * p1)
        d00, d11, s01 = table._d00, table._d11, table._s01
        ts = [x + x for x in s01]
        z2 = (zero, zero)
        d00_k2 = (*z2, *d00)
        d11_k2 = (*z2, *d11)
        s_k2 = (*z2, *s01)
        ts_k1 = (zero, *ts, zero)
        d00_k1 = (zero, *d00, zero)
        d11_k1 = (zero, *d11, zero)
        d00_k0 = (*d00, *z2)
        d11_k0 = (*d11, *z2)
        s_k0 = (*s01, *z2)
        new._d00 = [p0 * (x + t + z) for x, t, z in zip(d00_k2, ts_k1, d11_k0)]
        new._d11 = [p1 * (x - t + z) for x, t, z in zip(d11_k2, ts_k1, d00_k0)]
        new._s01 = [q * (x + b - a - z) for x, b, a, z in zip(s_k2, d11_k1, d00_k1, s_k0)]
        new._weights = _advance_weights(table._weights, table._gamma, n)
        if n % 16 == 0:
            _rescale_diag(new)
    return new


#: Exponent drift (bits) tolerated before entries are renormalized.  MPFR
#: exponents cannot overflow anywhere near this cadence; deferring the sweep
#: just avoids touching every entry on every update.
RESCALE_THRESHOLD_BITS = 64


def _rescale_diag(table: CoefficientTable) -> None:
    mx = max(
        max(table._d00, key=abs),
        max(table._d11, key=abs),
        max(table._s01, key=abs),
        key=abs,
    )
    if not gmpy2.is_finite(mx):
        raise PrecisionExhausted(
            "coefficient table overflowed; raise precision_bits or shorten the record"
        )
    if mx == 0:
        return
    e = gmpy2.get_exp(mx)
    if abs(e) < RESCALE_THRESHOLD_BITS:
        return
    div2 = gmpy2.div_2exp if e > 0 else gmpy2.mul_2exp
    a = abs(e)
    table._d00 = [div2(x, a) for x in table._d00]
    table._d11 = [div2(x, a) for x in table._d11]
    table._s01 = [div2(x, a) for x in table._s01]
    table.log_scale += e


def _update_general(table: CoefficientTable, N: np.ndarray) -> CoefficientTable:
    """Literal three-term windowed recursion for an arbitrary operator."""
    new = table._clone_shell()
    new._diag = False
    new._d00 = new._d11 = new._s01 = []
    n = table.n + 1
    new.n = n
    with table.ctx:
        nm = np.empty((2, 2), dtype=object)
        for j in range(2):
            for l in range(2):
                nm[j, l] = mpc(complex(N[j, l]))  # exact conversion from doubles
        nd = nm.conj().T
        if n == 1:
            base = nm @ nd
            new._gen = [base]
            new._weights = [table._gamma[0] * table._gamma[0]]
            new.hermitian_defect = 0.0
            return new
        old = table._generalized()
        kmax = 2 * n - 2
        zero_m = np.full((2, 2), mpc(0), dtype=object)

        def get(k):
            return old[k] if 0 <= k < len(old) else zero_m

        out = []
        for k in range(kmax + 1):
            x2, x1, x0 = get(k - 2), get(k - 1), get(k)
            y = x2 + 1j * (x1[::-1, :] - x1[:, ::-1]) + x0[::-1, ::-1]
            out.append(nm @ y @ nd)
        new._gen = out
        new._weights = _advance_weights(table._weights, table._gamma, n)
        # hermitian symmetry a_{jlk} = conj(a_{ljk}) should hold to rounding
        mx = mpfr(0)
        defect = mpfr(0)
        for m in out:
            defect = max(
                defect,
                abs(m[0, 1] - m[1, 0].conjugate()),
                abs(m[0, 0] - m[0, 0].conjugate()),
                abs(m[1, 1] - m[1, 1].conjugate()),
            )
            mx = max(mx, abs(m[0, 0]), abs(m[0, 1]), abs(m[1, 0]), abs(m[1, 1]))
        new.hermitian_defect = float(defect / mx) if mx > 0 else 0.0
        if not gmpy2.is_finite(mx):
            raise PrecisionExhausted(
                "coefficient table overflowed; raise precision_bits or shorten the record"
            )
        if mx > 0:
            e = gmpy2.get_exp(mx)
            if e != 0:
                c = mpfr(2) ** (-e)
                new._gen = [m * c for m in new._gen]
                new.log_scale += e
    return new


def table_update(table: CoefficientTable, N: KrausOperator) -> CoefficientTable:
    """Advance the recursion by one measurement with operator N.

    Returns a fresh table; the input is not mutated.  Costs O(n) for the
    diagonal fast path and O(n) 2x2 matrix products in general.
    """
    m = N.matrix if isinstance(N, KrausOperator) else np.asarray(N, dtype=complex)
    if table._diag and (
        m[0, 1] == 0 and m[1, 0] == 0 and m[0, 0].imag == 0 and m[1, 1].imag == 0
    ):
        return _update_diagonal(table, float(m[0, 0].real), float(m[1, 1].real))
    return _update_general(table, m)


def estimate_from_table(table: CoefficientTable, A: Observable | None = None) -> float:
    """The Bayesian estimate g from the coefficient table.

    For the default projector this is F11/(F00 + F11) with
    F_jj = sum_k a_{jj,2k} b_{k,n-1-k}; a diagonal observable
    a0|0><0| + a1|1><1| generalizes to (a0 F00 + a1 F11)/(F00 + F11).
    At n = 0 the raw formula is 0/0 and the prior mean tr A / 2 is
    returned instead.
    """
    if A is None:
        A = Observable.excited_projector()
    if not A.is_diagonal():
        raise ValueError("estimate_from_table requires a diagonal observable")
    a0, a1 = A.diagonal()
    if table.n == 0:
        return (a0 + a1) / 2.0
    with table.ctx:
        w = table._weights
        if table._diag:
            d00 = table._d00[0::2]
            d11 = table._d11[0::2]
        else:
            d00 = [m[0, 0].real for m in table._gen[0::2]]
            d11 = [m[1, 1].real for m in table._gen[0::2]]
        terms0 = [x * wk for x, wk in zip(d00, w)]
        terms1 = [y * wk for y, wk in zip(d11, w)]
        f00 = sum(terms0, mpfr(0))
        f11 = sum(terms1, mpfr(0))
        peak = max(abs(max(terms0, key=abs)), abs(max(terms1, key=abs)))
        den = f00 + f11
        if peak == 0:
            raise DegenerateRecord("all weighted coefficients vanish")
        if den <= 0:
            raise PrecisionExhausted(
                "normalization sum cancelled to a non-positive value; "
                f"raise precision_bits above {table.precision_bits}"
            )
        bits_lost = float(gmpy2.log2(peak / den))
        if bits_lost > table.precision_bits - PRECISION_MARGIN_BITS:
            raise PrecisionExhausted(
                f"cancellation consumed {bits_lost:.0f} of {table.precision_bits} bits; "
                f"rerun with precision_bits >= {int(bits_lost) + 256}"
            )
        g = (a0 * f00 + a1 * f11) / den
    return float(g)


def estimate_oracle(
    record: MeasurementRecord,
    A: Observable | None = None,
    nodes: int | None = None,
    phi_range: tuple[float, float] | None = None,
) -> float:
    """Quadrature route for g: trapezoid average of the trace ratio over phi.

    Both integrands are trigonometric polynomials of degree <= n in phi, so
    on the full period the equally-spaced trapezoid rule with at least n+2
    nodes is exact up to rounding (default 2n+4).  ``phi_range`` restricts
    the integration to a sub-interval of [0, 2*pi); that variant is an
    ordinary composite-trapezoid approximation, provided as a hook for
    priors that exclude part of the angle range.
    """
    if A is None:
        A = Observable.excited_projector()
    n = len(record)
    if n == 0:
        return float(np.trace(A.matrix).real) / 2.0
    if nodes is None:
        nodes = 2 * n + 4
    if nodes < n + 2:
        raise ValueError(f"need at least n+2 = {n + 2} nodes for exactness, got {nodes}")
    if phi_range is None:
        phis = 2.0 * math.pi * np.arange(nodes) / nodes
        weights = np.ones(nodes)
    else:
        lo, hi = phi_range
        if not 0.0 <= lo < hi <= 2.0 * math.pi + 1e-12:
            raise ValueError(f"phi_range must satisfy 0 <= lo < hi <= 2*pi, got {phi_range}")
        phis = np.linspace(lo, hi, nodes)
        weights = np.ones(nodes)
        weights[0] = weights[-1] = 0.5
    half = phis / 2.0
    u = np.empty((nodes, 2, 2), dtype=complex)
    u[:, 0, 0] = u[:, 1, 1] = np.cos(half)
    u[:, 0, 1] = u[:, 1, 0] = -1j * np.sin(half)
    m = np.broadcast_to(np.eye(2, dtype=complex), (nodes, 2, 2)).copy()
    for op in record:
        m = op.matrix @ (u @ m)
        peak = np.abs(m).max()  # common rescale keeps the ratio while avoiding underflow
        if peak == 0.0:
            raise DegenerateRecord("Kraus product vanished at every node")
        m /= peak
    num = float(np.einsum("xai,ab,xbi,x->", m.conj(), A.matrix, m, weights).real)
    den = float(np.einsum("xai,xai,x->", m.conj(), m, weights).real)
    if den <= DEGENERATE_FLOOR:
        raise DegenerateRecord(f"normalization integral {den:g} is below the floor")
    return num / den
