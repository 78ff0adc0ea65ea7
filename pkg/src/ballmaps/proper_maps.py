"""Polynomial proper maps between balls, their symmetries, and exact boundary jets.

A map spec stores each output component as a list of (multi-index, coefficient)
monomials.  Properness (boundary to boundary) is certified on a deterministic
sphere sample.  Conjugating by the Cayley transforms gives the same map in
Siegel coordinates as a chain of fractional-linear and polynomial stages, and
the chain rule through those stages yields exact values, first and second
derivatives at the distinguished boundary point 0; an independent central
finite-difference pass cross-checks every jet.
"""

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericError
from . import group_models as gm
from . import kobayashi as kb
from .numerics import (
    WIDE_COMPLEX,
    as_wide_complex,
    interior_points,
    one_minus_norm,
    rng_from_seed,
    unit_vectors,
)

MAX_DEGREE = 8
MAX_COEFFICIENT = 10.0
PROPERNESS_TOL = 1e-9
SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class ProperMapSpec:
    """A polynomial map C^m -> C^M given by per-component monomial lists.

    components[j] is a tuple of (exponents, coefficient) pairs where
    exponents is a length-m tuple of nonnegative ints.
    """

    m: int
    M: int
    components: tuple

    def __post_init__(self):
        if self.m < 1 or self.M < self.m:
            raise InputError("need target dimension M >= domain dimension m >= 1")
        if len(self.components) != self.M:
            raise InputError("component count must equal the target dimension")
        normalized = []
        for comp in self.components:
            terms = []
            for exponents, coef in comp:
                exps = tuple(int(e) for e in exponents)
                if len(exps) != self.m or any(e < 0 for e in exps):
                    raise InputError("monomial exponents must be nonnegative, one per variable")
                if sum(exps) > MAX_DEGREE:
                    raise InputError(f"monomial degree exceeds the cap {MAX_DEGREE}")
                c = complex(coef)
                if abs(c) > MAX_COEFFICIENT:
                    raise InputError(f"coefficient magnitude exceeds the cap {MAX_COEFFICIENT}")
                terms.append((exps, c))
            normalized.append(tuple(terms))
        object.__setattr__(self, "components", tuple(normalized))

    def eval(self, z):
        """Evaluate at a single point (m,) or a batch (n, m); dtype is preserved."""
        pts = np.asarray(z)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.m:
            raise InputError(f"point dimension {pts.shape[1]} does not match domain {self.m}")
        dtype = np.dtype(pts.dtype if pts.dtype in (np.complex128, WIDE_COMPLEX)
                         else np.complex128)
        pts = pts.astype(dtype)
        out = np.zeros((pts.shape[0], self.M), dtype=dtype)
        for j, comp in enumerate(self.components):
            for exps, coef in comp:
                term = np.full(pts.shape[0], dtype.type(coef))
                for k, e in enumerate(exps):
                    if e:
                        term = term * pts[:, k] ** e
                out[:, j] += term
        return out[0] if single else out

    def properness_residual(self, count=None, seed=23):
        """max | ||f(v)|| - 1 | over a deterministic boundary sample."""
        count = count or 32 * self.m
        v = unit_vectors(rng_from_seed(seed), count, self.m)
        gap = one_minus_norm(self.eval(v))
        return float(np.max(np.abs(gap.astype(np.float64))))


def validate_properness(spec, tol=PROPERNESS_TOL):
    res = spec.properness_residual()
    if res > tol:
        raise InputError(f"map fails the properness certificate: residual {res:.3g}")
    return res


def catalog(name, m=None, M=None, d=None):
    """Built-in proper maps: linear(m, M), whitney(), power(m, d)."""
    if name == "linear":
        if m is None or M is None:
            raise InputError("linear needs m and M")
        if M < m:
            raise InputError("linear embedding needs M >= m")
        comps = []
        for j in range(m):
            exps = tuple(1 if k == j else 0 for k in range(m))
            comps.append(((exps, 1.0),))
        comps.extend(() for _ in range(M - m))
        spec = ProperMapSpec(m, M, tuple(comps))
    elif name == "whitney":
        spec = ProperMapSpec(2, 3, (
            (((1, 0), 1.0),),
            (((1, 1), 1.0),),
            (((0, 2), 1.0),),
        ))
    elif name == "power":
        if m is None or d is None:
            raise InputError("power needs m and d")
        if d < 1 or d > MAX_DEGREE:
            raise InputError(f"power needs 1 <= d <= {MAX_DEGREE}")
        exps = sorted(
            (e for e in itertools.product(range(d + 1), repeat=m) if sum(e) == d),
            reverse=True,
        )
        comps = tuple(
            ((e, math.sqrt(math.factorial(d) / math.prod(math.factorial(k) for k in e))),)
            for e in exps
        )
        spec = ProperMapSpec(m, len(exps), comps)
    else:
        raise InputError(f"unknown catalog map {name!r}")
    validate_properness(spec)
    return spec


def standard_catalog():
    """The fixture set used across the verification suites."""
    return [
        ("linear(2,4)", catalog("linear", m=2, M=4)),
        ("whitney()", catalog("whitney")),
        ("power(2,2)", catalog("power", m=2, d=2)),
    ]


# --- maps dressed with automorphisms ----------------------------------------

@dataclass(frozen=True)
class TransformedMap:
    """post o core o pre, with `pre`/`post` ball automorphisms.

    This is the closure of the polynomial catalog under the normalizations
    and recenterings the rescaling pipeline performs.
    """

    pre: gm.Automorphism
    core: ProperMapSpec
    post: gm.Automorphism

    def __post_init__(self):
        if self.pre.dim != self.core.m or self.post.dim != self.core.M:
            raise InputError("automorphism dimensions must match the map")

    @property
    def m(self):
        return self.core.m

    @property
    def M(self):
        return self.core.M

    @classmethod
    def from_spec(cls, spec):
        return cls(gm.Automorphism.identity(spec.m), spec, gm.Automorphism.identity(spec.M))

    def eval(self, z):
        inner = gm._mobius_apply(self.pre.matrix, z)
        return gm._mobius_apply(self.post.matrix, self.core.eval(inner))

    def with_precomposition(self, g):
        """The map self o g."""
        return TransformedMap(gm.compose(self.pre, g), self.core, self.post)

    def with_postcomposition(self, h):
        """The map h o self."""
        return TransformedMap(self.pre, self.core, gm.compose(h, self.post))


def as_transformed(f):
    if isinstance(f, TransformedMap):
        return f
    return TransformedMap.from_spec(f)


def map_eval(f, z):
    return f.eval(z)


# --- boundary Lipschitz constant and the additive constant -------------------

@dataclass(frozen=True)
class LipschitzConstant:
    """Grid estimate of inf{C : 1 - ||f(z)|| <= C (1 - ||z||)}."""

    C: float
    grid_size: int


def lipschitz_boundary_constant(f, grid_density=64, *, radii_count=24, seed=11):
    """Maximize (1 - ||f(z)||) / (1 - ||z||) over a deterministic near-boundary grid.

    Radii are log-spaced in [0.9, 1 - 1e-8]; directions are grid_density
    pseudo-random unit vectors plus a few distinguished ones.  Overestimates
    are safe for every downstream use (they only enlarge beta).
    """
    f = as_transformed(f)
    m = f.m
    dirs = [np.eye(m, dtype=complex)[0]]
    if m > 1:
        dirs.append(np.eye(m, dtype=complex)[m - 1])
        dirs.append(np.ones(m, dtype=complex) / math.sqrt(m))
    dirs.append(unit_vectors(rng_from_seed(seed), grid_density, m))
    directions = np.concatenate([np.atleast_2d(d) for d in dirs], axis=0)
    radii = 1.0 - np.logspace(-1, -8, radii_count)
    best = 0.0
    for r in radii:
        pts = r * directions
        num = one_minus_norm(f.eval(pts))
        den = one_minus_norm(pts)
        best = max(best, float(np.max((num / den).astype(np.float64))))
    return LipschitzConstant(best, directions.shape[0] * radii_count)


def beta_constant(f, C):
    """The additive quasi-geodesic constant: 0.5 log(2C) + dist(0, f(0)).

    C must dominate the grid estimate of the boundary Lipschitz constant.
    """
    f = as_transformed(f)
    estimate = lipschitz_boundary_constant(f).C
    if C < estimate * (1.0 - 1e-9):
        raise InputError(
            f"C = {C:.6g} is below the boundary Lipschitz estimate {estimate:.6g}")
    f0 = f.eval(np.zeros(f.m, dtype=complex))
    return 0.5 * math.log(2.0 * C) + kb.dist_ball(np.zeros(f.M), f0)


# --- symmetry pairs ----------------------------------------------------------

@dataclass(frozen=True)
class SymmetryPair:
    """A candidate pair (phi, psi) with its commutation residual on a sample."""

    phi: gm.Automorphism
    psi: gm.Automorphism
    residual: float

    @property
    def certified(self):
        return self.residual <= SYMMETRY_TOL


def verify_symmetry_pair(f, phi, psi, sample_count=128, seed=3):
    """Residual of psi(f(z)) - f(phi(z)) over deterministic interior samples."""
    f = as_transformed(f)
    if phi.dim != f.m or psi.dim != f.M:
        raise InputError("symmetry pair dimensions must match the map")
    pts = interior_points(rng_from_seed(seed), sample_count, f.m, max_norm=0.95)
    lhs = gm._mobius_apply(psi.matrix, f.eval(pts))
    rhs = f.eval(gm._mobius_apply(phi.matrix, pts))
    residual = float(np.max(np.linalg.norm((lhs - rhs).astype(np.complex128), axis=1)))
    return SymmetryPair(phi, psi, residual)


def block_extend(phi, M):
    """Extend a dim-m automorphism to dim M, acting trivially on new coordinates.

    Together with the linear embedding f(z) = (z, 0) this satisfies
    psi o f = f o phi exactly.
    """
    m = phi.dim
    if M < m:
        raise InputError("block_extend needs M >= m")
    src = phi.matrix
    out = np.eye(M + 1, dtype=src.dtype)
    out[:m, :m] = src[:m, :m]
    out[:m, -1] = src[:m, -1]
    out[-1, :m] = src[-1, :m]
    out[-1, -1] = src[-1, -1]
    return gm.Automorphism(out)


# --- Siegel-coordinate conjugates with exact 2-jets --------------------------

class _MoebiusStage:
    """One fractional-linear factor with closed-form first and second derivatives."""

    def __init__(self, matrix, name="moebius"):
        self.matrix = as_wide_complex(matrix)
        self.name = name
        self.dim_in = self.matrix.shape[1] - 1
        self.dim_out = self.matrix.shape[0] - 1

    def value(self, pts):
        return gm._mobius_apply(self.matrix, pts)

    def jet(self, z):
        a = self.matrix[:-1, :-1]
        b = self.matrix[:-1, -1]
        c = self.matrix[-1, :-1]
        d = self.matrix[-1, -1]
        num = a @ z + b
        den = (c * z).sum() + d
        if abs(complex(den)) <= 1e-13 * max(1.0, float(np.max(np.abs(self.matrix[-1])))):
            raise NumericError(f"{self.name} stage undefined: denominator vanishes")
        val = num / den
        jac = a / den - np.outer(num, c) / den**2
        hess = (
            -(a[:, :, None] * c[None, None, :] + a[:, None, :] * c[None, :, None]) / den**2
            + 2.0 * num[:, None, None] * c[None, :, None] * c[None, None, :] / den**3
        )
        return val, jac, hess


class _PolyStage:
    """A polynomial factor; derivatives by direct monomial differentiation."""

    def __init__(self, spec):
        self.spec = spec
        self.dim_in = spec.m
        self.dim_out = spec.M

    def value(self, pts):
        return self.spec.eval(pts)

    @staticmethod
    def _monomial(z, exps):
        out = WIDE_COMPLEX(1.0)
        for k, e in enumerate(exps):
            if e:
                out = out * z[k] ** e
        return out

    def jet(self, z):
        m, M = self.dim_in, self.dim_out
        val = np.zeros(M, dtype=WIDE_COMPLEX)
        jac = np.zeros((M, m), dtype=WIDE_COMPLEX)
        hess = np.zeros((M, m, m), dtype=WIDE_COMPLEX)
        for j, comp in enumerate(self.spec.components):
            for exps, coef in comp:
                cw = WIDE_COMPLEX(coef)
                val[j] += cw * self._monomial(z, exps)
                for k, ek in enumerate(exps):
                    if ek == 0:
                        continue
                    lowered = list(exps)
                    lowered[k] -= 1
                    jac[j, k] += cw * ek * self._monomial(z, lowered)
                    if ek >= 2:
                        lowered2 = list(lowered)
                        lowered2[k] -= 1
                        hess[j, k, k] += cw * ek * (ek - 1) * self._monomial(z, lowered2)
                    for l, el in enumerate(exps):
                        if l == k or el == 0:
                            continue
                        mixed = list(lowered)
                        mixed[l] -= 1
                        hess[j, k, l] += cw * ek * el * self._monomial(z, mixed)
        return val, jac, hess


class SiegelMap:
    """A map between Siegel domains as a chain of explicit stages.

    Evaluation and exact 2-jets fold through the chain: for u = s o r,
    J_u = J_s J_r and H_u = H_s[J_r, J_r] + J_s H_r.
    """

    def __init__(self, stages, m, M):
        self.stages = tuple(stages)
        self.m = m
        self.M = M

    @classmethod
    def from_polynomial(cls, spec):
        return cls([_PolyStage(spec)], spec.m, spec.M)

    def eval(self, w):
        pts = np.asarray(w)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts).astype(WIDE_COMPLEX)
        for stage in self.stages:
            pts = stage.value(pts)
        out = pts.astype(np.complex128)
        return out[0] if single else out

    def _jet_wide(self, w0):
        z = as_wide_complex(np.asarray(w0)).reshape(-1)
        if z.shape[0] != self.m:
            raise InputError(f"jet point has dimension {z.shape[0]}, expected {self.m}")
        jac = np.eye(self.m, dtype=WIDE_COMPLEX)
        hess = np.zeros((self.m, self.m, self.m), dtype=WIDE_COMPLEX)
        val = z
        for stage in self.stages:
            sval, sjac, shess = stage.jet(val)
            hess = (
                np.einsum("jpq,pk,ql->jkl", shess, jac, jac)
                + np.einsum("jp,pkl->jkl", sjac, hess)
            )
            jac = sjac @ jac
            val = sval
        return val, jac, hess

    def jet_at(self, w0):
        val, jac, hess = self._jet_wide(w0)
        return (val.astype(np.complex128), jac.astype(np.complex128),
                hess.astype(np.complex128))


def siegel_conjugate(f):
    """The map in Siegel coordinates on both sides, with exact jets.

    Chain: inverse Cayley (domain), pre automorphism, polynomial core,
    post automorphism, Cayley (target).
    """
    f = as_transformed(f)
    stages = [
        _MoebiusStage(gm.cayley_inverse_matrix(f.m), name="cayley"),
        _MoebiusStage(f.pre.matrix, name="pre"),
        _PolyStage(f.core),
        _MoebiusStage(f.post.matrix, name="post"),
        _MoebiusStage(gm.cayley_matrix(f.M), name="cayley"),
    ]
    return SiegelMap(stages, f.m, f.M)


@dataclass(frozen=True)
class JetExpansion:
    """Value, first and second complex derivatives of a map at a base point.

    `second` holds true second partials, symmetric in its last two slots.
    `error_norm` is the worst finite-difference disagreement, measured
    relative to max(1, |coefficient|).
    """

    base: gm.SiegelPoint
    value: np.ndarray
    first: np.ndarray
    second: np.ndarray
    error_norm: float = field(default=0.0, compare=False)

    def __post_init__(self):
        value = np.asarray(self.value, dtype=np.complex128).reshape(-1)
        first = np.asarray(self.first, dtype=np.complex128)
        second = np.asarray(self.second, dtype=np.complex128)
        M = value.shape[0]
        if first.shape[0] != M or second.shape[0] != M or second.shape[1:] != (first.shape[1],) * 2:
            raise InputError("jet arrays have inconsistent shapes")
        second = 0.5 * (second + second.transpose(0, 2, 1))
        for arr in (value, first, second):
            arr.setflags(write=False)
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "first", first)
        object.__setattr__(self, "second", second)

    @property
    def M(self):
        return self.value.shape[0]

    @property
    def m(self):
        return self.first.shape[1]


def _fd_jet(g, step):
    """Central finite-difference value/first/second at 0 (independent oracle)."""
    m = g.m
    h = step
    e = np.eye(m)
    f0 = g.eval(np.zeros(m, dtype=complex))
    first = np.zeros((g.M, m), dtype=complex)
    second = np.zeros((g.M, m, m), dtype=complex)
    plus = [g.eval(h * e[k]) for k in range(m)]
    minus = [g.eval(-h * e[k]) for k in range(m)]
    for k in range(m):
        first[:, k] = (plus[k] - minus[k]) / (2 * h)
        second[:, k, k] = (plus[k] - 2 * f0 + minus[k]) / h**2
    for k in range(m):
        for l in range(k + 1, m):
            pp = g.eval(h * e[k] + h * e[l])
            pm = g.eval(h * e[k] - h * e[l])
            mp = g.eval(-h * e[k] + h * e[l])
            mm = g.eval(-h * e[k] - h * e[l])
            mixed = (pp - pm - mp + mm) / (4 * h**2)
            second[:, k, l] = mixed
            second[:, l, k] = mixed
    return f0, first, second


def jet_at_zero(g, *, fd_step=1e-4, fd_tol=1e-4):
    """Exact chain-rule jet at 0, cross-checked against finite differences.

    Raises NumericError when the two routes disagree beyond fd_tol; the
    observed disagreement is recorded as error_norm either way.  Callers
    composing ill-conditioned chains (factors with entries of size e^t whose
    roundoff the finite differences divide by step^2) must widen fd_tol
    accordingly; the finite-difference oracle, not the chain rule, is the
    side that degrades.
    """
    value, first, second = g.jet_at(np.zeros(g.m, dtype=complex))
    fd_value, fd_first, fd_second = _fd_jet(g, fd_step)
    err = 0.0
    for exact, fd in ((first, fd_first), (second, fd_second)):
        denom = np.maximum(1.0, np.abs(exact))
        err = max(err, float(np.max(np.abs(fd - exact) / denom)))
    if err > fd_tol:
        raise NumericError(
            f"chain-rule jet disagrees with finite differences: {err:.3g}")
    base = gm.SiegelPoint(np.zeros(g.m, dtype=complex))
    return JetExpansion(base, value, first, second, error_norm=err)


def jet_quadratic_eval(jet, pts):
    """Evaluate the quadratic polynomial defined by a jet (batch, n x m)."""
    z = np.atleast_2d(np.asarray(pts, dtype=np.complex128))
    out = (jet.value[None, :] + z @ jet.first.T
           + 0.5 * np.einsum("jkl,nk,nl->nj", jet.second, z, z))
    return out


# --- map-spec files ----------------------------------------------------------

def map_spec_to_dict(spec):
    return {
        "domain_dim": spec.m,
        "target_dim": spec.M,
        "components": [
            [{"exponents": list(exps), "coef": [coef.real, coef.imag]}
             for exps, coef in comp]
            for comp in spec.components
        ],
    }


def map_spec_from_dict(doc):
    try:
        comps = tuple(
            tuple((tuple(term["exponents"]), complex(term["coef"][0], term["coef"][1]))
                  for term in comp)
            for comp in doc["components"]
        )
        spec = ProperMapSpec(int(doc["domain_dim"]), int(doc["target_dim"]), comps)
    except (KeyError, TypeError, IndexError) as exc:
        raise InputError(f"malformed map spec document: {exc}") from exc
    validate_properness(spec)
    return spec


def save_map_spec(spec, path):
    with open(path, "w") as fh:
        json.dump(map_spec_to_dict(spec), fh, indent=1)
        fh.write("\n")


def load_map_spec(path):
    with open(path) as fh:
        return map_spec_from_dict(json.load(fh))
