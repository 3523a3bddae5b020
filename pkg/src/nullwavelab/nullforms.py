"""Constant-coefficient bilinear and trilinear null forms and their algebra.

A k-linear constant form is *null* when it vanishes whenever all slots carry
the same Minkowski-null vector.  Bilinear forms admit an exact algebraic test
(symmetric part proportional to the metric); trilinear forms are tested by
deterministic sampling over a low-discrepancy set of null directions.

Index conventions: signature (-,+,+,+), coordinates ordered (t, x, y, z).
Form evaluation contracts raised gradients, F(d eta, d^2 zeta) =
F_abc d^a eta d^b d^c zeta, with indices raised by the metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

MINKOWSKI = np.diag([-1.0, 1.0, 1.0, 1.0])
SIGNS = np.array([-1.0, 1.0, 1.0, 1.0])

NULL_TOL = 1e-12
_N_NULL_SAMPLES = 256

AXES = ("t", "x", "y", "z")


class NullFormConsistencyError(RuntimeError):
    """A commutation produced a correction that fails the null test."""


def _as_matrix(coeffs) -> np.ndarray:
    a = np.asarray(coeffs, dtype=float)
    if a.shape != (4, 4):
        raise ValueError(f"bilinear coefficients must be 4x4, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("bilinear coefficients must be finite")
    return a


def _as_tensor(coeffs) -> np.ndarray:
    a = np.asarray(coeffs, dtype=float)
    if a.shape != (4, 4, 4):
        raise ValueError(f"trilinear coefficients must be 4x4x4, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("trilinear coefficients must be finite")
    return a


@dataclass(frozen=True)
class BilinearForm:
    """Constant bilinear form G_ab acting on pairs of gradients."""

    coeffs: np.ndarray
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _as_matrix(self.coeffs))
        self.coeffs.setflags(write=False)

    @cached_property
    def raised(self) -> np.ndarray:
        """G^ab, both indices raised by the metric."""
        return SIGNS[:, None] * SIGNS[None, :] * self.coeffs

    @cached_property
    def is_null(self) -> bool:
        return is_null_form(self)

    @property
    def rank(self) -> int:
        return 2

    def scale(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def __mul__(self, a: float) -> "BilinearForm":
        return BilinearForm(self.coeffs * a)

    __rmul__ = __mul__

    def __neg__(self) -> "BilinearForm":
        return BilinearForm(-self.coeffs)


@dataclass(frozen=True)
class TrilinearForm:
    """Constant trilinear form F_abc, symmetric in the last two indices.

    Symmetry in (b, c) is enforced by symmetrization on construction; the
    contraction against a symmetric Hessian only sees that part.
    """

    coeffs: np.ndarray
    name: str = ""

    def __post_init__(self):
        a = _as_tensor(self.coeffs)
        a = 0.5 * (a + a.swapaxes(1, 2))
        object.__setattr__(self, "coeffs", a)
        self.coeffs.setflags(write=False)

    @cached_property
    def raised(self) -> np.ndarray:
        return (
            SIGNS[:, None, None]
            * SIGNS[None, :, None]
            * SIGNS[None, None, :]
            * self.coeffs
        )

    @cached_property
    def is_null(self) -> bool:
        return is_null_form(self)

    @property
    def rank(self) -> int:
        return 3

    def scale(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def __mul__(self, a: float) -> "TrilinearForm":
        return TrilinearForm(self.coeffs * a)

    __rmul__ = __mul__

    def __neg__(self) -> "TrilinearForm":
        return TrilinearForm(-self.coeffs)


# ---------------------------------------------------------------------------
# Null tests
# ---------------------------------------------------------------------------


def fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic low-discrepancy directions on S^2, shape (n, 3)."""
    k = np.arange(n)
    z = 1.0 - 2.0 * (k + 0.5) / n
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = (2.0 * np.pi * (1.0 + 5.0**0.5) / 2.0) * k
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def null_directions(n: int = _N_NULL_SAMPLES) -> np.ndarray:
    """Future null vectors xi = (1, omega), shape (n, 4)."""
    omega = fibonacci_sphere(n)
    return np.concatenate([np.ones((n, 1)), omega], axis=1)


def sampled_null_residual(form, n: int = _N_NULL_SAMPLES) -> float:
    """max |F(xi,..,xi)| over n deterministic null directions, normalized."""
    xi = null_directions(n)
    if form.rank == 2:
        vals = np.einsum("ab,na,nb->n", form.coeffs, xi, xi)
    else:
        vals = np.einsum("abc,na,nb,nc->n", form.coeffs, xi, xi, xi)
    scale = max(form.scale(), 1e-300)
    return float(np.max(np.abs(vals)) / scale)


def is_null_form(form, tol: float = NULL_TOL) -> bool:
    """True iff the form vanishes on the diagonal over the null cone.

    Bilinear: exact test, symmetric part proportional to the Minkowski
    metric.  Trilinear: deterministic sampling at 256 null directions.
    """
    if form.rank == 2:
        sym = 0.5 * (form.coeffs + form.coeffs.T)
        # unique candidate factor: (1/4) m^{ab} S_ab
        lam = 0.25 * float(np.einsum("ab,ab->", SIGNS[:, None] * SIGNS[None, :] * MINKOWSKI, sym))
        resid = np.max(np.abs(sym - lam * MINKOWSKI))
        return bool(resid <= tol * max(form.scale(), 1.0))
    return sampled_null_residual(form) <= tol


def null_witness(form) -> np.ndarray | None:
    """A null direction at which the form fails to vanish, or None."""
    xi = null_directions(4096)
    if form.rank == 2:
        vals = np.einsum("ab,na,nb->n", form.coeffs, xi, xi)
    else:
        vals = np.einsum("abc,na,nb,nc->n", form.coeffs, xi, xi, xi)
    bad = np.argmax(np.abs(vals))
    if abs(vals[bad]) > NULL_TOL * max(form.scale(), 1.0):
        return xi[bad]
    return None


# ---------------------------------------------------------------------------
# Evaluation on gradient / Hessian stacks
# ---------------------------------------------------------------------------


def eval_bilinear(g: BilinearForm, d_eta: np.ndarray, d_zeta: np.ndarray) -> np.ndarray:
    """Pointwise G_ab d^a eta d^b zeta.

    ``d_eta``/``d_zeta`` stack the four partial derivatives along the leading
    axis, shape (4, ...); both must share trailing shape.
    """
    d_eta = np.asarray(d_eta, dtype=float)
    d_zeta = np.asarray(d_zeta, dtype=float)
    if d_eta.shape != d_zeta.shape or d_eta.shape[0] != 4:
        raise ValueError(
            f"gradient stacks must share shape (4, ...): {d_eta.shape} vs {d_zeta.shape}"
        )
    out = np.zeros(d_eta.shape[1:])
    raised = g.raised
    for a in range(4):
        for b in range(4):
            c = raised[a, b]
            if c != 0.0:
                out += c * d_eta[a] * d_zeta[b]
    return out


def eval_trilinear(f: TrilinearForm, d_eta: np.ndarray, d2_zeta: np.ndarray) -> np.ndarray:
    """Pointwise F_abc d^a eta d^b d^c zeta with a (4, 4, ...) Hessian stack."""
    d_eta = np.asarray(d_eta, dtype=float)
    d2_zeta = np.asarray(d2_zeta, dtype=float)
    if d_eta.shape[0] != 4 or d2_zeta.shape[:2] != (4, 4):
        raise ValueError("expected gradient (4, ...) and Hessian (4, 4, ...) stacks")
    if d_eta.shape[1:] != d2_zeta.shape[2:]:
        raise ValueError(
            f"gradient and Hessian grids differ: {d_eta.shape[1:]} vs {d2_zeta.shape[2:]}"
        )
    out = np.zeros(d_eta.shape[1:])
    raised = f.raised
    for a in range(4):
        for b in range(4):
            for c in range(4):
                w = raised[a, b, c]
                if w != 0.0:
                    out += w * d_eta[a] * d2_zeta[b, c]
    return out


# ---------------------------------------------------------------------------
# Affine vector fields (the commutation catalogue)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineVectorField:
    """V = (A^m_n x^n + b^m) d_m with constant A, b.

    Covers translations, rotations, boosts, scalings, their center-shifted
    variants, and R-weighted rescalings.
    """

    linear: np.ndarray
    const: np.ndarray
    name: str = ""

    def __post_init__(self):
        a = np.asarray(self.linear, dtype=float)
        b = np.asarray(self.const, dtype=float)
        if a.shape != (4, 4) or b.shape != (4,):
            raise ValueError("AffineVectorField needs a 4x4 linear part and 4-vector constant")
        object.__setattr__(self, "linear", a)
        object.__setattr__(self, "const", b)
        self.linear.setflags(write=False)
        self.const.setflags(write=False)

    def components_at(self, points: np.ndarray) -> np.ndarray:
        """V^m at points of shape (..., 4) -> (..., 4)."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.linear.T + self.const

    def scaled(self, factor: float, name: str = "") -> "AffineVectorField":
        return AffineVectorField(self.linear * factor, self.const * factor, name or self.name)

    def apply_to_polynomial(self, grad_fn, points: np.ndarray) -> np.ndarray:
        """(Vf)(points) given an exact gradient callback grad_fn(points)->(...,4)."""
        comps = self.components_at(points)
        grads = grad_fn(points)
        return np.einsum("...m,...m->...", comps, grads)


def _shift4(center) -> np.ndarray:
    w = np.zeros(4)
    if center is not None:
        c = np.asarray(center, dtype=float)
        if c.shape == (3,):
            w[1:] = c
        elif c.shape == (4,):
            w[:] = c
        else:
            raise ValueError("center must be a 3-vector (spatial) or 4-vector")
    return w


def translation(axis: int) -> AffineVectorField:
    b = np.zeros(4)
    b[axis] = 1.0
    return AffineVectorField(np.zeros((4, 4)), b, name=f"d_{AXES[axis]}")


def rotation(a: int, b: int, center=None, name: str = "") -> AffineVectorField:
    """(x_a - w_a) d_b - (x_b - w_b) d_a for spatial axes a, b."""
    if not (1 <= a <= 3 and 1 <= b <= 3 and a != b):
        raise ValueError("rotation needs two distinct spatial axes")
    w = _shift4(center)
    lin = np.zeros((4, 4))
    lin[b, a] = 1.0
    lin[a, b] = -1.0
    const = np.zeros(4)
    const[b] = -w[a]
    const[a] = w[b]
    return AffineVectorField(lin, const, name or f"rot_{AXES[a]}{AXES[b]}")


def boost(a: int, center=None, name: str = "") -> AffineVectorField:
    """(x_a - w_a) d_t + t d_a."""
    if not 1 <= a <= 3:
        raise ValueError("boost needs a spatial axis")
    w = _shift4(center)
    lin = np.zeros((4, 4))
    lin[0, a] = 1.0
    lin[a, 0] = 1.0
    const = np.zeros(4)
    const[0] = -w[a]
    return AffineVectorField(lin, const, name or f"boost_t{AXES[a]}")


def scaling(center=None, name: str = "") -> AffineVectorField:
    """t d_t + sum_a (x_a - w_a) d_a."""
    w = _shift4(center)
    const = np.zeros(4)
    const[1:] = -w[1:]
    return AffineVectorField(np.eye(4), const, name or "scaling")


def translations() -> list[AffineVectorField]:
    return [translation(i) for i in range(4)]


def lorentz_fields(center=None, tag: str = "") -> list[AffineVectorField]:
    """The six rotation/boost generators shifted to ``center``."""
    out = []
    for a, b in ((1, 2), (1, 3), (2, 3)):
        out.append(rotation(a, b, center, name=f"rot_{AXES[a]}{AXES[b]}{tag}"))
    for a in (1, 2, 3):
        out.append(boost(a, center, name=f"boost_t{AXES[a]}{tag}"))
    return out


def killing_set(center=None, tag: str = "") -> list[AffineVectorField]:
    """Translations, Lorentz generators at ``center``, and the scaling."""
    return translations() + lorentz_fields(center, tag) + [scaling(center, name=f"scaling{tag}")]


def killing_set_r(r_scale: float, center=None, tag: str = "") -> list[AffineVectorField]:
    """Translations plus the Lorentz/scaling generators divided by the scale."""
    fields = translations()
    inv = 1.0 / r_scale
    for v in lorentz_fields(center, tag) + [scaling(center, name=f"scaling{tag}")]:
        fields.append(v.scaled(inv, name=f"{v.name}/R"))
    return fields


def good_fields() -> list[AffineVectorField]:
    """Generators carrying no weight for data localized on the x-axis:
    the yz-rotation and the ty, tz boosts about the origin."""
    return [rotation(2, 3, name="rot_yz"), boost(2, name="boost_ty"), boost(3, name="boost_tz")]


def gamma_set(r_scale: float, center=None, tag: str = "") -> list[AffineVectorField]:
    """R-weighted Lorentz family adapted to one center: good fields,
    translations, and all center-based generators divided by the scale."""
    fields = good_fields() + translations()
    inv = 1.0 / r_scale
    for v in lorentz_fields(center, tag) + [scaling(center, name=f"scaling{tag}")]:
        fields.append(v.scaled(inv, name=f"{v.name}/R"))
    return fields


def omega_set_r(r_scale: float, center=None, tag: str = "") -> list[AffineVectorField]:
    """{rot_yz, rot_xy/R, rot_xz/R} with the x-involving rotations at center."""
    inv = 1.0 / r_scale
    return [
        rotation(2, 3, name="rot_yz"),
        rotation(1, 2, center, name=f"rot_xy{tag}").scaled(inv, name=f"rot_xy{tag}/R"),
        rotation(1, 3, center, name=f"rot_xz{tag}").scaled(inv, name=f"rot_xz{tag}/R"),
    ]


# ---------------------------------------------------------------------------
# Commutation
# ---------------------------------------------------------------------------


def commute_form(form, vf: AffineVectorField):
    """Correction form generated by commuting ``vf`` through the contraction.

    For V with linear part A, V(F(d eta, d^2 zeta)) = F(d V eta, d^2 zeta)
    + F(d eta, d^2 V zeta) + F'(d eta, d^2 zeta); the correction acts on the
    raised tensor by minus A on every slot.  Exact in the coefficients.
    For null input the correction is checked to be null again.
    """
    a = vf.linear
    if form.rank == 2:
        b_up = form.raised
        corr_up = -(a @ b_up + b_up @ a.T)
        corr = SIGNS[:, None] * SIGNS[None, :] * corr_up
        out = BilinearForm(corr)
    else:
        t_up = form.raised
        corr_up = -(
            np.einsum("am,mbc->abc", a, t_up)
            + np.einsum("bm,amc->abc", a, t_up)
            + np.einsum("cm,abm->abc", a, t_up)
        )
        corr = (
            SIGNS[:, None, None]
            * SIGNS[None, :, None]
            * SIGNS[None, None, :]
            * corr_up
        )
        out = TrilinearForm(corr)
    if form.is_null and not out.is_null:
        raise NullFormConsistencyError(
            f"commuting {vf.name or 'field'} through a null form produced a non-null correction"
        )
    return out


# ---------------------------------------------------------------------------
# Null-frame structure witness
# ---------------------------------------------------------------------------


def _cone_frame(point, center):
    """Null frame {l=d_u, n=d_v, e1, e2} vectors at a spacetime point, for the
    cone centered at the spatial point ``center`` (components in (t,x,y,z))."""
    p = np.asarray(point, dtype=float)
    w = _shift4(center)
    rel = p[1:] - w[1:]
    r = float(np.linalg.norm(rel))
    if r < 1e-14:
        raise ValueError("null frame undefined on the center axis (r = 0)")
    rad = rel / r
    # any orthonormal completion of the radial direction
    seed = np.array([1.0, 0.0, 0.0]) if abs(rad[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(rad, seed)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(rad, e1)
    d_u = np.array([1.0, *(-rad)])  # d_t - d_r
    d_v = np.array([1.0, *rad])     # d_t + d_r
    return r, d_u, d_v, np.array([0.0, *e1]), np.array([0.0, *e2])


def good_derivative_magnitude(point, center, grad: np.ndarray) -> float:
    """|d_v f| + sum_rot |Omega f| / (1 + r) for the cone at ``center``."""
    p = np.asarray(point, dtype=float)
    w = _shift4(center)
    g = np.asarray(grad, dtype=float)
    rel = p[1:] - w[1:]
    r = float(np.linalg.norm(rel))
    if r < 1e-14:
        raise ValueError("good derivatives undefined on the center axis")
    dv = g[0] + float(rel @ g[1:]) / r
    total = abs(dv)
    for a, b in ((1, 2), (1, 3), (2, 3)):
        om = rel[a - 1] * g[b] - rel[b - 1] * g[a]
        total += abs(om) / (1.0 + r)
    return total


def bad_derivative_magnitude(grad: np.ndarray) -> float:
    return float(np.sum(np.abs(np.asarray(grad, dtype=float))))


def nullframe_constant(form, point, center) -> float:
    """Pointwise constant for the structure bound: sum of the form's
    null-frame components with at least the (1 + 1/r) angular inflation."""
    r, d_u, d_v, e1, e2 = _cone_frame(point, center)
    frame = [d_u, d_v, e1, e2]
    infl = 1.0 + 1.0 / r
    # dual pairing scale: m(d_u, d_v) = -2, so gradient components along the
    # frame are bounded by 2x the sums used in the witness magnitudes
    if form.rank == 2:
        total = 0.0
        for a in range(4):
            for b in range(4):
                total += abs(float(frame[a] @ form.raised @ frame[b]))
    else:
        total = 0.0
        for a in range(4):
            for b in range(4):
                for c in range(4):
                    total += abs(
                        float(np.einsum("i,j,k,ijk->", frame[a], frame[b], frame[c], form.coeffs))
                    )
    return 4.0 * infl * max(total, form.scale())


def nullframe_bound_witness(form, point, center, grad_zeta, grad_eta, hess_eta=None):
    """Both sides of the null-form structure bound at one point.

    Returns (lhs, rhs): lhs = |G(d zeta, d eta)| (or the trilinear analogue),
    rhs = |good zeta||bad eta| + |bad zeta||good eta| with good-derivative
    magnitudes relative to the cone at ``center``.  The caller compares
    lhs <= C rhs with ``nullframe_constant``; the measured worst ratio is the
    honest quantity, the paper's constant being unquantified.
    """
    gz = np.asarray(grad_zeta, dtype=float)
    ge = np.asarray(grad_eta, dtype=float)
    good_z = good_derivative_magnitude(point, center, gz)
    bad_z = bad_derivative_magnitude(gz)
    if form.rank == 2:
        lhs = abs(float(eval_bilinear(form, gz.reshape(4, 1), ge.reshape(4, 1))[0]))
        good_e = good_derivative_magnitude(point, center, ge)
        bad_e = bad_derivative_magnitude(ge)
        rhs = good_z * bad_e + bad_z * good_e
        return lhs, rhs
    if hess_eta is None:
        raise ValueError("trilinear witness needs the Hessian of eta")
    he = np.asarray(hess_eta, dtype=float)
    lhs = abs(float(eval_trilinear(form, gz.reshape(4, 1), he.reshape(4, 4, 1))[0]))
    bad2_e = float(np.sum(np.abs(he)))
    goodbad_e = sum(
        good_derivative_magnitude(point, center, he[:, m]) for m in range(4)
    )
    rhs = good_z * bad2_e + bad_z * goodbad_e
    return lhs, rhs


# ---------------------------------------------------------------------------
# Named catalogue and serialization
# ---------------------------------------------------------------------------


def _q_form(a: int, b: int) -> np.ndarray:
    g = np.zeros((4, 4))
    g[a, b] = 1.0
    g[b, a] = -1.0
    return g


def _v_tensor_m(v: np.ndarray) -> np.ndarray:
    """F_abc = v_a m_bc: F(xi,xi,xi) = v(xi) m(xi,xi) = 0 on null xi."""
    return np.einsum("a,bc->abc", v, MINKOWSKI)


def bilinear_catalogue() -> dict[str, BilinearForm]:
    cat = {
        "m": BilinearForm(MINKOWSKI, name="m"),
        "neg-m": BilinearForm(-MINKOWSKI, name="neg-m"),
        "dt-dt": BilinearForm(np.outer([1.0, 0, 0, 0], [1.0, 0, 0, 0]), name="dt-dt"),
        "zero": BilinearForm(np.zeros((4, 4)), name="zero"),
    }
    for a in range(4):
        for b in range(a + 1, 4):
            key = f"q-{AXES[a]}{AXES[b]}"
            cat[key] = BilinearForm(_q_form(a, b), name=key)
    return cat


def trilinear_catalogue() -> dict[str, TrilinearForm]:
    dt = np.array([1.0, 0, 0, 0])
    dx = np.array([0, 1.0, 0, 0])
    cat = {
        "dt-m": TrilinearForm(_v_tensor_m(dt), name="dt-m"),
        "dx-m": TrilinearForm(_v_tensor_m(dx), name="dx-m"),
        "zero3": TrilinearForm(np.zeros((4, 4, 4)), name="zero3"),
    }
    # m_(ab v_c) fully symmetrized variants
    for nm, v in (("sym-m-dt", dt), ("sym-m-dx", dx)):
        t = np.einsum("ab,c->abc", MINKOWSKI, v)
        sym = (
            t
            + t.transpose(0, 2, 1)
            + t.transpose(1, 0, 2)
            + t.transpose(1, 2, 0)
            + t.transpose(2, 0, 1)
            + t.transpose(2, 1, 0)
        ) / 6.0
        cat[nm] = TrilinearForm(sym, name=nm)
    return cat


def named_form(name: str):
    cat2 = bilinear_catalogue()
    if name in cat2:
        return cat2[name]
    cat3 = trilinear_catalogue()
    if name in cat3:
        return cat3[name]
    raise KeyError(f"unknown form name {name!r}; known: "
                   f"{sorted(cat2) + sorted(cat3)}")


def form_to_text(form) -> str:
    kind = "bilinear" if form.rank == 2 else "trilinear"
    body = " ".join(repr(float(v)) for v in form.coeffs.ravel())
    return f"{kind}\n{body}\n"


def form_from_text(text: str):
    lines = text.strip().splitlines()
    if not lines:
        raise ValueError("empty form text")
    kind = lines[0].strip().lower()
    values = np.array([float(tok) for tok in " ".join(lines[1:]).split()])
    if kind == "bilinear":
        if values.size != 16:
            raise ValueError(f"bilinear form needs 16 coefficients, got {values.size}")
        return BilinearForm(values.reshape(4, 4))
    if kind == "trilinear":
        if values.size != 64:
            raise ValueError(f"trilinear form needs 64 coefficients, got {values.size}")
        return TrilinearForm(values.reshape(4, 4, 4))
    raise ValueError(f"unknown form rank header {kind!r}")


def rotation_generator_commutes(form) -> bool:
    """Exact check that the form is invariant under rotations about the
    x-axis (generator J = y d_z - z d_y), required for axisymmetric runs."""
    j = np.zeros((4, 4))
    j[3, 2] = 1.0
    j[2, 3] = -1.0
    if form.rank == 2:
        up = form.raised
        lie = j @ up + up @ j.T
    else:
        up = form.raised
        lie = (
            np.einsum("am,mbc->abc", j, up)
            + np.einsum("bm,amc->abc", j, up)
            + np.einsum("cm,abm->abc", j, up)
        )
    return bool(np.max(np.abs(lie)) <= 1e-14 * max(form.scale(), 1.0))
