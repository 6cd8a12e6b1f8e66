"""Model maps and counterexamples used as fixtures by tests, scripts and the CLI."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import numeric as nm
from .atlas import (HAEFLIGER, SATAKE, Chart, Identification, OrbifoldPresentation, Transition,
                    identity_identifications)
from .errors import ParseError
from .expr import (Annulus, Ball, Band, Binary, Bump, BumpAt, Coord, Expr, ExprRegion, FullSpace,
                   MapExpr, Radial, Region, Subst, Table, Unary, Where, band_index, lift,
                   parse_expr, parse_map)
from .group import (close_generators, conjugate_group, cyclic_rotations, minus_identity_group,
                    trivial_group)
from .lifting import (GROWTH, OUTER_MARGIN, SUBSTEPS, TINY, LiftReport, QuotientMap,
                      circle_loop, monodromy, radial_lift_extension)
from .quotient import LinearQuotient


def bump(n: int) -> MapExpr:
    """Smooth bump R -> [0, 1] supported in [1/(n+1), 1/n], equal to 1 at the midpoint."""
    if n < 1:
        raise ValueError("bump index starts at 1")
    return MapExpr(1, [Bump(n, Coord(0))])


@dataclass(frozen=True)
class SignSequence:
    """Finite prefix of a sign sequence; entries past the prefix are +1."""
    signs: tuple

    def __post_init__(self):
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        if any(s not in (-1, 1) for s in self.signs):
            raise ValueError("signs must be +1 or -1")

    def __getitem__(self, n: int) -> int:
        """Sign for band n (1-based)."""
        return self.signs[n - 1] if 1 <= n <= len(self.signs) else 1


def example1_map(eps: SignSequence) -> MapExpr:
    """x -> eps_n exp(-1/x) rho_n(x) on 1/(n+1) < x <= 1/n; 0 for x <= 0 or x > 1."""
    x = Coord(0)
    inside = x.gt(0) & x.le(1)
    signs = Table(tuple(float(s) for s in eps.signs), Band(x))
    body = signs * Unary("exp", -(lift(1.0) / x)) * BumpAt(x)
    return MapExpr(1, [Where(inside, body, lift(0.0))])


def _exp(e: Expr) -> Expr:
    return Unary("exp", e)


def example2_map() -> MapExpr:
    """exp(-r) rho_n(r) (r, 0) on even bands, exp(-r) rho_n(r) (x, y) on odd bands."""
    r = Radial()
    x, y = Coord(0), Coord(1)
    inside = r.gt(0) & r.le(1)
    amp = _exp(-r) * BumpAt(r)
    even = (Band(r) % 2).eq(0)
    comps = [Where(inside, amp * Where(even, r, x), lift(0.0)),
             Where(inside, amp * Where(even, lift(0.0), y), lift(0.0))]
    return MapExpr(2, comps)


def example2_quotient_map(radius: float = 1.0, m: int = 4) -> QuotientMap:
    Q = LinearQuotient(cyclic_rotations(m))
    return QuotientMap.from_lift(Q, Ball(np.zeros(2), radius), Q, example2_map())


def _outer_band(radius: float) -> int:
    """Outermost band whose midpoint the radial extension reaches inside the ball.

    Narrow bands are numerically nonzero only near their midpoint (exp(-1/t)
    underflows elsewhere), so a band clipped before its midpoint carries no
    information.
    """
    reach = min(radius, 1.0) * OUTER_MARGIN
    n = max(1, int(band_index(reach)))
    if band_midpoint(n) > reach:
        n += 1
    return n


def example2_start_radius(radius: float) -> float:
    """Midpoint of band n+1, n the outer band of the ball (n = 1 for radius > 1)."""
    return band_midpoint(_outer_band(radius) + 1)


def example2_substeps(radius: float, rings: int = 8, cap: int = 50000) -> int:
    """Radial substeps putting about ``rings`` spheres across the part of the
    outer band where the normalised bump exceeds TINY.

    log rho_n falls like -(4/w^2) s^2 at relative offset s from the band
    midpoint (w the band width), so that part has width 2 s w / 2 with
    s = w sqrt(-log(TINY) / 4).
    """
    n = _outer_band(radius)
    w = 1.0 / n - 1.0 / (n + 1)
    s = min(1.0, w * math.sqrt(-math.log(TINY) / 4.0))
    rel = s * w / (rings * band_midpoint(n))
    need = math.ceil(math.log(GROWTH) / math.log1p(rel))
    return int(min(cap, max(SUBSTEPS, need)))


def example2_analysis(radius: float = 0.25, m: int = 4, **kw) -> LiftReport:
    f = example2_quotient_map(radius, m)
    kw.setdefault("substeps", example2_substeps(radius))
    return radial_lift_extension(f, rho=example2_start_radius(radius), **kw)


def default_g() -> MapExpr:
    """g(r) = bump(1)(r) * r."""
    t = Coord(0)
    return MapExpr(1, [Bump(1, t) * t])


def halfangle_lift(g: MapExpr | None = None) -> MapExpr:
    """(r cos t, r sin t) -> (g(r) cos(t/2), g(r) sin(t/2)) with t = atan2(y, x)."""
    g = g or default_g()
    gr = Subst(g.components[0], (Radial(),))
    half = Binary("atan2", Coord(1), Coord(0)) * 0.5
    return MapExpr(2, [gr * Unary("cos", half), gr * Unary("sin", half)])


def halfangle_map(g: MapExpr | None = None, region: Region | None = None) -> QuotientMap:
    """The half-angle map R^2 -> R^2/{+-I}, well defined on orbits."""
    src = LinearQuotient(trivial_group(2))
    tgt = LinearQuotient(minus_identity_group(2))
    return QuotientMap.from_lift(src, region or FullSpace(2), tgt, halfangle_lift(g))


def halfangle_monodromy(radius: float = 0.75, steps: int = 400) -> np.ndarray:
    f = halfangle_map()
    loop = circle_loop(radius, steps)
    return monodromy(f, loop, f.rep_batch(loop[:1])[0])


def band_midpoint(n: int) -> float:
    return 0.5 * (1.0 / (n + 1) + 1.0 / n)


def constant_sign_relating(f1: MapExpr, f2: MapExpr, delta: float, n_max: int = 30):
    """sigma in {+1, -1} with f1 = sigma f2 at one point per band inside (0, delta], or None."""
    n0 = max(1, int(math.ceil(1.0 / delta - 1e-12)))
    xs = np.array([[band_midpoint(n)] for n in range(n0, n_max + 1)])
    a, b = f1(xs)[:, 0], f2(xs)[:, 0]
    for sigma in (1, -1):
        if np.allclose(a, sigma * b, rtol=1e-12, atol=0.0):
            return sigma
    return None


def example1_pairs() -> list[tuple[SignSequence, SignSequence, int]]:
    """Sign-sequence pairs differing at bands n and n + 5 only, and n.

    The second flip keeps every pair inequivalent on (0, 1/5] as well.
    """
    out = []
    for n in range(1, 6):
        base = [1] * 12
        other = list(base)
        other[n - 1] = -1
        other[n + 4] = -1
        out.append((SignSequence(base), SignSequence(other), n))
    return out


# ---------------------------------------------------------------- atlas fixtures
#
# The annulus family: F is the punctured unit disk with the trivial group,
# F' the same model divided by {+-I} (identified with the annulus by angle
# doubling), F'' three small disks with the trivial group.

HALFANGLE_SRC = ("r*cos(atan2(y, x)/2)", "r*sin(atan2(y, x)/2)")
DOUBLING_SRC = ("(x*x - y*y)/r", "2*x*y/r")
DISK_RADIUS = 0.2
DISK_DISTANCE = 0.5


def _map(src) -> MapExpr:
    return parse_map(list(src), 2)


def _disk_center(k: int) -> np.ndarray:
    t = 2 * math.pi * k / 3
    return DISK_DISTANCE * np.array([math.cos(t), math.sin(t)])


def _annulus_pieces() -> dict:
    """Chart lists of the annulus pieces F, F', F''."""
    punctured = Annulus(0.0, 1.0)
    return {
        "F": [Chart("F", punctured, trivial_group(2), "punctured disk")],
        "Fprime": [Chart("Fprime", punctured, minus_identity_group(2),
                         "punctured disk mod +-I")],
        "Fsecond": [Chart(f"D{k}", Ball(_disk_center(k), DISK_RADIUS), trivial_group(2),
                          f"small disk {k}") for k in range(3)],
    }


def _annulus_relations(a: str, b: str) -> tuple[list, list]:
    """(transitions, identifications) joining piece a to piece b, both directions."""
    if a == b:
        return [], []
    pair = {a, b}
    punctured = Annulus(0.0, 1.0)
    trans, idents = [], []
    if pair == {"F", "Fprime"}:
        idents.append(Identification("F", "Fprime", punctured, _map(HALFANGLE_SRC)))
        idents.append(Identification("Fprime", "F", punctured, _map(DOUBLING_SRC)))
    for k in range(3):
        disk = Ball(_disk_center(k), DISK_RADIUS)
        if pair == {"F", "Fsecond"}:
            trans.append(Transition(f"D{k}", "F", disk, nm.identity(2, nm.EXACT),
                                    np.array([Fraction(0)] * 2, dtype=object)))
        if pair == {"Fprime", "Fsecond"}:
            cx, cy = (float(c) for c in _disk_center(k))
            d2 = (f"{DISK_RADIUS ** 2!r} - ({DOUBLING_SRC[0]} - {cx!r})**2 "
                  f"- ({DOUBLING_SRC[1]} - {cy!r})**2")
            idents.append(Identification(f"D{k}", "Fprime", disk, _map(HALFANGLE_SRC)))
            idents.append(Identification("Fprime", f"D{k}",
                                         ExprRegion(punctured, parse_expr(d2, 2)),
                                         _map(DOUBLING_SRC)))
    return trans, idents


def annulus_family(*pieces: str, mode: str = SATAKE) -> OrbifoldPresentation:
    """Union of annulus pieces ("F", "Fprime", "Fsecond") with all joining relations."""
    lib = _annulus_pieces()
    charts, trans, idents = [], [], []
    for k, a in enumerate(pieces):
        charts += lib[a]
        for b in pieces[k + 1:]:
            t, i = _annulus_relations(a, b)
            trans += t
            idents += i
    name = "bad-union-" + "-union-".join(pieces)
    return OrbifoldPresentation(charts, trans, idents, mode, name)


def annulus_cross_relations(left: tuple, right: tuple) -> list:
    """Relations from pieces in ``left`` to pieces in ``right`` (for atlas comparison)."""
    out = []
    for a in left:
        for b in right:
            if a == b:
                for c in _annulus_pieces()[a]:
                    out.append(Transition(c.id, c.id, c.model, np.eye(2), np.zeros(2)))
                continue
            t, i = _annulus_relations(a, b)
            out += t + i
    return out


def _power_src(p: Fraction) -> tuple:
    """Components of z -> conj(z)^p = r^p (cos(p t), -sin(p t)) for rational p."""
    e = f"({p.numerator}/{p.denominator})"
    return (f"r**{e}*cos({e}*atan2(y, x))", f"-r**{e}*sin({e}*atan2(y, x))")


TEARDROP_SHEAR = [[2, 1], [1, 1]]


def teardrop(p: int = 3, mode: str = HAEFLIGER) -> OrbifoldPresentation:
    """Cone chart B(0,1)/C_p, cap chart B(0,2), and a sheared copy of the cone.

    The cone coordinate z and cap coordinate v are related by v = 1/z^p.
    """
    C = cyclic_rotations(p)
    A = np.array(TEARDROP_SHEAR, dtype=float)
    Ainv = np.linalg.inv(A)
    cone = Chart("cone", Ball(np.zeros(2), 1.0), C, "cone point of order p")
    cap = Chart("cap", Ball(np.zeros(2), 2.0), trivial_group(2), "smooth cap")
    cone2 = Chart("cone2", Ball(np.zeros(2), 1.0, gram=Ainv.T @ Ainv),
                  conjugate_group(C, A), "sheared cone")
    idents = [
        Identification("cone", "cap", Annulus(0.5 ** (1.0 / p), 1.0),
                       _map(_power_src(Fraction(-p)))),
        Identification("cap", "cone", Annulus(1.0, 2.0), _map(_power_src(Fraction(-1, p)))),
    ]
    trans = [Transition("cone2", "cone", cone2.model, Ainv, np.zeros(2))]
    return OrbifoldPresentation([cone, cap, cone2], trans, idents, mode, f"teardrop({p})")


def football(p: int = 2, q: int = 3, mode: str = HAEFLIGER) -> OrbifoldPresentation:
    """Cones B(0,1.5)/C_p and B(0,1.5)/C_q glued by w^q = 1/z^p."""
    R = 1.5
    north = Chart("north", Ball(np.zeros(2), R), cyclic_rotations(p), "cone of order p")
    south = Chart("south", Ball(np.zeros(2), R), cyclic_rotations(q), "cone of order q")
    idents = [
        Identification("north", "south", Annulus(R ** (-q / p), R),
                       _map(_power_src(Fraction(-p, q)))),
        Identification("south", "north", Annulus(R ** (-p / q), R),
                       _map(_power_src(Fraction(-q, p)))),
    ]
    return OrbifoldPresentation([north, south], [], idents, mode, f"football({p},{q})")


def mirror(mode: str = SATAKE) -> OrbifoldPresentation:
    """Two disks divided by the reflection diag(1,-1), the smaller shifted into the larger."""
    G = close_generators([[[1, 0], [0, -1]]])
    big = Chart("A", Ball(np.zeros(2), 2.0), G, "large disk")
    small = Chart("B", Ball(np.zeros(2), 1.0), G, "small disk")
    t = Transition("B", "A", small.model, nm.identity(2, nm.EXACT),
                   np.array([Fraction(1, 2), Fraction(0)], dtype=object))
    return OrbifoldPresentation([big, small], [t], [], mode, "mirror")


def pm_plane(mode: str = HAEFLIGER) -> OrbifoldPresentation:
    """The unit disk divided by {+-I}."""
    return OrbifoldPresentation([Chart("Q", Ball(np.zeros(2), 1.0), minus_identity_group(2))],
                                [], [], mode, "pm-plane")


def plane(mode: str = HAEFLIGER) -> OrbifoldPresentation:
    """The unit disk with the trivial group."""
    return OrbifoldPresentation([Chart("P", Ball(np.zeros(2), 1.0), trivial_group(2))],
                                [], [], mode, "plane")


def pm_plane_to_plane() -> list:
    """Squaring from the cone chart and a square root back: a homeomorphism of
    quotients that is not a diffeomorphism at the origin."""
    disk = Ball(np.zeros(2), 1.0)
    return [Identification("Q", "P", disk, _map(("x*x - y*y", "2*x*y"))),
            Identification("P", "Q", disk,
                           _map(("sqrt(r)*cos(atan2(y, x)/2)", "sqrt(r)*sin(atan2(y, x)/2)")))]


ATLAS_FIXTURES = ("bad-union-F", "bad-union-Fprime", "bad-union-Fsecond", "teardrop(p)",
                  "football(p,q)", "mirror", "pm-plane", "plane")
MAP_FIXTURES = ("example1", "example2", "halfangle")


def atlas_fixture(name: str) -> OrbifoldPresentation:
    """Presentation for a fixture name, e.g. "teardrop(3)" or "bad-union-F-union-Fprime"."""
    name = name.strip()
    if name.startswith("bad-union-"):
        pieces = tuple(name[len("bad-union-"):].split("-union-"))
        if not pieces or any(p not in ("F", "Fprime", "Fsecond") for p in pieces) or \
                len(set(pieces)) != len(pieces):
            raise ParseError(f"unknown annulus pieces in {name!r}", field="fixture")
        return annulus_family(*pieces)
    m = re.fullmatch(r"(teardrop|football)\(([\d,\s]*)\)", name)
    if m:
        args = [int(a) for a in m.group(2).split(",") if a.strip()]
        if m.group(1) == "teardrop" and len(args) <= 1 and all(a >= 2 for a in args):
            return teardrop(*args)
        if m.group(1) == "football" and len(args) <= 2 and all(a >= 2 for a in args):
            return football(*args)
        raise ParseError(f"bad arguments in {name!r}", field="fixture")
    simple = {"teardrop": teardrop, "football": football, "mirror": mirror,
              "pm-plane": pm_plane, "plane": plane}
    if name in simple:
        return simple[name]()
    raise ParseError(f"unknown fixture {name!r}", field="fixture")


def fixture_cross_relations(a: OrbifoldPresentation, b: OrbifoldPresentation) -> list | None:
    """Known relations between two fixtures, or None when there are none."""
    pre = "bad-union-"
    if a.name.startswith(pre) and b.name.startswith(pre):
        left = tuple(a.name[len(pre):].split("-union-"))
        right = tuple(b.name[len(pre):].split("-union-"))
        return annulus_cross_relations(left, right)
    if (a.name, b.name) == ("pm-plane", "plane"):
        return pm_plane_to_plane()
    if (a.name, b.name) == ("plane", "pm-plane"):
        return pm_plane_to_plane()
    if a.name == b.name:
        return identity_identifications(a)
    return None
