"""Laminates of finite order: atoms, elementary splittings and constructors.

A laminate is a finite atomic probability measure on symmetric 2x2 matrices
together with a splitting certificate: the sequence of rank-one elementary
splittings that produced it from a Dirac measure.  Validation replays the
certificate instead of solving the general laminate-decomposition problem.

All constructors here split along the two coordinate rank-one directions
diag(0, x) and diag(x', 0); entry passthrough in the family maps makes those
directions exactly rank-one in floating point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .profile import SymMatrix2
from .staircase import (
    ParamPoint,
    StairConfig,
    family_matrix,
    interp_coeffs,
    interp_map,
    split_coeffs,
)

MERGE_TOL = 1e-9  # coincident-atom threshold, entrywise
RANK_TOL = 1e-10  # second singular value relative to the Frobenius norm
BARY_TOL = 1e-10  # segment barycenter must reproduce the split atom


class InvalidSplitError(ValueError):
    """A splitting step violates the rank-one or barycenter requirement."""


@dataclass(frozen=True)
class AtomTag:
    kind: str  # A,B,C,D,E,W1,W2 (C doubles as the transient mid-split atom)
    index: int
    t: float | None = None

    def as_dict(self) -> dict:
        return {"kind": self.kind, "index": self.index, "t": self.t}


@dataclass(frozen=True)
class Atom:
    weight: float
    X: SymMatrix2
    tag: AtomTag

    def __post_init__(self) -> None:
        if not self.weight > 0.0:
            raise ValueError(f"atom weight must be positive, got {self.weight}")


@dataclass(frozen=True)
class SplitStep:
    atom_index: int
    B1: SymMatrix2
    B2: SymMatrix2
    s: float
    fraction: float
    b1_tag: AtomTag
    b2_tag: AtomTag


@dataclass(frozen=True)
class Laminate:
    atoms: tuple[Atom, ...]
    certificate: tuple[SplitStep, ...]

    def weights(self) -> list[float]:
        return [a.weight for a in self.atoms]

    def mass(self) -> float:
        return math.fsum(a.weight for a in self.atoms)


def dirac(X: SymMatrix2, tag: AtomTag) -> Laminate:
    return Laminate(atoms=(Atom(1.0, X, tag),), certificate=())


def barycenter(nu: Laminate) -> SymMatrix2:
    """Weighted atom average, compensated per entry."""
    return SymMatrix2(
        math.fsum(a.weight * a.X.a11 for a in nu.atoms),
        math.fsum(a.weight * a.X.a12 for a in nu.atoms),
        math.fsum(a.weight * a.X.a22 for a in nu.atoms),
    )


def second_singular_value(M: SymMatrix2) -> float:
    """Smaller singular value of a symmetric 2x2 matrix (|eigenvalue|)."""
    tr = M.a11 + M.a22
    det = M.a11 * M.a22 - M.a12 * M.a12
    disc = math.sqrt(max(0.0, tr * tr - 4.0 * det))
    eigs = (0.5 * (tr + disc), 0.5 * (tr - disc))
    return min(abs(eigs[0]), abs(eigs[1]))


def _check_step(step: SplitStep, atom: Atom) -> None:
    diff = step.B1.sub(step.B2)
    norm = diff.frobenius()
    if norm > 0.0 and second_singular_value(diff) > RANK_TOL * norm:
        raise InvalidSplitError(f"split direction not rank-one (defect {second_singular_value(diff):.3e})")
    mix = SymMatrix2(
        (1.0 - step.s) * step.B1.a11 + step.s * step.B2.a11,
        (1.0 - step.s) * step.B1.a12 + step.s * step.B2.a12,
        (1.0 - step.s) * step.B1.a22 + step.s * step.B2.a22,
    )
    scale = max(1.0, atom.X.frobenius())
    if mix.entrywise_dist(atom.X) > BARY_TOL * scale:
        raise InvalidSplitError(
            f"segment barycenter misses the split atom by {mix.entrywise_dist(atom.X):.3e}"
        )
    if not (0.0 <= step.s <= 1.0 and 0.0 <= step.fraction <= 1.0):
        raise InvalidSplitError("s and fraction must lie in [0,1]")


def _merge_in(atoms: list[Atom], weight: float, X: SymMatrix2, tag: AtomTag) -> None:
    if weight <= 0.0:
        return
    for k, a in enumerate(atoms):
        if a.X.entrywise_dist(X) <= MERGE_TOL:
            atoms[k] = Atom(a.weight + weight, a.X, a.tag)
            return
    atoms.append(Atom(weight, X, tag))


def elementary_split(nu: Laminate, step: SplitStep) -> Laminate:
    """Replace fraction*weight of one atom by the rank-one pair (B1, B2).

    Weights go (1-s) to B1 and s to B2; coincident atoms merge.  The step is
    appended to the certificate.
    """
    if not (0 <= step.atom_index < len(nu.atoms)):
        raise InvalidSplitError(f"atom index {step.atom_index} out of range")
    atom = nu.atoms[step.atom_index]
    _check_step(step, atom)
    if step.fraction == 0.0:
        return Laminate(atoms=nu.atoms, certificate=nu.certificate + (step,))
    moved = step.fraction * atom.weight
    atoms = list(nu.atoms)
    if step.fraction == 1.0:
        del atoms[step.atom_index]
    else:
        atoms[step.atom_index] = Atom(atom.weight - moved, atom.X, atom.tag)
    _merge_in(atoms, (1.0 - step.s) * moved, step.B1, step.b1_tag)
    _merge_in(atoms, step.s * moved, step.B2, step.b2_tag)
    return Laminate(atoms=tuple(atoms), certificate=nu.certificate + (step,))


def _find_atom(nu: Laminate, X: SymMatrix2) -> int:
    for k, a in enumerate(nu.atoms):
        if a.X.entrywise_dist(X) <= MERGE_TOL:
            return k
    raise InvalidSplitError("atom to split not present in the laminate")


def build_mu_i(cfg: StairConfig, i: int, P: ParamPoint) -> Laminate:
    """Base three-atom laminate with barycenter A_i.

    Two splits: A_i -> (B_i, C_i), then C_i -> (D_i, E_i = A_{i+1}); weights
    come out as the splitting coefficients.
    """
    l1, l2, l3 = split_coeffs(cfg, i, P)
    a_i = family_matrix(cfg, "A", i, P)
    nu = dirac(a_i, AtomTag("A", i))
    nu = elementary_split(
        nu,
        SplitStep(
            atom_index=0,
            B1=family_matrix(cfg, "B", i, P),
            B2=family_matrix(cfg, "C", i, P),
            s=1.0 - l1,
            fraction=1.0,
            b1_tag=AtomTag("B", i),
            b2_tag=AtomTag("C", i),
        ),
    )
    idx = _find_atom(nu, family_matrix(cfg, "C", i, P))
    nu = elementary_split(
        nu,
        SplitStep(
            atom_index=idx,
            B1=family_matrix(cfg, "D", i, P),
            B2=family_matrix(cfg, "E", i, P),
            s=l3 / (l2 + l3),
            fraction=1.0,
            b1_tag=AtomTag("D", i),
            b2_tag=AtomTag("A", i + 1),
        ),
    )
    return nu


def _split_interp_once(nu: Laminate, cfg: StairConfig, k: int, t: float, P: ParamPoint) -> Laminate:
    """Split the A_k atom of nu into (Phi1_k, Phi2_k, A_{k+1}) at parameter t."""
    l1t, l2t, l3t = interp_coeffs(cfg, k, t, P)
    if min(l1t, l2t, l3t) <= 0.0:
        raise ValueError(f"interpolation weights not positive at (i={k}, t={t}); t below threshold")
    a_k = family_matrix(cfg, "A", k, P)
    a_k1 = family_matrix(cfg, "A", k + 1, P)
    phi1 = interp_map(cfg, 1, k, t, P)
    phi2 = interp_map(cfg, 2, k, t, P)
    rest = l2t + l3t
    # transient atom on the segment [Phi2_k, A_{k+1}]; its a11 equals the
    # parent's by the barycenter identity, taken verbatim so both split
    # directions stay exactly rank-one
    mid = SymMatrix2(a_k.a11, phi2.a12, a_k1.a22)
    idx = _find_atom(nu, a_k)
    nu = elementary_split(
        nu,
        SplitStep(
            atom_index=idx,
            B1=phi1,
            B2=mid,
            s=rest,
            fraction=1.0,
            b1_tag=AtomTag("W1", k, t),
            b2_tag=AtomTag("C", k, t),
        ),
    )
    idx = _find_atom(nu, mid)
    return elementary_split(
        nu,
        SplitStep(
            atom_index=idx,
            B1=phi2,
            B2=a_k1,
            s=l3t / rest,
            fraction=1.0,
            b1_tag=AtomTag("W2", k, t),
            b2_tag=AtomTag("A", k + 1),
        ),
    )


def build_mu_interp(cfg: StairConfig, i: int, j: int, t: float, P: ParamPoint) -> Laminate:
    """Interpolation laminate from index i to j at parameter t; barycenter A_i.

    Atoms are Phi1/Phi2 at every index in [i, j) with telescoping-product
    weights plus the terminal A_j.  Needs t above the interpolation threshold
    (all weights positive) and i at or past the certified onset.
    """
    if not (1 <= i < j):
        raise ValueError(f"need 1 <= i < j, got ({i}, {j})")
    if not (0.0 < t <= 1.0):
        raise ValueError(f"t = {t} outside (0,1]")
    nu = dirac(family_matrix(cfg, "A", i, P), AtomTag("A", i))
    for k in range(i, j):
        nu = _split_interp_once(nu, cfg, k, t, P)
    return nu


def build_corr(
    cfg: StairConfig, which: int, i: int, j: int, t: float, tp: float, P: ParamPoint
) -> Laminate:
    """Correction laminate: mass t/t' stays on the sharpened interpolant.

    which=1 mixes delta at Phi1_{i,t'} with the interpolation laminate from i;
    which=2 mixes delta at Phi2_{i,t'} with the one from i+1.  Barycenter is
    Phi1_{i,t}(P) resp. Phi2_{i,t}(P).  When the two t-values have collapsed
    to the same double (their gap lives below machine epsilon in the
    log-deficit representation) the measure degenerates to the relabeled
    Dirac.
    """
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    if not (1 <= i < j):
        raise ValueError(f"need 1 <= i < j, got ({i}, {j})")
    if not (0.0 < t <= tp <= 1.0):
        raise ValueError(f"need 0 < t <= t' <= 1, got ({t}, {tp})")
    sharpened = interp_map(cfg, which, i, tp, P)
    if t == tp:
        return dirac(sharpened, AtomTag(f"W{which}", i, tp))
    root = interp_map(cfg, which, i, t, P)
    start = i if which == 1 else i + 1
    anchor = family_matrix(cfg, "A", start, P)
    nu = dirac(root, AtomTag(f"W{which}", i, t))
    nu = elementary_split(
        nu,
        SplitStep(
            atom_index=0,
            B1=sharpened,
            B2=anchor,
            s=1.0 - t / tp,
            fraction=1.0,
            b1_tag=AtomTag(f"W{which}", i, tp),
            b2_tag=AtomTag("A", start),
        ),
    )
    for k in range(start, j):
        nu = _split_interp_once(nu, cfg, k, tp, P)
    return nu


@dataclass
class LaminateReport:
    ok: bool
    failures: list = field(default_factory=list)

    def add(self, kind: str, detail: str) -> None:
        self.ok = False
        self.failures.append({"check": kind, "detail": detail})


def validate(nu: Laminate) -> LaminateReport:
    """Replay the certificate from the root Dirac and check all invariants."""
    report = LaminateReport(ok=True)
    if abs(nu.mass() - 1.0) > 1e-12:
        report.add("simplex", f"weights sum to {nu.mass()!r}")
    for a in nu.atoms:
        if not (0.0 < a.weight <= 1.0 + 1e-12):
            report.add("simplex", f"weight {a.weight!r} outside (0,1]")
    for ka in range(len(nu.atoms)):
        for kb in range(ka + 1, len(nu.atoms)):
            if nu.atoms[ka].X.entrywise_dist(nu.atoms[kb].X) <= MERGE_TOL:
                report.add("distinct", f"atoms {ka} and {kb} coincide")
    root = barycenter(nu) if nu.certificate else nu.atoms[0].X
    replay = dirac(root, nu.atoms[0].tag)
    for n, step in enumerate(nu.certificate):
        try:
            replay = elementary_split(replay, step)
        except InvalidSplitError as exc:
            report.add("replay", f"step {n}: {exc}")
            return report
    if len(replay.atoms) != len(nu.atoms):
        report.add("replay", f"replay yields {len(replay.atoms)} atoms, laminate has {len(nu.atoms)}")
        return report
    for a in nu.atoms:
        try:
            k = _find_atom(replay, a.X)
        except InvalidSplitError:
            report.add("replay", "atom missing from replay")
            return report
        if abs(replay.atoms[k].weight - a.weight) > 1e-10:
            report.add("replay", f"weight mismatch on atom {k}")
    return report


def _mat_to_list(X: SymMatrix2) -> list[float]:
    return [X.a11, X.a12, X.a22]


def _mat_from_list(v: list[float]) -> SymMatrix2:
    return SymMatrix2(float(v[0]), float(v[1]), float(v[2]))


def laminate_to_json(nu: Laminate) -> str:
    doc = {
        "atoms": [
            {"weight": a.weight, "X": _mat_to_list(a.X), "tag": a.tag.as_dict()} for a in nu.atoms
        ],
        "certificate": [
            {
                "atom_index": st.atom_index,
                "B1": _mat_to_list(st.B1),
                "B2": _mat_to_list(st.B2),
                "s": st.s,
                "fraction": st.fraction,
                "b1_tag": st.b1_tag.as_dict(),
                "b2_tag": st.b2_tag.as_dict(),
            }
            for st in nu.certificate
        ],
        "barycenter": _mat_to_list(barycenter(nu)),
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def laminate_from_json(text: str) -> Laminate:
    doc = json.loads(text)

    def tag(d: dict) -> AtomTag:
        return AtomTag(d["kind"], int(d["index"]), d["t"])

    atoms = tuple(Atom(a["weight"], _mat_from_list(a["X"]), tag(a["tag"])) for a in doc["atoms"])
    cert = tuple(
        SplitStep(
            atom_index=int(st["atom_index"]),
            B1=_mat_from_list(st["B1"]),
            B2=_mat_from_list(st["B2"]),
            s=float(st["s"]),
            fraction=float(st["fraction"]),
            b1_tag=tag(st["b1_tag"]),
            b2_tag=tag(st["b2_tag"]),
        )
        for st in doc["certificate"]
    )
    return Laminate(atoms=atoms, certificate=cert)
