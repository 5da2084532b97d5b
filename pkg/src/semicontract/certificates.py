"""Switching certificates on a subspace: mode classification, jump and rate
conditions, dwell/leave-time bounds, decay constants, and a scalar-weight
search."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import PSD_TOL, frobenius, gen_sym_eig, psd_check, sym_eig
from .subspaces import Subspace, WeightedSeminorm, check_invariance, check_separating, \
    log_seminorm, projector, reduce_weight
from .system import Mode, SampleSet, SwitchedSystem, eval_jacobian

# Jump-factor comparisons default to the granularity of 4-decimal published
# constants rather than the 1e-9 semidefinite default; an exact reciprocal
# pair rounded to 4 decimals is otherwise rejected.
COUPLING_TOL = 1e-4
# Multiplicative safety margin applied when dwell bounds are derived from
# tightest (raw) constants.
DEFAULT_MARGIN = 1e-6

STABLE = "S"
UNSTABLE = "U"


class InfeasibleError(ValueError):
    """No certificate of the requested form exists."""


def growth_values(mode: Mode, w: WeightedSeminorm, samples: SampleSet) -> np.ndarray:
    """Weighted log-seminorm of the mode Jacobian at every sample point."""
    if len(samples) == 0:
        raise ValueError("empty sample set")
    basis = w.subspace.basis
    jacs = eval_jacobian(mode, samples.points)           # (m, n, n)
    a11 = np.einsum("ia,mij,jb->mab", basis, jacs, basis)  # (m, h, h)
    if w.reduced.shape == (1, 1):
        return a11[:, 0, 0]
    r = w.reduced
    out = np.empty(len(samples))
    for k in range(len(samples)):
        lhs = r @ a11[k] + a11[k].T @ r
        out[k] = gen_sym_eig(lhs, 2.0 * r)[-1]
    return out


def classify_mode(mode: Mode, w: WeightedSeminorm, samples: SampleSet):
    """Tag a mode semi-contracting (S) or expanding (U) on the subspace.

    Returns (tag, sup growth). S iff the growth rate is negative at every
    sample; the verdict is sampled evidence over the domain, not a proof.
    """
    sup = float(np.max(growth_values(mode, w, samples)))
    return (STABLE if sup < 0.0 else UNSTABLE), sup


def tightest_eta(mode: Mode, w: WeightedSeminorm, samples: SampleSet) -> float:
    """Sup over samples of the reduced rate. Negative values mean the mode is
    semi-contracting with best stable rate -value; positive values are the best
    expansion rate bound."""
    return float(np.max(growth_values(mode, w, samples)))


@dataclass(frozen=True, eq=False)
class RateCheck:
    ok: bool
    sup_growth: float
    bound: float           # -eta for the stable check, +eta for the unstable one
    margin: float          # bound + tolerance - sup_growth
    tolerance: float
    worst_point: np.ndarray


def check_rate(mode: Mode, w: WeightedSeminorm, eta: float, stable: bool,
               samples: SampleSet, tol: float = PSD_TOL) -> RateCheck:
    """Verify the reduced rate condition R A11 + A11^T R <= -/+ 2 eta R at every
    sample, and spot-check its full-space n x n equivalent on 10 samples."""
    if eta <= 0:
        raise ValueError("rate constants must be positive")
    values = growth_values(mode, w, samples)
    worst = int(np.argmax(values))
    sup = float(values[worst])
    bound = -eta if stable else eta
    slack = tol * max(1.0, abs(bound))
    ok = sup <= bound + slack
    _cross_check_full_form(mode, w, eta, stable, samples, values, tol)
    return RateCheck(bool(ok), sup, bound, bound + slack - sup, tol,
                     samples.points[worst])


def _cross_check_full_form(mode, w, eta, stable, samples, reduced_values, tol):
    # The n x n form and the reduced form are congruent, so their verdicts must
    # agree away from the tolerance boundary.
    pi = w.subspace.basis @ w.subspace.basis.T
    p = w.weight
    factor = -2.0 * eta if stable else 2.0 * eta
    bound = -eta if stable else eta
    indices = np.unique(np.linspace(0, len(samples) - 1, min(10, len(samples))).astype(int))
    for k in indices:
        a = eval_jacobian(mode, samples.points[k])
        m = factor * p - (p @ a @ pi + pi @ a.T @ p)
        full_ok = psd_check((m + m.T) / 2.0, tol)
        reduced_ok = reduced_values[k] <= bound + tol * max(1.0, abs(bound))
        if full_ok != reduced_ok and abs(reduced_values[k] - bound) > 1e-6 * max(1.0, abs(bound)):
            raise RuntimeError(
                f"full-space and reduced rate conditions disagree at sample {k}: "
                f"full={full_ok}, reduced={reduced_ok}"
            )


def _require_same_subspace(w_from: WeightedSeminorm, w_to: WeightedSeminorm):
    pf = w_from.subspace.basis @ w_from.subspace.basis.T
    pt = w_to.subspace.basis @ w_to.subspace.basis.T
    if frobenius(pf - pt) > 1e-8 * max(1.0, frobenius(pf)):
        raise ValueError("weights do not share a kernel (different subspaces)")


def tightest_beta(w_from: WeightedSeminorm, w_to: WeightedSeminorm) -> float:
    """Smallest beta with R_to <= beta R_from: the largest generalized
    eigenvalue of (R_to, R_from)."""
    _require_same_subspace(w_from, w_to)
    if w_from.reduced.shape == (1, 1):
        return float(w_to.reduced[0, 0] / w_from.reduced[0, 0])
    return float(gen_sym_eig(w_to.reduced, w_from.reduced)[-1])


@dataclass(frozen=True)
class CouplingCheck:
    ok: bool
    ratio: float   # tightest feasible beta
    bound: float   # requested beta
    margin: float
    tolerance: float


def check_switch_coupling(w_from: WeightedSeminorm, w_to: WeightedSeminorm,
                          beta: float, tol: float = COUPLING_TOL) -> CouplingCheck:
    """Verify R_to <= beta R_from within a relative tolerance."""
    ratio = tightest_beta(w_from, w_to)
    slack = tol * max(1.0, abs(beta))
    return CouplingCheck(bool(ratio <= beta + slack), ratio, beta,
                         beta + slack - ratio, tol)


def tightest_m_bounds(w: WeightedSeminorm) -> tuple[float, float]:
    """Extremal eigenvalues of the reduced weight: the tightest constants with
    m_lower * Pi <= P <= m_upper * Pi."""
    eigs = sym_eig(w.reduced).eigenvalues
    return float(eigs[0]), float(eigs[-1])


@dataclass(frozen=True, eq=False)
class SubspaceCertificate:
    """Weights and constants certifying contraction of the switched flow on one
    subspace, Lyapunov-style: value jumps at switches are bounded by the jump
    factors and the value decays (grows) at the stable (unstable) rates."""

    subspace: Subspace
    weights: dict            # mode id -> WeightedSeminorm, all sharing ker = complement
    tags: dict               # mode id -> "S" | "U"
    sup_growth: dict         # mode id -> sampled sup of the reduced rate
    beta_stable: float | None   # jump factor leaving a semi-contracting mode (> 1)
    beta_unstable: float | None  # jump factor leaving an expanding mode (in (0,1))
    eta_stable: float | None     # decay rate on semi-contracting modes (> 0)
    eta_unstable: float | None   # growth bound on expanding modes (> 0)
    m_lower: float
    m_upper: float
    sample_scheme: dict

    def __post_init__(self):
        if self.beta_stable is not None and self.beta_stable < 1.0:
            raise ValueError(f"stable jump factor must be >= 1, got {self.beta_stable}")
        if self.beta_unstable is not None and not (0.0 < self.beta_unstable < 1.0):
            raise ValueError(f"unstable jump factor must lie in (0,1), got {self.beta_unstable}")
        for name in ("eta_stable", "eta_unstable"):
            value = getattr(self, name)
            if value is not None and value <= 0.0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0.0 < self.m_lower <= self.m_upper:
            raise ValueError("weight scale bounds must satisfy 0 < m_lower <= m_upper")

    @property
    def stable_modes(self):
        return sorted(q for q, tag in self.tags.items() if tag == STABLE)

    @property
    def unstable_modes(self):
        return sorted(q for q, tag in self.tags.items() if tag == UNSTABLE)


@dataclass(frozen=True)
class DwellBounds:
    """Per-mode average dwell-time lower bounds (semi-contracting modes) and
    leave-time upper bounds (expanding modes), in seconds."""

    lower: dict  # mode id -> minimum average dwell
    upper: dict  # mode id -> maximum average leave
    provenance: str
    margin: float  # multiplicative margin applied to the constants; 0 means
                   # the boundary values of the open inequalities


def dwell_bounds_subspace(cert: SubspaceCertificate, margin: float = 0.0) -> DwellBounds:
    """Dwell bounds from one subspace certificate: tau_lower = ln(beta_S)/(2 eta_S)
    for S modes and tau_upper = -ln(beta_U)/(2 eta_U) for U modes."""
    lower = {}
    upper = {}
    for q in cert.stable_modes:
        if cert.beta_stable is None:
            continue
        if cert.eta_stable is None or cert.eta_stable <= 0:
            raise ValueError("stable rate must be positive to derive a dwell bound")
        beta = cert.beta_stable * (1.0 + margin)
        eta = cert.eta_stable * (1.0 - margin)
        lower[q] = math.log(beta) / (2.0 * eta)
    for q in cert.unstable_modes:
        if cert.beta_unstable is None:
            raise InfeasibleError(
                f"mode {q} is expanding but no unstable jump factor exists"
            )
        if cert.eta_unstable is None or cert.eta_unstable <= 0:
            raise ValueError("unstable rate must be positive to derive a leave bound")
        beta = min(cert.beta_unstable * (1.0 + margin), 1.0 - 1e-15)
        eta = cert.eta_unstable * (1.0 + margin)
        upper[q] = -math.log(beta) / (2.0 * eta)
    return DwellBounds(lower, upper, "per-subspace", margin)


def dwell_bounds_family(certs, margin: float = 0.0) -> DwellBounds:
    """Aggregate dwell bounds over a separating family of subspace certificates.

    Per-tag aggregation (example-consistent interpretation): a mode's dwell
    bound uses max ln(beta) and min eta over the subspaces where it carries
    that tag, so a mode that is semi-contracting on one subspace and expanding
    on another carries both bounds.
    """
    certs = list(certs)
    if not certs:
        raise ValueError("empty certificate list")
    if not check_separating([projector(c.subspace) for c in certs]):
        raise InfeasibleError("subspace seminorms do not form a separating family")
    mode_ids = sorted({q for c in certs for q in c.tags})
    lower = {}
    upper = {}
    for q in mode_ids:
        s_certs = [c for c in certs if c.tags.get(q) == STABLE]
        u_certs = [c for c in certs if c.tags.get(q) == UNSTABLE]
        if not s_certs and not u_certs:
            raise InfeasibleError(f"mode {q} carries no tag on any subspace")
        if s_certs:
            betas = [c.beta_stable for c in s_certs if c.beta_stable is not None]
            etas = [c.eta_stable for c in s_certs]
            if betas and all(e is not None for e in etas):
                beta = max(betas) * (1.0 + margin)
                eta = min(etas) * (1.0 - margin)
                lower[q] = math.log(beta) / (2.0 * eta)
        if u_certs:
            betas = [c.beta_unstable for c in u_certs]
            etas = [c.eta_unstable for c in u_certs]
            if any(b is None for b in betas):
                raise InfeasibleError(f"mode {q} is expanding without an unstable jump factor")
            beta = min(max(betas) * (1.0 + margin), 1.0 - 1e-15)
            eta = min(etas) * (1.0 + margin)
            upper[q] = -math.log(beta) / (2.0 * eta)
    return DwellBounds(lower, upper, "family-aggregated", margin)


@dataclass(frozen=True)
class DecayConstants:
    """Exponential envelope of the certificate value V and the projected norm:
    V(t) <= value_prefactor * exp(-value_rate (t-t0)) V(t0) and
    ||Pi y(t)|| <= norm_prefactor * exp(-norm_rate (t-t0)) ||Pi y(t0)||."""

    value_rate: float      # decay rate of the quadratic value
    value_prefactor: float
    norm_prefactor: float
    norm_rate: float       # value_rate / 2

    def __post_init__(self):
        if self.norm_prefactor < 1.0 - 1e-12:
            raise ValueError("norm prefactor below 1 is impossible")


def decay_constants(cert: SubspaceCertificate, tau_lower: float | None,
                    tau_upper: float | None, n_lower: float = 1.0,
                    n_upper: float = 1.0) -> DecayConstants:
    """Decay rate and prefactors for average dwell times satisfying the bounds
    strictly: tau_lower above the stable bound, tau_upper below the unstable one."""
    terms = []
    log_sum = 0.0
    if cert.stable_modes:
        beta = cert.beta_stable if cert.beta_stable is not None else 1.0
        eta = cert.eta_stable
        if eta is None:
            raise ValueError("certificate has no stable rate")
        jump = math.log(beta) / tau_lower if (tau_lower is not None and beta > 1.0) else 0.0
        term = -2.0 * eta + jump
        if term >= 0:
            raise InfeasibleError("average dwell time violates the stable bound")
        terms.append(abs(term))
        log_sum += len(cert.stable_modes) * n_lower * math.log(beta)
    if cert.unstable_modes:
        beta = cert.beta_unstable
        eta = cert.eta_unstable
        if beta is None or eta is None:
            raise ValueError("certificate has no unstable constants")
        if tau_upper is None:
            raise ValueError("expanding modes need an average leave time")
        term = 2.0 * eta + math.log(beta) / tau_upper
        if term >= 0:
            raise InfeasibleError("average leave time violates the unstable bound")
        terms.append(abs(term))
        log_sum += len(cert.unstable_modes) * n_upper * math.log(beta)
    if not terms:
        raise ValueError("certificate classifies no modes")
    rate = min(terms)
    prefactor = math.exp(log_sum)
    norm_prefactor = math.sqrt(prefactor * cert.m_upper / cert.m_lower)
    return DecayConstants(rate, prefactor, norm_prefactor, rate / 2.0)


def build_certificate(system: SwitchedSystem, s: Subspace, weights_by_mode: dict,
                      samples: SampleSet, beta_stable: float | None = None,
                      beta_unstable: float | None = None,
                      eta_stable: float | None = None,
                      eta_unstable: float | None = None,
                      invariance_tol: float = 1e-9) -> SubspaceCertificate:
    """Assemble a certificate from explicit weights, deriving any constants not
    supplied from the tightest feasible values."""
    weights = {}
    for mode in system.modes:
        if mode.id not in weights_by_mode:
            raise ValueError(f"missing weight for mode {mode.id}")
        inv = check_invariance(mode, s, samples, tol=invariance_tol)
        if not inv.ok:
            raise InfeasibleError(
                f"complement is not invariant under mode {mode.id} "
                f"(residual {inv.worst_residual:.3e} at {inv.worst_point})"
            )
        p = weights_by_mode[mode.id]
        weights[mode.id] = p if isinstance(p, WeightedSeminorm) else reduce_weight(p, s)
    tags = {}
    sups = {}
    for mode in system.modes:
        tag, sup = classify_mode(mode, weights[mode.id], samples)
        tags[mode.id], sups[mode.id] = tag, sup
    stable = [q for q, t in tags.items() if t == STABLE]
    unstable = [q for q, t in tags.items() if t == UNSTABLE]
    mode_ids = [m.id for m in system.modes]
    if beta_stable is None and stable and len(mode_ids) > 1:
        beta_stable = max(
            tightest_beta(weights[q], weights[r])
            for q in stable for r in mode_ids if r != q
        )
    if beta_unstable is None and unstable and len(mode_ids) > 1:
        beta_unstable = max(
            tightest_beta(weights[q], weights[r])
            for q in unstable for r in mode_ids if r != q
        )
        if beta_unstable >= 1.0:
            raise InfeasibleError(
                "some switch out of an expanding mode does not drop the weight "
                f"(tightest unstable jump factor {beta_unstable:.6g} >= 1)"
            )
    if eta_stable is None and stable:
        eta_stable = min(-sups[q] for q in stable)
    if eta_unstable is None and unstable:
        eta_unstable = max(max(sups[q] for q in unstable), 1e-300)
    m_lowers, m_uppers = zip(*(tightest_m_bounds(w) for w in weights.values()))
    return SubspaceCertificate(
        subspace=s, weights=weights, tags=tags, sup_growth=sups,
        beta_stable=beta_stable, beta_unstable=beta_unstable,
        eta_stable=eta_stable, eta_unstable=eta_unstable,
        m_lower=min(m_lowers), m_upper=max(m_uppers),
        sample_scheme=dict(samples.scheme),
    )


def search_scalar_weights(system: SwitchedSystem, s: Subspace, samples: SampleSet,
                          beta_stable: float | None = None,
                          beta_unstable: float | None = None,
                          eta_stable: float | None = None,
                          eta_unstable: float | None = None,
                          escalation: float = math.e) -> SubspaceCertificate:
    """Search scalar weights p_q * Pi over the given subspace.

    Classification and rates are weight-independent for scalar weights, so the
    search only has to order the scales: every switch out of an expanding mode
    must strictly drop the weight. That is feasible iff at most one mode is
    expanding on this subspace (two expanding modes need each other's weight to
    be strictly smaller). Semi-contracting modes share weight 1 and the
    expanding mode, if present, gets the escalation ratio: the stable jump
    factor when one is supplied (so configured constants are reproduced
    exactly), the reciprocal of a supplied unstable jump factor, otherwise the
    default ratio e.
    """
    pi = projector(s).matrix
    unit = reduce_weight(pi, s)
    sups = {}
    for mode in system.modes:
        inv = check_invariance(mode, s, samples)
        if not inv.ok:
            raise InfeasibleError(
                f"complement is not invariant under mode {mode.id} "
                f"(residual {inv.worst_residual:.3e})"
            )
        sups[mode.id] = tightest_eta(mode, unit, samples)
    stable = [q for q, v in sups.items() if v < 0.0]
    unstable = [q for q, v in sups.items() if v >= 0.0]
    if not stable:
        raise InfeasibleError(
            "no semi-contracting mode on this subspace: scalar weights cannot "
            "make every expanding-mode exit drop"
        )
    if len(unstable) >= 2:
        raise InfeasibleError(
            "two expanding modes each require the other's weight to be strictly "
            "smaller; scalar weights are infeasible"
        )
    if unstable:
        if beta_stable is not None:
            ratio = beta_stable
        elif beta_unstable is not None:
            ratio = 1.0 / beta_unstable
        else:
            ratio = escalation
        if ratio <= 1.0:
            raise InfeasibleError("escalation ratio must exceed 1 for a strict drop")
    scales = {q: 1.0 for q in stable}
    for q in unstable:
        scales[q] = ratio
    weights = {q: scales[q] * pi for q in scales}
    return build_certificate(
        system, s, weights, samples,
        beta_stable=beta_stable, beta_unstable=beta_unstable,
        eta_stable=eta_stable, eta_unstable=eta_unstable,
    )
