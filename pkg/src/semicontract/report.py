"""Analysis pipeline: runs the certificate checks over a configuration and
assembles the machine-readable report."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

import numpy as np

from .certificates import (
    DEFAULT_MARGIN,
    InfeasibleError,
    SubspaceCertificate,
    build_certificate,
    check_rate,
    check_switch_coupling,
    decay_constants,
    dwell_bounds_family,
    dwell_bounds_subspace,
    search_scalar_weights,
    tightest_beta,
    tightest_eta,
)
from .linalg import PSD_TOL
from .subspaces import check_invariance, check_separating, orthonormalize, projector
from .system import ConfigBundle, SampleSet, default_samples, sample_domain

SCHEMA_VERSION = 1
SAMPLED_EVIDENCE_NOTE = (
    "pass verdicts are sampled evidence over the domain box, not a proof"
)


def worker_count() -> int:
    """Parallelism cap from SEMICONTRACT_THREADS (default: sequential)."""
    raw = os.environ.get("SEMICONTRACT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def config_digest(raw: dict) -> str:
    return hashlib.sha256(
        json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def make_samples(bundle: ConfigBundle, grid: int | None, random_count: int | None,
                 seed: int) -> SampleSet:
    if grid is None and random_count is None:
        return default_samples(bundle.system, seed=seed)
    return sample_domain(bundle.system, grid_per_axis=grid or 0,
                         random_count=random_count or 0, seed=seed)


def analyze(bundle: ConfigBundle, samples: SampleSet, tol: float = PSD_TOL,
            margin: float = DEFAULT_MARGIN, search_weights: bool = False,
            seed: int = 0) -> dict:
    """Invariance -> classification -> condition checks -> constants ->
    per-subspace and family bounds -> decay constants."""
    system = bundle.system
    subspaces = {
        spec.name: orthonormalize(spec.span, ambient=system.dimension)
        for spec in bundle.subspaces
    }
    if not subspaces:
        raise InfeasibleError("configuration declares no subspaces")

    verdicts: list[dict] = []
    cert_specs = {spec.subspace: spec for spec in bundle.certificates}
    missing = sorted(set(subspaces) - set(cert_specs))
    if missing and not search_weights:
        raise InfeasibleError(
            f"no certificates for subspaces {missing}; supply P matrices or use weight search"
        )

    def analyze_subspace(name: str):
        # verdicts are collected locally and merged in name order so that
        # threaded runs produce byte-identical reports
        local_verdicts: list[dict] = []

        def record(check: str, ok: bool) -> bool:
            local_verdicts.append({"name": check, "ok": bool(ok)})
            return ok

        s = subspaces[name]
        spec = cert_specs.get(name)
        constants = dict(
            beta_stable=spec.beta_stable if spec else None,
            beta_unstable=spec.beta_unstable if spec else None,
            eta_stable=spec.eta_stable if spec else None,
            eta_unstable=spec.eta_unstable if spec else None,
        )
        if search_weights or spec is None or not spec.weights:
            cert = search_scalar_weights(system, s, samples, **constants)
        else:
            cert = build_certificate(system, s, spec.weights, samples, **constants)

        section: dict = {
            "name": name,
            "dimension": s.dim,
            "basis": s.basis.T.tolist(),
            "invariance": {},
            "modes": {},
            "coupling": {},
            "constants": {},
            "dwell_bounds": {},
        }
        for mode in system.modes:
            inv = check_invariance(mode, s, samples, tol=max(tol, 1e-9))
            record(f"{name}:invariance:mode{mode.id}", inv.ok)
            section["invariance"][str(mode.id)] = {
                "ok": inv.ok,
                "worst_residual": inv.worst_residual,
                "worst_point": inv.worst_point.tolist(),
                "tolerance": max(tol, 1e-9),
            }
        tightest = {}
        for mode in system.modes:
            tag = cert.tags[mode.id]
            eta = cert.eta_stable if tag == "S" else cert.eta_unstable
            rate = check_rate(mode, cert.weights[mode.id], eta, tag == "S", samples, tol)
            record(f"{name}:rate:mode{mode.id}", rate.ok)
            tight = tightest_eta(mode, cert.weights[mode.id], samples)
            tightest[mode.id] = tight
            section["modes"][str(mode.id)] = {
                "tag": tag,
                "sup_growth": cert.sup_growth[mode.id],
                "tightest_eta": tight,
                "rate_check": {
                    "ok": rate.ok,
                    "value": rate.sup_growth,
                    "bound": rate.bound,
                    "margin": rate.margin,
                    "tolerance": rate.tolerance,
                    "worst_point": rate.worst_point.tolist(),
                },
            }
        for q in [m.id for m in system.modes]:
            for r in [m.id for m in system.modes]:
                if q == r:
                    continue
                tag = cert.tags[q]
                beta = cert.beta_stable if tag == "S" else cert.beta_unstable
                if beta is None:
                    continue
                coupling = check_switch_coupling(cert.weights[q], cert.weights[r], beta)
                record(f"{name}:coupling:{q}->{r}", coupling.ok)
                section["coupling"][f"{q}->{r}"] = {
                    "ok": coupling.ok,
                    "exited_tag": tag,
                    "ratio": coupling.ratio,
                    "bound": coupling.bound,
                    "margin": coupling.margin,
                    "tolerance": coupling.tolerance,
                }
        stable_ids = cert.stable_modes
        unstable_ids = cert.unstable_modes
        section["constants"] = {
            "beta_stable": cert.beta_stable,
            "beta_unstable": cert.beta_unstable,
            "eta_stable": cert.eta_stable,
            "eta_unstable": cert.eta_unstable,
            "m_lower": cert.m_lower,
            "m_upper": cert.m_upper,
            "tightest_beta_stable": max(
                (tightest_beta(cert.weights[q], cert.weights[r])
                 for q in stable_ids for r in cert.weights if r != q),
                default=None,
            ),
            "tightest_beta_unstable": max(
                (tightest_beta(cert.weights[q], cert.weights[r])
                 for q in unstable_ids for r in cert.weights if r != q),
                default=None,
            ),
            "tightest_eta_stable": min((-tightest[q] for q in stable_ids), default=None),
            "tightest_eta_unstable": max((tightest[q] for q in unstable_ids), default=None),
        }
        bounds = dwell_bounds_subspace(cert, margin=margin)
        section["dwell_bounds"] = {
            "lower": {str(q): v for q, v in sorted(bounds.lower.items())},
            "upper": {str(q): v for q, v in sorted(bounds.upper.items())},
            "margin": margin,
            "boundary": "open" if margin == 0.0 else "closed-usable",
        }
        return section, cert, local_verdicts

    names = sorted(subspaces)
    workers = worker_count()
    if workers > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(analyze_subspace, names))
    else:
        results = [analyze_subspace(name) for name in names]
    sections = {name: section for name, (section, _, _) in zip(names, results)}
    certs = {name: cert for name, (_, cert, _) in zip(names, results)}
    for _, _, local in results:
        verdicts.extend(local)

    def record(check: str, ok: bool) -> bool:
        verdicts.append({"name": check, "ok": bool(ok)})
        return ok

    separating = check_separating([projector(subspaces[n]) for n in names])
    record("family:separating", separating)
    family: dict = {
        "separating": separating,
        "interpretation": (
            "per-tag aggregation: a mode's bounds come from the subspaces where "
            "it carries that tag (example-consistent interpretation)"
        ),
    }
    if separating:
        bounds = dwell_bounds_family(certs.values(), margin=margin)
        family["dwell_bounds"] = {
            "lower": {str(q): v for q, v in sorted(bounds.lower.items())},
            "upper": {str(q): v for q, v in sorted(bounds.upper.items())},
            "margin": margin,
            "boundary": "open" if margin == 0.0 else "closed-usable",
        }
        lowers = list(bounds.lower.values())
        uppers = list(bounds.upper.values())
        if lowers and uppers and max(lowers) < min(uppers):
            reference = 0.5 * (max(lowers) + min(uppers))
            decay = {}
            for name in names:
                dc = decay_constants(certs[name], reference, reference)
                decay[name] = {
                    "value_rate": dc.value_rate,
                    "value_prefactor": dc.value_prefactor,
                    "norm_prefactor": dc.norm_prefactor,
                    "norm_rate": dc.norm_rate,
                }
            family["decay_at_reference_dwell"] = {
                "reference_dwell": reference,
                "per_subspace": decay,
                "norm_rate": min(d["norm_rate"] for d in decay.values()),
            }
            record("family:dwell_window_nonempty", True)
        elif lowers and uppers:
            record("family:dwell_window_nonempty", False)

    return {
        "schema_version": SCHEMA_VERSION,
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "provenance": {
            "config_sha256": config_digest(bundle.raw),
            "seed": seed,
            "tolerance": tol,
            "margin": margin,
            "sample_scheme": dict(samples.scheme),
            "threads": worker_count(),
            "search_weights": search_weights,
            "note": SAMPLED_EVIDENCE_NOTE,
        },
        "subspaces": [sections[n] for n in names],
        "family": family,
        "verdicts": verdicts,
        "all_pass": all(v["ok"] for v in verdicts),
    }


def certificates_from_report(bundle: ConfigBundle, samples: SampleSet,
                             search_weights: bool = False):
    """Rebuild the certificate objects the analysis used (for simulation)."""
    system = bundle.system
    certs = {}
    cert_specs = {spec.subspace: spec for spec in bundle.certificates}
    for spec in bundle.subspaces:
        s = orthonormalize(spec.span, ambient=system.dimension)
        cspec = cert_specs.get(spec.name)
        constants = dict(
            beta_stable=cspec.beta_stable if cspec else None,
            beta_unstable=cspec.beta_unstable if cspec else None,
            eta_stable=cspec.eta_stable if cspec else None,
            eta_unstable=cspec.eta_unstable if cspec else None,
        )
        if search_weights or cspec is None or not cspec.weights:
            certs[spec.name] = search_scalar_weights(system, s, samples, **constants)
        else:
            certs[spec.name] = build_certificate(system, s, cspec.weights, samples, **constants)
    return certs
