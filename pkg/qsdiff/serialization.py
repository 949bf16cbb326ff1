"""Conversion of results to documents, JSON and CSV.

Results are frozen dataclasses holding numpy arrays; documents are the
pydantic models of ``qsdiff.schemas``. ``to_document`` picks the converter
for a result and ``write_document`` renders any document with orjson.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Callable
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel

from qsdiff._utils import dumps_json
from qsdiff.boundary import BoundaryClassification
from qsdiff.config import Hints, ModelSpec, NumericsConfig, TabulatedFunction
from qsdiff.expr import Expr
from qsdiff.model import DiffusionModel, SampledFunction, TabulatedCoefficient, TailDiagnosis
from qsdiff.montecarlo import SurvivorStats
from qsdiff.schemas import (
    BoundaryDocument,
    DensityDocument,
    EigenDocument,
    EvidenceDocument,
    SurvivorStatsDocument,
    TailDocument,
    VerdictDocument,
)
from qsdiff.spectral import EigenResult
from qsdiff.verdict import Verdict


def finite_or_none(value: float | None) -> float | None:
    """Map NaN to None; infinities pass through for the "inf" sentinel."""
    if value is None or math.isnan(value):
        return None
    return float(value)


def tail_document(diag: TailDiagnosis) -> TailDocument:
    return TailDocument(
        verdict=diag.verdict.value,
        value=finite_or_none(diag.value),
        growth_exponent_estimate=finite_or_none(diag.growth_exponent_estimate),
        cutoffs_used=[float(c) for c in diag.cutoffs_used],
        confidence=diag.confidence.value,
    )


def boundary_document(boundary: BoundaryClassification) -> BoundaryDocument:
    return BoundaryDocument(
        at_zero=boundary.at_zero.value,
        at_infinity=boundary.at_infinity.value,
        accessible_at_infinity=boundary.accessible_at_infinity,
        recurrent_unkilled=boundary.recurrent_unkilled,
        scale_tail=tail_document(boundary.scale_tail),
        speed_tail=tail_document(boundary.speed_tail),
        accessibility_integral=tail_document(boundary.integrals.accessibility),
        entrance_integral=tail_document(boundary.integrals.entrance),
    )


def density_document(density: SampledFunction) -> DensityDocument:
    return DensityDocument(
        x=density.grid.tolist(), density=np.exp(density.log_values).tolist()
    )


def verdict_document(verdict: Verdict) -> VerdictDocument:
    evidence = verdict.evidence
    return VerdictDocument(
        outcome=verdict.outcome.value,
        mortality_rate=finite_or_none(verdict.mortality_rate),
        escape_rate=finite_or_none(verdict.escape_rate),
        reason=verdict.reason,
        notes=list(verdict.notes),
        qsd=density_document(verdict.qsd) if verdict.qsd is not None else None,
        evidence=EvidenceDocument(
            lambda0=finite_or_none(evidence.lambda0),
            kappa_liminf=evidence.kappa_liminf,
            kappa_limsup=evidence.kappa_limsup,
            kappa_limit_exists=evidence.kappa_limit_exists,
            boundary=boundary_document(evidence.boundary)
            if evidence.boundary is not None
            else None,
            theorem_applied=evidence.theorem_applied.value,
        ),
    )


def eigen_document(result: EigenResult, phi_csv: str | None = None) -> EigenDocument:
    return EigenDocument(
        index=0,
        lambda_=result.lambda0,
        bracket=result.bracket,
        x_max_used=result.x_max_used,
        x_reliable=result.x_reliable,
        l1_mass=tail_document(result.l1_mass),
        l2_mass=tail_document(result.l2_mass),
        schedule=[tuple(map(float, item)) for item in result.schedule],
        phi_csv=phi_csv,
    )


def stats_document(stats: SurvivorStats) -> SurvivorStatsDocument:
    return SurvivorStatsDocument(
        paths=stats.paths,
        dt=stats.dt,
        t_final=stats.t_final,
        seed=stats.seed,
        record_times=stats.record_times.tolist(),
        survivors=stats.survivors.tolist(),
        survival_prob=stats.survival_prob.tolist(),
        absorbed=stats.absorbed.tolist(),
        bin_edges=stats.bin_edges.tolist(),
        histogram=stats.histogram.tolist(),
        overflow=stats.overflow.tolist(),
        step_too_coarse=stats.step_too_coarse,
        first_step_crossing=stats.first_step_crossing,
    )


def _coefficient_spec(fn: Any) -> str | TabulatedFunction:
    if isinstance(fn, Expr):
        return fn.source
    if isinstance(fn, TabulatedCoefficient):
        return fn.source
    raise TypeError(f'Cannot serialize coefficient {fn!r}')


def model_document(model: DiffusionModel) -> ModelSpec:
    """The model file describing ``model``."""
    hints: Hints = model.hints
    numerics: NumericsConfig = model.numerics
    return ModelSpec(
        drift=_coefficient_spec(model.drift),
        kappa=_coefficient_spec(model.killing),
        alpha=model.alpha,
        hints=hints,
        numerics=numerics,
    )


_CONVERTERS: list[tuple[type, Callable[[Any], BaseModel]]] = [
    (Verdict, verdict_document),
    (EigenResult, eigen_document),
    (SurvivorStats, stats_document),
    (DiffusionModel, model_document),
    (TailDiagnosis, tail_document),
    (BoundaryClassification, boundary_document),
]


def to_document(obj: Any) -> BaseModel:
    """Convert a result object to its document model.

    Raises:
        TypeError: If no document describes the object.

    """
    if isinstance(obj, BaseModel):
        return obj
    for kind, convert in _CONVERTERS:
        if isinstance(obj, kind):
            return convert(obj)
    raise TypeError(f'No document for {type(obj).__name__}')


def render_json(obj: Any) -> bytes:
    """Render a result or document as indented JSON bytes."""
    document = to_document(obj)
    return dumps_json(document.model_dump(mode='json', by_alias=True)) + b'\n'


def write_json(obj: Any, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(render_json(obj))
    return path


def write_csv(path: str | Path, header: list[str], columns: list[np.ndarray]) -> Path:
    """Write columns of floats with shortest round-trip formatting."""
    path = Path(path)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in zip(*columns, strict=True):
            writer.writerow([repr(float(v)) for v in row])
    return path
