"""Batch scoring, AUC evaluation, synthetic data and per-layer reports."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from subscan.io import (
    ActivationMatrix,
    BackgroundModel,
    build_background,
    load_matrix,
    load_ragged,
    truncate_jointly,
)
from subscan.ltss import ScanConfig, ScanResult, scan_sample
from subscan.pvalues import pvalues_for_sample

logger = logging.getLogger(__name__)

# recorded in every report so runs can be reproduced elsewhere
RNG_ALGORITHM = "PCG64"


class ManifestError(ValueError):
    """Invalid manifest or a validation failure inside one of its layers."""


# --------------------------------------------------------------------------
# scoring and AUC
# --------------------------------------------------------------------------


def score_dataset(
    model: BackgroundModel, matrix: ActivationMatrix, config: ScanConfig = ScanConfig()
) -> list[ScanResult]:
    """Scan every row of ``matrix`` against ``model``, preserving row order."""
    if matrix.n_nodes != model.n_nodes:
        raise ValueError(
            f"evaluation matrix has {matrix.n_nodes} nodes, background model has {model.n_nodes}"
        )
    return [scan_sample(pvalues_for_sample(model, row), config) for row in matrix.values]


@dataclass
class LabeledScores:
    clean_scores: np.ndarray
    anomalous_scores: np.ndarray

    def auc(self) -> float:
        return compute_auc(self.clean_scores, self.anomalous_scores)


def compute_auc(clean_scores: Iterable[float], anomalous_scores: Iterable[float]) -> float:
    """Mann-Whitney AUC: P(anomalous > clean) with ties counted one half.

    Computed exactly in O(n log n): for each anomalous score, count clean
    scores strictly below it plus half of those equal to it.
    """
    clean = np.sort(np.asarray(clean_scores, dtype=np.float64).ravel())
    anomalous = np.asarray(anomalous_scores, dtype=np.float64).ravel()
    if clean.size == 0 or anomalous.size == 0:
        raise ValueError("AUC needs at least one clean and one anomalous score")
    below = np.searchsorted(clean, anomalous, side="left")
    at_or_below = np.searchsorted(clean, anomalous, side="right")
    # 2*wins + ties is an exact integer
    doubled = int(np.sum(below + at_or_below))
    return doubled / (2 * clean.size * anomalous.size)


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Standard-normal activations with a mean shift on a hidden node subset."""

    j_nodes: int = 512
    m_background: int = 800
    n_clean: int = 200
    n_anomalous: int = 100
    affected_fraction: float = 0.1
    shift_sigma: float = 3.0
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.j_nodes, self.m_background) < 1:
            raise ValueError("j_nodes and m_background must be >= 1")
        if min(self.n_clean, self.n_anomalous) < 0:
            raise ValueError("sample counts must be >= 0")
        if not 0.0 < self.affected_fraction <= 1.0:
            raise ValueError("affected_fraction must lie in (0, 1]")
        if self.shift_sigma < 0:
            raise ValueError("shift_sigma must be >= 0")

    @property
    def n_affected(self) -> int:
        return max(1, int(round(self.affected_fraction * self.j_nodes)))


@dataclass(eq=False)
class SyntheticData:
    background: ActivationMatrix
    clean: ActivationMatrix
    anomalous: ActivationMatrix
    true_subset: tuple[int, ...]


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Draw background, clean and anomalous matrices from one seeded stream.

    Draw order is fixed (affected nodes, background, clean, anomalous) and
    does not depend on ``shift_sigma``, so specs differing only in the shift
    share every underlying normal draw.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    true_subset = np.sort(rng.choice(spec.j_nodes, size=spec.n_affected, replace=False))
    background = rng.standard_normal((spec.m_background, spec.j_nodes))
    clean = rng.standard_normal((spec.n_clean, spec.j_nodes))
    anomalous = rng.standard_normal((spec.n_anomalous, spec.j_nodes))
    anomalous[:, true_subset] += spec.shift_sigma
    return SyntheticData(
        background=ActivationMatrix(background, layer_name="synthetic"),
        clean=ActivationMatrix(clean, layer_name="synthetic"),
        anomalous=ActivationMatrix(anomalous, layer_name="synthetic"),
        true_subset=tuple(int(j) for j in true_subset),
    )


# --------------------------------------------------------------------------
# subset recovery
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Recovery:
    """Overlap between a detected subset and the ground-truth nodes.

    ``empty`` flags an empty detection, for which precision is undefined
    and reported as 0.
    """

    precision: float
    recall: float
    jaccard: float
    empty: bool = False


def subset_recovery(result: ScanResult | Iterable[int], true_subset: Iterable[int]) -> Recovery:
    detected = set(result.subset if isinstance(result, ScanResult) else result)
    truth = set(true_subset)
    hits = len(detected & truth)
    union = len(detected | truth)
    return Recovery(
        precision=hits / len(detected) if detected else 0.0,
        recall=hits / len(truth) if truth else 0.0,
        jaccard=hits / union if union else 0.0,
        empty=not detected,
    )


def mean_recovery(results: Iterable[ScanResult], true_subset: Iterable[int]) -> dict:
    truth = tuple(true_subset)
    recs = [subset_recovery(r, truth) for r in results]
    if not recs:
        return {"precision": 0.0, "recall": 0.0, "jaccard": 0.0, "n_empty": 0}
    return {
        "precision": float(np.mean([r.precision for r in recs])),
        "recall": float(np.mean([r.recall for r in recs])),
        "jaccard": float(np.mean([r.jaccard for r in recs])),
        "n_empty": sum(r.empty for r in recs),
    }


# --------------------------------------------------------------------------
# manifests and reports
# --------------------------------------------------------------------------


@dataclass
class LayerEntry:
    name: str
    background: Path
    clean: Path
    anomalous: Path
    format: str = "binary"
    dims: str | None = None
    true_subset: Path | None = None


@dataclass
class DatasetManifest:
    """Per-layer background/clean/anomalous files plus the truncation rule.

    JSON layout::

        {"format": "binary", "truncate": "auto",
         "layers": [{"name": "relu_2", "dims": "80, 4096",
                     "background": "bg.bin", "clean": "cl.bin",
                     "anomalous": "ad.bin", "true_subset": "truth.txt"}]}

    ``format`` may be ``binary``, ``csv`` or ``ragged`` (one variable-length
    sample per line) and can be overridden per layer. ``truncate`` is
    ``"auto"`` (shortest sample across all three sets), an integer, or null
    to require equal widths. Relative paths resolve against the manifest.
    """

    layers: list[LayerEntry]
    truncate: int | str | None = "auto"


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("layers"), list) or not raw["layers"]:
        raise ManifestError(f"{path}: manifest needs a nonempty 'layers' list")
    base = path.parent
    default_fmt = raw.get("format", "binary")
    truncate = raw.get("truncate", "auto")
    if not (truncate is None or truncate == "auto" or isinstance(truncate, int)):
        raise ManifestError(f"{path}: 'truncate' must be 'auto', an integer or null")

    layers = []
    for i, item in enumerate(raw["layers"]):
        name = item.get("name", f"layer{i}")
        missing = [k for k in ("background", "clean", "anomalous") if k not in item]
        if missing:
            raise ManifestError(f"layer '{name}': missing {', '.join(missing)}")
        fmt = item.get("format", default_fmt)
        if fmt not in ("binary", "csv", "ragged"):
            raise ManifestError(f"layer '{name}': unknown format {fmt!r}")
        truth = item.get("true_subset")
        layers.append(
            LayerEntry(
                name=name,
                background=base / item["background"],
                clean=base / item["clean"],
                anomalous=base / item["anomalous"],
                format=fmt,
                dims=item.get("dims"),
                true_subset=base / truth if truth else None,
            )
        )
    return DatasetManifest(layers=layers, truncate=truncate)


def load_subset_file(path: str | Path) -> tuple[int, ...]:
    """Newline-delimited node indices."""
    lines = Path(path).read_text(encoding="utf-8").split()
    return tuple(int(tok) for tok in lines)


@dataclass
class LayerRow:
    layer: str
    dims: str
    auc: float
    n_bg: int
    n_clean: int
    n_anom: int


def _sig6(x: float) -> float:
    return float(f"{x:.6g}")


@dataclass
class EvaluationReport:
    config: ScanConfig
    seed: int
    layers: list[LayerRow] = field(default_factory=list)
    recovery: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": {
                "alpha_max": _sig6(self.config.alpha_max),
                "scorer": self.config.scorer,
                "rng": RNG_ALGORITHM,
            },
            "layers": [
                {
                    "layer": row.layer,
                    "dims": row.dims,
                    "auc": _sig6(row.auc),
                    "n_bg": row.n_bg,
                    "n_clean": row.n_clean,
                    "n_anom": row.n_anom,
                }
                for row in self.layers
            ],
            "recovery": {
                name: {
                    "precision": _sig6(rec["precision"]),
                    "recall": _sig6(rec["recall"]),
                    "jaccard": _sig6(rec["jaccard"]),
                    "n_empty": rec["n_empty"],
                }
                for name, rec in self.recovery.items()
            },
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def evaluate_layer(
    background: ActivationMatrix,
    clean: ActivationMatrix,
    anomalous: ActivationMatrix,
    config: ScanConfig = ScanConfig(),
    name: str = "",
    dims: str | None = None,
    true_subset: Iterable[int] | None = None,
) -> tuple[LayerRow, dict | None]:
    """Build the background model, scan both evaluation sets and compute AUC."""
    model = build_background(background)
    clean_results = score_dataset(model, clean, config)
    anom_results = score_dataset(model, anomalous, config)
    auc = compute_auc([r.score for r in clean_results], [r.score for r in anom_results])
    row = LayerRow(
        layer=name,
        dims=dims if dims is not None else str(model.n_nodes),
        auc=auc,
        n_bg=background.n_samples,
        n_clean=clean.n_samples,
        n_anom=anomalous.n_samples,
    )
    recovery = mean_recovery(anom_results, true_subset) if true_subset is not None else None
    return row, recovery


def _load_layer(entry: LayerEntry, truncate: int | str | None) -> list[ActivationMatrix]:
    paths = (entry.background, entry.clean, entry.anomalous)
    if entry.format == "ragged":
        sets = [load_ragged(p) for p in paths]
        return truncate_jointly(*sets, target_len=truncate if truncate is not None else "auto")
    mats = [load_matrix(p, entry.format, layer_name=entry.name) for p in paths]
    widths = {m.n_nodes for m in mats}
    if truncate is None:
        if len(widths) != 1:
            raise ValueError(f"node counts differ across sets: {[m.n_nodes for m in mats]}")
        return mats
    target = min(widths) if truncate == "auto" else int(truncate)
    if widths == {target}:
        return mats
    return truncate_jointly(*mats, target_len=target)


def evaluate_manifest(
    manifest: DatasetManifest, config: ScanConfig = ScanConfig(), seed: int = 0
) -> EvaluationReport:
    report = EvaluationReport(config=config, seed=seed)
    for entry in manifest.layers:
        try:
            background, clean, anomalous = _load_layer(entry, manifest.truncate)
            truth = load_subset_file(entry.true_subset) if entry.true_subset else None
            row, recovery = evaluate_layer(
                background, clean, anomalous, config, entry.name, entry.dims, truth
            )
        except OSError as exc:
            raise OSError(exc.errno, f"layer '{entry.name}': {exc.strerror or exc}", exc.filename) from exc
        except ValueError as exc:
            raise ManifestError(f"layer '{entry.name}': {exc}") from exc
        logger.info("layer %s: auc=%.4f", entry.name, row.auc)
        report.layers.append(row)
        if recovery is not None:
            report.recovery[entry.name] = recovery
    return report
