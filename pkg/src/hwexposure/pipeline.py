"""Batch orchestration: configuration, staged execution, report emission.

Stages run in a fixed order (surface -> exposure -> disparity -> bias); a
requested stage always gets its prerequisites computed in memory, but only the
requested stages write files. All report CSVs are emitted in deterministic
order with full-precision floats, so identical inputs produce byte-identical
reports regardless of the thread count.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import biasstats, disparity, exposure, ingest, zonal
from .errors import (
    ConfigError,
    DegenerateVarianceError,
    DomainError,
    EmptyPopulationError,
    EngineError,
    InsufficientGroupsError,
    InsufficientTractsError,
)
from .exposure import ALL_STRATUM, ExposureRecord, HWWeights
from .geometry import read_mask_geojson, read_tracts_geojson
from .grids import read_asc, read_xyz_csv

logger = logging.getLogger(__name__)

STAGES = ("surface", "exposure", "disparity", "bias")

_CONFIG_KEYS = {
    "years", "grid", "tracts", "urban_mask", "rac", "wac", "od", "stages",
    "hw_weights", "bin_counts", "epsilons", "thresholds", "strata", "threads",
    "out_dir",
}

_METRIC_DEGENERACIES = (
    InsufficientGroupsError,
    InsufficientTractsError,
    DomainError,
    EmptyPopulationError,
    DegenerateVarianceError,
)


class StageError(EngineError):
    """A stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class RunConfig:
    years: tuple[int, ...]
    grid: str
    tracts: str
    urban_mask: str | None
    rac: str | None
    wac: str | None
    od: str | None
    stages: tuple[str, ...]
    hw_weights: HWWeights
    bin_counts: tuple[int, ...]
    epsilons: tuple[float, ...]
    thresholds: tuple[float, ...]
    strata: bool
    threads: int
    out_dir: Path
    base_dir: Path
    raw: dict = field(repr=False)

    def path(self, template: str, year: int | None = None) -> Path:
        name = template.format(year=year) if year is not None else template
        p = Path(name)
        return p if p.is_absolute() else self.base_dir / p

    def input_paths(self) -> list[Path]:
        paths = [self.path(self.tracts)]
        if self.urban_mask:
            paths.append(self.path(self.urban_mask))
        for year in self.years:
            paths.append(self.path(self.grid, year))
            for template in (self.rac, self.wac, self.od):
                if template:
                    paths.append(self.path(template, year))
        return paths


def load_config(path: str, out_dir: str | None = None,
                threads: int | None = None) -> RunConfig:
    """Parse and validate a JSON run configuration.

    Relative paths are resolved against the config file's directory. Optional
    ``out_dir`` and ``threads`` override the config values.
    """
    config_path = Path(path)
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config key(s) {sorted(unknown)}")

    years = raw.get("years")
    if not years or not all(isinstance(y, int) for y in years):
        raise ConfigError("years must be a non-empty list of integers")
    for key in ("grid", "tracts"):
        if not raw.get(key):
            raise ConfigError(f"config key {key!r} is required")

    stages = tuple(raw.get("stages", STAGES))
    bad = [s for s in stages if s not in STAGES]
    if bad:
        raise ConfigError(f"unknown stage(s) {bad}; valid stages: {list(STAGES)}")
    if ("exposure" in stages or "disparity" in stages) and not (raw.get("rac") and raw.get("wac")):
        raise ConfigError("rac and wac paths are required for the exposure/disparity stages")
    if "bias" in stages and not raw.get("od"):
        raise ConfigError("od path is required for the bias stage")

    hw = raw.get("hw_weights", {"home": 0.794, "work": 0.206})
    try:
        hw_weights = HWWeights(home_fraction=hw["home"], work_fraction=hw["work"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"hw_weights must be {{'home': h, 'work': w}}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"invalid hw_weights: {exc}") from exc

    bin_counts = tuple(raw.get("bin_counts", [100, 10]))
    if any(not isinstance(b, int) or b < 2 for b in bin_counts):
        raise ConfigError(f"bin_counts must be integers >= 2, got {list(bin_counts)}")
    epsilons = tuple(float(e) for e in raw.get("epsilons", [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]))
    if any(e < 0 for e in epsilons):
        raise ConfigError("epsilons must be >= 0")
    thresholds = tuple(float(t) for t in raw.get("thresholds", [12.0, 10.0, 5.0]))
    if any(t <= 0 for t in thresholds):
        raise ConfigError("thresholds must be positive")
    threads_value = threads if threads is not None else int(raw.get("threads", 1))
    if threads_value < 1:
        raise ConfigError("threads must be >= 1")

    base_dir = config_path.parent
    if out_dir is not None:
        out_path = Path(out_dir)  # explicit override: resolved against the cwd
    else:
        out_path = Path(raw.get("out_dir", "out"))
        if not out_path.is_absolute():
            out_path = base_dir / out_path

    config = RunConfig(
        years=tuple(sorted(years)),
        grid=raw["grid"],
        tracts=raw["tracts"],
        urban_mask=raw.get("urban_mask"),
        rac=raw.get("rac"),
        wac=raw.get("wac"),
        od=raw.get("od"),
        stages=stages,
        hw_weights=hw_weights,
        bin_counts=bin_counts,
        epsilons=epsilons,
        thresholds=thresholds,
        strata=bool(raw.get("strata", True)),
        threads=threads_value,
        out_dir=out_path,
        base_dir=base_dir,
        raw=raw,
    )
    missing = [str(p) for p in config.input_paths() if not p.exists()]
    if missing:
        raise ConfigError(f"missing input file(s): {missing}")
    return config


@dataclass
class YearData:
    """Everything computed for one year, passed between stages."""

    year: int
    surface: zonal.TractSurface | None = None
    rac: ingest.WorkerTable | None = None
    wac: ingest.WorkerTable | None = None
    od: ingest.ODMatrix | None = None
    records: list[ExposureRecord] = field(default_factory=list)
    hw_records: list[ExposureRecord] = field(default_factory=list)
    error_records: list[exposure.ErrorRecord] = field(default_factory=list)
    dropped_weight: dict[str, int] = field(default_factory=dict)


@dataclass
class RunState:
    config: RunConfig
    classification: dict[str, str] | None = None
    years: dict[int, YearData] = field(default_factory=dict)
    manifest_stages: dict[str, dict] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)


def _strata(config: RunConfig) -> tuple[str, ...]:
    if config.strata and config.urban_mask:
        return (ALL_STRATUM, zonal.URBAN, zonal.RURAL)
    return (ALL_STRATUM,)


def _read_grid(path: Path):
    if path.suffix == ".asc":
        return read_asc(str(path))
    if path.suffix == ".csv":
        return read_xyz_csv(str(path))
    raise ConfigError(f"grid file must be .asc or .csv, got {path.name}")


def _float_text(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _display_path(path: Path, base_dir: Path) -> str:
    try:
        return str(path.relative_to(base_dir))
    except ValueError:
        return str(path)


# ----------------------------------------------------------------------------
# stages
# ----------------------------------------------------------------------------

def _stage_surface(state: RunState, write: bool) -> None:
    config = state.config
    tracts = read_tracts_geojson(str(config.path(config.tracts)))
    if config.urban_mask:
        polygons = read_mask_geojson(str(config.path(config.urban_mask)))
        mask = zonal.build_urban_mask(polygons, tracts, threads=config.threads)
        state.classification = mask.classification
    manifest: dict = {"tracts": len(tracts), "years": {}}
    for year in config.years:
        grid = _read_grid(config.path(config.grid, year))
        surface = zonal.build_tract_surface(grid, tracts, year, threads=config.threads)
        state.years[year] = YearData(year=year, surface=surface)
        manifest["years"][str(year)] = {
            "tracts_with_coverage": len(surface.entries),
            "excluded": list(surface.excluded),
        }
        if write:
            zonal.write_surface_csv(surface, str(config.out_dir / f"surface_{year}.csv"))
    if write and state.classification is not None:
        _write_csv(
            config.out_dir / "urban.csv",
            ["geoid", "stratum"],
            sorted(state.classification.items()),
        )
    state.manifest_stages["surface"] = manifest


def _stage_exposure(state: RunState, write: bool) -> None:
    config = state.config
    strata = _strata(config)
    manifest: dict = {"years": {}}
    exposure_rows = []
    error_rows = []
    for year in config.years:
        data = state.years[year]
        data.rac = ingest.aggregate_to_tracts(
            ingest.read_block_csv(str(config.path(config.rac, year)), ingest.RESIDENCE),
            ingest.RESIDENCE, year,
        )
        data.wac = ingest.aggregate_to_tracts(
            ingest.read_block_csv(str(config.path(config.wac, year)), ingest.WORKPLACE),
            ingest.WORKPLACE, year,
        )
        records = []
        records += exposure.compute_group_exposures(
            data.surface, data.rac, ingest.RAC_WAC_SCHEMAS, state.classification, strata
        )
        records += exposure.compute_group_exposures(
            data.surface, data.wac, ingest.RAC_WAC_SCHEMAS, state.classification, strata
        )
        data.records = records
        drops = {
            "rac": exposure.align_table(data.surface, data.rac).dropped_weight,
            "wac": exposure.align_table(data.surface, data.wac).dropped_weight,
        }
        if config.od:
            data.od = ingest.aggregate_od(
                ingest.read_od_csv(str(config.path(config.od, year))), year
            )
            hw_records, error_records = exposure.compute_hw_exposures(
                data.surface, data.od, ingest.OD_SCHEMAS, config.hw_weights,
                state.classification, strata,
            )
            data.hw_records = hw_records
            data.error_records = error_records
            drops["od"] = exposure.resolve_pairs(data.surface, data.od).dropped_weight
        data.dropped_weight = drops
        total_dropped = sum(drops.values())
        if total_dropped:
            logger.warning("year %d: dropped %d workers on unresolvable tracts/pairs: %s",
                           year, total_dropped, drops)
        manifest["years"][str(year)] = {
            "rac_tracts": len(data.rac.rows),
            "wac_tracts": len(data.wac.rows),
            "od_pairs": len(data.od.entries) if data.od else 0,
            "dropped_weight": drops,
            "records": len(records) + len(data.hw_records),
        }
        for r in records + [h for h in data.hw_records if h.locus == exposure.LOCUS_BLEND]:
            exposure_rows.append([
                r.year, r.group_key, r.locus, r.stratum,
                _float_text(r.mean), _float_text(r.p10), _float_text(r.p90),
                _float_text(r.weight),
            ])
        for e in data.error_records:
            error_rows.append([
                e.year, e.group_key, e.stratum,
                _float_text(e.error), _float_text(e.percent_error),
            ])
    if write:
        _write_csv(config.out_dir / "exposure.csv",
                   ["year", "group", "locus", "stratum", "mean", "p10", "p90", "weight"],
                   exposure_rows)
        if any(data.error_records for data in state.years.values()):
            _write_csv(config.out_dir / "error.csv",
                       ["year", "group", "stratum", "error", "percent_error"],
                       error_rows)
    state.manifest_stages["exposure"] = manifest


def _group_records(records: Iterable[ExposureRecord]):
    by_key: dict[tuple[str, str, str], list[ExposureRecord]] = {}
    all_means: dict[tuple[str, str], float] = {}
    for r in records:
        if r.locus == exposure.LOCUS_BLEND:
            continue
        if r.characteristic == "all":
            all_means[(r.locus, r.stratum)] = r.mean
        else:
            by_key.setdefault((r.locus, r.stratum, r.characteristic), []).append(r)
    return by_key, all_means


def _stage_disparity(state: RunState, write: bool) -> None:
    config = state.config
    strata = _strata(config)
    skips: dict[str, int] = {}
    gap_rows = []
    bin_rows = []
    atkinson_rows = []
    state_rows = []
    threshold_rows = []
    for year in config.years:
        data = state.years[year]
        by_key, all_means = _group_records(data.records)

        for (locus, stratum, characteristic), members in sorted(by_key.items()):
            try:
                gap = disparity.extreme_group_gap(members, all_means[(locus, stratum)])
            except _METRIC_DEGENERACIES as exc:
                _skip(skips, "gap", "%s %s/%s/%s: %s" % (year, locus, stratum, characteristic, exc))
                continue
            gap_rows.append([
                year, locus, stratum, characteristic,
                gap.most_exposed, gap.least_exposed,
                _float_text(gap.absolute_diff), _float_text(gap.percent_diff),
                _float_text(gap.ratio),
            ])

        atkinson_rows += [
            [r.year, r.characteristic, r.locus, r.stratum, _float_text(r.epsilon), _float_text(r.value)]
            for r in disparity.atkinson_pipeline(list(data.records), config.epsilons)
        ]

        for locus, table in ((exposure.LOCUS_HOME, data.rac), (exposure.LOCUS_WORK, data.wac)):
            aligned = exposure.align_table(data.surface, table)
            bin_rows += _composition_rows(state, year, locus, aligned, strata, skips)
            threshold_rows += _threshold_rows(config, year, locus, aligned, skips)
            state_rows += _state_rows(year, locus, aligned)
    for kind, count in sorted(skips.items()):
        logger.warning("disparity: skipped %d %s computation(s) on degenerate slices "
                       "(details at debug level)", count, kind)
    if write:
        _write_csv(config.out_dir / "gaps.csv",
                   ["year", "locus", "stratum", "characteristic", "most_exposed",
                    "least_exposed", "absolute_diff", "percent_diff", "ratio"],
                   gap_rows)
        _write_csv(config.out_dir / "bins.csv",
                   ["year", "kind", "locus", "stratum", "characteristic", "group",
                    "n_bins", "bin", "n_tracts", "value", "top_minus_bottom"],
                   bin_rows)
        _write_csv(config.out_dir / "atkinson.csv",
                   ["year", "characteristic", "locus", "stratum", "epsilon", "value"],
                   atkinson_rows)
        _write_csv(config.out_dir / "state_disparity.csv",
                   ["year", "state", "locus", "characteristic", "group", "value"],
                   state_rows)
        _write_csv(config.out_dir / "threshold.csv",
                   ["year", "locus", "threshold", "characteristic", "group",
                    "q_percent", "group_cov"],
                   threshold_rows)
    state.manifest_stages["disparity"] = {
        "gap_rows": len(gap_rows),
        "bin_rows": len(bin_rows),
        "atkinson_rows": len(atkinson_rows),
        "state_rows": len(state_rows),
        "threshold_rows": len(threshold_rows),
    }


def _skip(skips: dict[str, int], kind: str, detail: str) -> None:
    skips[kind] = skips.get(kind, 0) + 1
    logger.debug("%s skipped: %s", kind, detail)


def _stratum_geoid_mask(state: RunState, geoids: Sequence[str], stratum: str) -> list[bool]:
    if stratum == ALL_STRATUM:
        return [True] * len(geoids)
    classification = state.classification or {}
    return [classification.get(g) == stratum for g in geoids]


def _composition_rows(state: RunState, year: int, locus: str,
                      aligned: exposure.AlignedTable, strata: Sequence[str],
                      skips: dict[str, int]) -> list[list]:
    config = state.config
    rows: list[list] = []
    for stratum in strata:
        mask = _stratum_geoid_mask(state, aligned.geoids, stratum)
        tract_idx = [
            i for i, keep in enumerate(mask)
            if keep and aligned.totals[i] > 0
        ]
        for schema in ingest.RAC_WAC_SCHEMAS:
            for code, label in schema.categories:
                if code not in aligned.category_counts:
                    continue
                counts = aligned.category_counts[code]
                comp = [
                    (aligned.geoids[i],
                     counts[i] / aligned.totals[i],
                     float(counts[i]),
                     aligned.concentrations[i])
                    for i in tract_idx
                ]
                group_key = f"{schema.characteristic}:{label}"
                for n_bins in config.bin_counts:
                    try:
                        curve = disparity.percentile_bin_curve(comp, n_bins, group_key, locus)
                    except _METRIC_DEGENERACIES as exc:
                        _skip(skips, "composition-curve",
                              "%s %s/%s/%s: %s" % (year, locus, stratum, group_key, exc))
                        continue
                    contrast = _float_text(disparity.decile_contrast(curve)) if n_bins == 10 else ""
                    rows += [
                        [year, "composition", locus, stratum, schema.characteristic,
                         label, n_bins, b.index, b.n_tracts, _float_text(b.exposure), contrast]
                        for b in curve.bins
                    ]
                share_tracts = [
                    (aligned.geoids[i], float(counts[i]), float(aligned.totals[i]),
                     aligned.concentrations[i])
                    for i in tract_idx
                ]
                try:
                    shares = disparity.population_share_by_concentration_decile(
                        share_tracts, group_key, locus
                    )
                except _METRIC_DEGENERACIES as exc:
                    _skip(skips, "decile-share",
                          "%s %s/%s/%s: %s" % (year, locus, stratum, group_key, exc))
                    continue
                rows += [
                    [year, "concentration", locus, stratum, schema.characteristic,
                     label, 10, i + 1, "", _float_text(value), _float_text(shares.difference)]
                    for i, value in enumerate(shares.bin_means)
                ]
    return rows


def _threshold_rows(config: RunConfig, year: int, locus: str,
                    aligned: exposure.AlignedTable, skips: dict[str, int]) -> list[list]:
    rows: list[list] = []
    conc = aligned.concentrations
    for threshold in config.thresholds:
        all_q = disparity.threshold_share(conc, aligned.totals, threshold)
        rows.append([year, locus, _float_text(threshold), "all", "all",
                     _float_text(all_q), ""])
        for schema in ingest.RAC_WAC_SCHEMAS:
            shares = []
            for code, label in schema.categories:
                if code not in aligned.category_counts:
                    continue
                weights = aligned.category_counts[code]
                if int(weights.sum()) == 0:
                    continue
                shares.append((label, disparity.threshold_share(conc, weights, threshold)))
            if not shares:
                continue
            try:
                cov_text = _float_text(disparity.cov_of_shares([q for _, q in shares]))
            except _METRIC_DEGENERACIES as exc:
                _skip(skips, "threshold-cov",
                      "%s %s T=%s %s: %s" % (year, locus, threshold, schema.characteristic, exc))
                cov_text = ""
            rows += [
                [year, locus, _float_text(threshold), schema.characteristic, label,
                 _float_text(q), cov_text]
                for label, q in shares
            ]
    return rows


def _state_rows(year: int, locus: str, aligned: exposure.AlignedTable) -> list[list]:
    rows: list[list] = []
    if len(aligned.geoids) == 0:
        return rows
    totals = aligned.totals.astype(float)
    conc = aligned.concentrations
    national_mean = float((conc * totals).sum()) / float(totals.sum())
    states = sorted({g[:2] for g in aligned.geoids})
    for st in states:
        idx = [i for i, g in enumerate(aligned.geoids) if g[:2] == st]
        st_totals = totals[idx]
        if st_totals.sum() == 0:
            continue
        st_conc = conc[idx]
        state_mean = float((st_conc * st_totals).sum()) / float(st_totals.sum())
        for schema in ingest.RAC_WAC_SCHEMAS:
            for code, label in schema.categories:
                if code not in aligned.category_counts:
                    continue
                weights = aligned.category_counts[code][idx].astype(float)
                if weights.sum() == 0:
                    continue
                group_mean = float((st_conc * weights).sum()) / float(weights.sum())
                value = disparity.state_disparity(group_mean, state_mean, national_mean)
                rows.append([year, st, locus, schema.characteristic, label, _float_text(value)])
    return rows


def _stage_bias(state: RunState, write: bool) -> None:
    config = state.config
    strata = _strata(config)
    skips: dict[str, int] = {}
    bias_rows = []
    wilcoxon_rows = []
    for year in config.years:
        data = state.years[year]
        if data.od is None:
            data.od = ingest.aggregate_od(
                ingest.read_od_csv(str(config.path(config.od, year))), year
            )
        pairs = exposure.resolve_pairs(data.surface, data.od)
        wf = config.hw_weights.work_fraction
        blended = pairs.home_values + wf * (pairs.work_values - pairs.home_values)
        groups = [("all", pairs.totals)]
        groups += [
            (f"{schema.characteristic}:{label}", pairs.category_counts[code])
            for schema in ingest.OD_SCHEMAS
            for code, label in schema.categories
            if code in pairs.category_counts
        ]
        for stratum in strata:
            mask = _stratum_geoid_mask(state, pairs.home_geoids, stratum)
            idx = [i for i, keep in enumerate(mask) if keep]
            if not idx:
                continue
            vh = pairs.home_values[idx]
            vb = blended[idx]
            for group_key, counts in groups:
                w = counts[idx]
                if int(w.sum()) == 0:
                    continue
                try:
                    moments = biasstats.error_moments(vh, vb, w)
                    bias = biasstats.bias_factor(moments)
                except _METRIC_DEGENERACIES as exc:
                    _skip(skips, "bias-factor", "%s %s/%s: %s" % (year, stratum, group_key, exc))
                else:
                    bias_rows.append([
                        year, group_key, stratum,
                        _float_text(moments.sigma2), _float_text(moments.phi),
                        _float_text(moments.omega2), _float_text(bias),
                    ])
                keep = w > 0
                result = biasstats.wilcoxon_rank_sum_grouped(
                    vh[keep], w[keep], vb[keep], w[keep]
                )
                n = int(w.sum())
                wilcoxon_rows.append([
                    year, group_key, stratum, n, n,
                    _float_text(result.u), _float_text(result.z), _float_text(result.p_value),
                ])
    for kind, count in sorted(skips.items()):
        logger.warning("bias: skipped %d %s computation(s) on degenerate slices "
                       "(details at debug level)", count, kind)
    if write:
        _write_csv(config.out_dir / "bias.csv",
                   ["year", "group", "stratum", "sigma2", "phi", "omega2", "bias"],
                   bias_rows)
        _write_csv(config.out_dir / "wilcoxon.csv",
                   ["year", "group", "stratum", "n_surrogate", "n_reference", "u", "z", "p_value"],
                   wilcoxon_rows)
    state.manifest_stages["bias"] = {
        "bias_rows": len(bias_rows),
        "wilcoxon_rows": len(wilcoxon_rows),
    }


_STAGE_FUNCS = {
    "surface": _stage_surface,
    "exposure": _stage_exposure,
    "disparity": _stage_disparity,
    "bias": _stage_bias,
}

_PREREQS = {
    "surface": (),
    "exposure": ("surface",),
    "disparity": ("surface", "exposure"),
    "bias": ("surface",),
}


def run(config: RunConfig, only_stage: str | None = None) -> dict:
    """Execute the configured stages and emit reports plus a manifest.

    With ``only_stage``, prerequisites are still computed but only that
    stage's files are written (and no manifest). Returns the manifest dict.
    """
    if only_stage is not None and only_stage not in STAGES:
        raise ConfigError(f"unknown stage {only_stage!r}; valid stages: {list(STAGES)}")
    if only_stage is None:
        to_write = set(config.stages)
        to_run = [s for s in STAGES if s in set(config.stages).union(
            p for s in config.stages for p in _PREREQS[s]
        )]
    else:
        to_write = {only_stage}
        needed = set(_PREREQS[only_stage]) | {only_stage}
        to_run = [s for s in STAGES if s in needed]
    if ("exposure" in to_run or "disparity" in to_run) and not (config.rac and config.wac):
        raise ConfigError("rac and wac paths are required for the exposure/disparity stages")
    if "bias" in to_run and not config.od:
        raise ConfigError("od path is required for the bias stage")

    config.out_dir.mkdir(parents=True, exist_ok=True)
    state = RunState(config=config)
    for stage in to_run:
        logger.info("stage %s starting", stage)
        started = time.perf_counter()
        try:
            _STAGE_FUNCS[stage](state, write=stage in to_write)
        except EngineError as exc:
            raise StageError(stage, exc) from exc
        state.timings[stage] = time.perf_counter() - started
        logger.info("stage %s done in %.3fs", stage, state.timings[stage])

    manifest = {
        "config_hash": hashlib.sha256(
            json.dumps(config.raw, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest(),
        "inputs": {
            _display_path(p, config.base_dir): _sha256_file(p)
            for p in sorted(set(config.input_paths()))
        },
        "stages": state.manifest_stages,
        "dropped_weight_total": sum(
            sum(data.dropped_weight.values()) for data in state.years.values()
        ),
        "timings_seconds": {k: round(v, 6) for k, v in state.timings.items()},
    }
    if only_stage is None:
        with open(config.out_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return manifest
