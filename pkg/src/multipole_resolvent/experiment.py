"""Experiment orchestration: stages, artifacts, caching and reports.

Stages run in the order validate -> assemble -> sweep -> diagnostics -> fit
-> report.  Every CSV artifact carries the config digest and code version
in its last two columns; JSON artifacts carry them as keys.  A numeric digest
(wall-clock columns removed) is stored next to each file digest so that runs
can be compared for determinism.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import (build_cutoff, build_geometry, build_potential, config_digest, eps_policy, lambda_grid,
                     validate_config)
from .errors import ConfigError, FitError, HypothesisError, ResolventError
from .measure import (PhaseSymbol, annulus_centres, flux_ledger, h_oscillation, husimi, lattice_centres,
                      lemma_gap, polar_split, radial_step, shell_localization, transport_residual,
                      weighted_large_harmonic)
from .operators import SemiclassicalParams
from .potential import validate_hypotheses
from .quasimodes import ForcingSpec, cartesian_quasimode, radial_quasimode
from .radial import weighted_norm
from .resolvent import CartesianPolicy, SweepRecord, default_window, fit_power_law, frequency_sweep

SWEEP_COLUMNS = ["lambda", "epsilon", "norm", "norm_times_sqrt_lambda", "iters", "residual", "wall_ms"]
VOLATILE_COLUMNS = ("wall_ms",)
DIAG_COLUMNS = ["lambda", "h", "forcing_norm", "residual", "mass_consistency", "shell_fraction",
                "transport_residual", "Lambda", "flux_balance", "Z_x", "Z_y", "weighted_norm",
                "lemma_lhs", "lemma_rhs", "small_ball_mass", "h_oscillation"]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(columns: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def numeric_digest(text: str) -> str:
    """sha256 of a CSV with its volatile columns removed."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return hashlib.sha256(b"").hexdigest()
    keep = [i for i, c in enumerate(rows[0]) if c not in VOLATILE_COLUMNS]
    canon = "\n".join(",".join(r[i] for i in keep) for r in rows)
    return hashlib.sha256(canon.encode()).hexdigest()


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunRecord:
    name: str
    config_digest: str
    code_version: str
    started: str = ""
    finished: str = ""
    status: str = "running"
    error: Optional[str] = None
    stage_ms: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return {"ok": 0, "rejected": 2}.get(self.status, 3)

    def numeric_digests(self) -> dict:
        return {Path(a["path"]).name: a["numeric_digest"] for a in self.artifacts}

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))


class _Writer:
    """Single funnel for artifact writes so the manifest stays consistent."""

    def __init__(self, out_dir: Path, record: RunRecord):
        self.out = out_dir
        self.record = record
        out_dir.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, columns, rows):
        cols = list(columns) + ["config_digest", "code_version"]
        tagged = [list(r) + [self.record.config_digest, self.record.code_version] for r in rows]
        return self._put(name, csv_text(cols, tagged), numeric=True)

    def json(self, name: str, payload: dict):
        body = dict(payload, config_digest=self.record.config_digest, code_version=self.record.code_version)
        return self._put(name, json.dumps(body, indent=2, sort_keys=True, default=float) + "\n", numeric=False)

    def _put(self, name, text, numeric):
        path = self.out / name
        path.write_text(text, encoding="utf-8", newline="")
        nd = numeric_digest(text) if numeric else hashlib.sha256(_strip_volatile_json(text).encode()).hexdigest()
        self.record.artifacts = [a for a in self.record.artifacts if a["path"] != str(path)]
        self.record.artifacts.append({"path": str(path), "sha256": file_digest(path), "numeric_digest": nd})
        return path


def _strip_volatile_json(text: str) -> str:
    data = json.loads(text)
    for k in ("wall_ms", "stage_ms", "started", "finished"):
        data.pop(k, None)
    return json.dumps(data, sort_keys=True)


# --------------------------------------------------------------------------
# stages


def _stage(record, name):
    class _T:
        def __enter__(self_):
            self_.t = time.perf_counter()

        def __exit__(self_, *exc):
            record.stage_ms[name] = round(1e3 * (time.perf_counter() - self_.t), 3)
            return False

    return _T()


def _cache_dir(out_dir: Path, digest: str) -> Path:
    return out_dir / "cache" / digest[:16]


def _sweep_with_cache(spec, lams, cfg, geometry, threads, cache: Optional[Path]):
    """Sweep the points missing from the per-point cache, then merge."""
    sw = cfg.get("sweep", {})
    done = {}
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)
        for f in cache.glob("point_*.json"):
            d = json.loads(f.read_text())
            done[float(d["lam"])] = SweepRecord(d["lam"], d["epsilon"], d["norm"], d["iterations"], d["residual"],
                                                d["wall_ms"], d.get("detail", {}))

    def keep(rec):
        if cache is not None:
            payload = {"lam": rec.lam, "epsilon": rec.epsilon, "norm": rec.norm, "iterations": rec.iterations,
                       "residual": rec.residual, "wall_ms": rec.wall_ms, "detail": rec.detail}
            (cache / f"point_{rec.lam!r}.json").write_text(json.dumps(payload, default=float))

    missing = [l for l in lams if l not in done]
    failures = {}
    if missing:
        res = frequency_sweep(spec, missing, eps_policy(sw), geometry, threads=threads, sign=sw.get("sign", 1),
                              on_record=keep)
        for r in res.records:
            done[r.lam] = r
        failures = dict(res.failures)
    records = [done[l] for l in sorted(done) if l in set(lams)]
    return records, failures


def _fit(records, window):
    lams = [r.lam for r in records]
    win = tuple(window) if window else (default_window(lams) if len(lams) >= 4 else (min(lams), max(lams)))
    try:
        return fit_power_law(lams, [r.norm for r in records], win), win
    except FitError:
        return None, win


def _diagnostics(spec, cfg, seed):
    dg = cfg.get("diagnostics", {})
    g = cfg["sweep"]["geometry"]
    d = spec.dimension
    chi = build_cutoff(g["chi"], d)
    chi1 = build_cutoff(g["chi1"], d) if "chi1" in g else chi
    radial = g["kind"] == "radial_modes"
    fc = dg.get("forcing", {})
    default_f = {"center": (0.0, 0.0), "r_in": 0.3, "r_out": 0.7} if radial else \
        {"center": (0.0, 0.0), "r_in": 0.0, "r_out": 0.3}
    forcing = ForcingSpec(tuple(fc.get("center", default_f["center"])), float(fc.get("r_in", default_f["r_in"])),
                          float(fc.get("r_out", default_f["r_out"])), int(fc.get("n_waves", 24)), int(seed))
    ppw = float(dg.get("ppw", 10.0))
    nu_t = float(dg.get("nu_tilde", 3.0))
    theta_c = math.radians(float(dg.get("cone_half_angle_deg", 15.0)))
    poles = [p.position for p in spec.poles]
    rows = []
    for lam in dg.get("lambdas", []):
        params = SemiclassicalParams(float(lam), 1e-6 * float(lam))
        h = params.h
        if radial:
            q = radial_quasimode(spec, params, forcing, chi, chi1, ppw=ppw)
            grid_field = q.field.to_grid(chi1.extent + 6 * math.sqrt(h), h / 2.5) if dg.get("husimi") or dg.get("flux") else None
        else:
            q = cartesian_quasimode(spec, params, forcing, chi, chi1, ppw=ppw)
            grid_field = q.field
        row = {"lambda": float(lam), "h": h, "forcing_norm": q.forcing_norm, "residual": q.residual}
        psi = (lambda r: chi1.radial(r)) if radial else (lambda P: chi1(P))
        row["h_oscillation"] = h_oscillation(q, psi, poles)
        l0 = spec.poles[0].cutoff_radius if spec.poles else None
        if dg.get("husimi"):
            reg = lambda P: chi1(P) > 0
            cen, cell = lattice_centres(grid_field, 0.5 * math.sqrt(h), reg, h=h)
            D = husimi(grid_field, h, cen, cell)
            row["mass_consistency"] = abs(D.mass / grid_field.norm2(reg(grid_field.points())) - 1)
            row["shell_fraction"] = shell_localization(D, 4 * math.sqrt(h), poles, l0 or 0.0)
            if "symbol" in dg:
                sym = PhaseSymbol(tuple(dg["symbol"]["centre"]), float(dg["symbol"]["radius"]))
                cen, cell = annulus_centres(grid_field, sym.centre, 0.0, sym.radius,
                                            min(0.5 * math.sqrt(h), sym.radius / 16), h=h)
                row["transport_residual"] = transport_residual(husimi(grid_field, h, cen, cell), sym, poles,
                                                               l0 or 0.0)
        ledger = None
        if dg.get("flux") and spec.poles:
            p0 = spec.poles[0].position
            r0, wid = 0.75 * l0, l0 / 8
            cen, cell = annulus_centres(grid_field, p0, r0 - 2 * wid, r0 + 2 * wid, min(0.5 * math.sqrt(h), l0 / 16),
                                        h=h)
            D = husimi(grid_field, h, cen, cell)
            ledger = flux_ledger(D, p0, r0, theta_c, other_poles=poles[1:], width=wid, l=l0)
            row.update({"Lambda": ledger.Lambda, "flux_balance": ledger.balance, "Z_x": ledger.Z[0],
                        "Z_y": ledger.Z[1]})
        if dg.get("weighted_norms") and spec.poles:
            src = q.field if radial else grid_field
            # unit ball about the pole, kept clear of the other poles
            p0 = np.asarray(spec.poles[0].position)
            r_ball = min([1.0] + [0.5 * float(np.linalg.norm(np.asarray(p) - p0)) for p in poles[1:]])
            r, _, rl = polar_split(src, spec.poles[0].position, r_ball, nu_t)
            row["weighted_norm"] = weighted_norm(r, rl, 0.5, r_max=r_ball).value
            if ledger is not None:
                phi = lambda rr: radial_step(rr, ledger.r0, l0 / 8)[0]
                I = weighted_large_harmonic(src, spec.poles[0].position, h, nu_t, phi, r_max=ledger.r0 + l0 / 8)
                C = spec.gradient_constant if spec.gradient_constant is not None else \
                    2 * abs(spec.poles[0].radial_profile.coefficient or 0.0)
                row["lemma_lhs"] = lemma_gap(d, nu_t, C) * I
                row["lemma_rhs"] = 2 * ledger.Lambda
        if dg.get("mode_split") and spec.poles and radial:
            row["small_ball_mass"] = q.field.ball_mass((0.0, 0.0), l0 / 2, "small", nu_t)
        rows.append(row)
    return rows


def run_experiment(cfg: dict, out_dir=None, threads: Optional[int] = None, allow_violations: Optional[bool] = None,
                   seed: Optional[int] = None, use_cache: Optional[bool] = None) -> RunRecord:
    """Run every configured stage; artifacts go to out_dir (default from the config)."""
    validate_config(cfg)
    cfg = json.loads(json.dumps(cfg))
    if seed is not None:
        cfg["seed"] = int(seed)
    digest = config_digest(cfg)
    out = Path(out_dir or cfg.get("output", {}).get("dir", "out"))
    threads = int(threads or cfg.get("threads", 1))
    allow = bool(cfg.get("allow_violations", False) if allow_violations is None else allow_violations)
    cache_on = cfg.get("output", {}).get("cache", True) if use_cache is None else use_cache
    record = RunRecord(cfg.get("name", "experiment"), digest, __version__, started=_now())
    writer = _Writer(out, record)
    stage = "validate"
    try:
        with _stage(record, "validate"):
            try:
                spec = build_potential(cfg)
            except (ValueError, ResolventError) as exc:
                raise ConfigError(f"potential cannot be built: {exc}") from exc
            report = validate_hypotheses(spec)
            writer.json("validation.json", {"passed": report.passed, "checks": [
                {"name": e.name, "passed": e.passed, "worst_value": e.worst_value, "detail": e.detail}
                for e in report.entries]})
            record.checks["hypotheses"] = report.passed
            if not report.passed and not allow:
                names = ", ".join(e.name for e in report.failures())
                raise HypothesisError(f"hypotheses violated: {names}", report.failures()[0].name)
        if "sweep" not in cfg:
            record.status = "ok"
            return record
        stage = "assemble"
        with _stage(record, "assemble"):
            geometry = build_geometry(cfg)
            lams = lambda_grid(cfg["sweep"])
            meta = {"geometry": cfg["sweep"]["geometry"]["kind"], "lambdas": lams}
            if isinstance(geometry, CartesianPolicy):
                h0 = 1 / math.sqrt(min(lams))
                meta["box_at_min_lambda"] = list(geometry.box(spec, h0)[0])
                meta["sectors"] = [list(map(str, s)) for s in geometry.sector_list(spec)]
            writer.json("assemble.json", meta)
        stage = "sweep"
        with _stage(record, "sweep"):
            cache = _cache_dir(out, digest) if cache_on else None
            records, failures = _sweep_with_cache(spec, lams, cfg, geometry, threads, cache)
            rows = [(r.lam, r.epsilon, r.norm, r.scaled, r.iterations, r.residual, r.wall_ms) for r in records]
            writer.csv("sweep.csv", SWEEP_COLUMNS, rows)
            if failures:
                writer.json("sweep_failures.json", {"failures": {repr(k): v for k, v in failures.items()}})
        if cfg.get("diagnostics") and any(cfg["diagnostics"].get(k) for k in
                                          ("husimi", "flux", "weighted_norms", "mode_split")):
            stage = "diagnostics"
            with _stage(record, "diagnostics"):
                drows = _diagnostics(spec, cfg, cfg.get("seed", 0))
                writer.csv("diagnostics.csv", DIAG_COLUMNS, [[r.get(c) for c in DIAG_COLUMNS] for r in drows])
                _summarize_diagnostics(record, drows)
        stage = "fit"
        with _stage(record, "fit"):
            fit, win = _fit(records, cfg["sweep"].get("window"))
            scaled = [r.scaled for r in records]
            lam_arr = np.array([r.lam for r in records])
            top = lam_arr >= lam_arr.max() / 2 * (1 - 1e-12)
            s = np.array(scaled)
            record.summary.update({
                "C_emp": float(max(scaled)),
                "p": fit.p if fit else float("nan"),
                "C_fit": fit.C if fit else float("nan"),
                "top_octave_variation": float((s[top].max() - s[top].min()) / s[top].min()),
                "n_points": len(records),
            })
            writer.json("fit.json", {"window": list(win), "p": record.summary["p"], "C": record.summary["C_fit"],
                                     "C_emp": record.summary["C_emp"],
                                     "outliers": [float(v) for v in (fit.lams[fit.outliers] if fit else [])],
                                     "plot": [{"log_lambda": math.log(r.lam), "log_norm": math.log(r.norm),
                                               "log_fit": math.log(fit.predict(r.lam)) if fit else None}
                                              for r in records]})
        record.status = "ok"
    except (ConfigError, HypothesisError) as exc:
        record.status = "rejected"
        record.error = f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # any stage failure keeps the partial artifacts
        record.status = "failed"
        record.error = f"{stage}: {type(exc).__name__}: {exc}"
    finally:
        record.finished = _now()
        with _stage(record, "report"):
            pass
        out.mkdir(parents=True, exist_ok=True)
        (out / "record.json").write_text(record.to_json() + "\n", encoding="utf-8")
    return record


def _summarize_diagnostics(record, rows):
    def col(name):
        return [r[name] for r in rows if r.get(name) is not None]

    if col("shell_fraction"):
        record.summary["shell_fraction"] = col("shell_fraction")[-1]
    if col("flux_balance"):
        record.summary["flux_balance"] = max(col("flux_balance"))
    if col("weighted_norm"):
        w = col("weighted_norm")
        record.summary["weighted_norm_ratio"] = max(w) / min(w) if min(w) > 0 else float("inf")


# --------------------------------------------------------------------------
# report


def verify_artifacts(record: RunRecord) -> None:
    """Reject artifacts whose content or embedded digest does not match the record."""
    for a in record.artifacts:
        p = Path(a["path"])
        if not p.exists():
            raise ValueError(f"orphan record entry: {p} is missing")
        if file_digest(p) != a["sha256"]:
            raise ValueError(f"artifact {p} changed after the run")
        text = p.read_text(encoding="utf-8")
        if p.suffix == ".csv":
            rows = list(csv.DictReader(io.StringIO(text)))
            if any(r.get("config_digest") != record.config_digest for r in rows):
                raise ValueError(f"artifact {p} carries a foreign config digest")
        elif json.loads(text).get("config_digest") != record.config_digest:
            raise ValueError(f"artifact {p} carries a foreign config digest")


SUMMARY_COLUMNS = ["name", "config_digest", "status", "C_emp", "p", "top_octave_variation"]
DIAG_SUMMARY = ["shell_fraction", "flux_balance", "weighted_norm_ratio"]


def emit_report(records: Sequence[RunRecord], out_dir) -> list:
    """summary.csv (one row per record) plus a plot-data CSV per record."""
    if not records:
        raise ValueError("emit_report needs at least one record")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for r in records:
        verify_artifacts(r)
    diag_cols = [c for c in DIAG_SUMMARY if any(c in r.summary for r in records)]
    cols = SUMMARY_COLUMNS + diag_cols + ["code_version"]
    rows = []
    for r in records:
        s = r.summary
        rows.append([r.name, r.config_digest, r.status, s.get("C_emp"), s.get("p"), s.get("top_octave_variation")]
                    + [s.get(c) for c in diag_cols] + [r.code_version])
    paths = [out / "summary.csv"]
    paths[0].write_text(csv_text(cols, rows), encoding="utf-8", newline="")
    for r in records:
        fit_art = [a for a in r.artifacts if a["path"].endswith("fit.json")]
        if not fit_art:
            continue
        plot = json.loads(Path(fit_art[0]["path"]).read_text())["plot"]
        path = out / f"plot_{r.name}_{r.config_digest[:8]}.csv"
        path.write_text(csv_text(["log_lambda", "log_norm", "log_fit", "config_digest"],
                                 [[p["log_lambda"], p["log_norm"], p["log_fit"], r.config_digest] for p in plot]),
                        encoding="utf-8", newline="")
        paths.append(path)
    return paths


def load_record(path) -> RunRecord:
    p = Path(path)
    if p.is_dir():
        p = p / "record.json"
    return RunRecord.from_json(p.read_text(encoding="utf-8"))
