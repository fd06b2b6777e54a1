"""Sweep orchestration, synthetic datasets, design reports.

Manifests, synth configs and design configs are JSON documents carrying a
``schema_version`` field (currently 1).  See README.md for the schemas.
"""

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .cpw import (
    CpwGeometry,
    FilmProperties,
    effective_penetration_depth,
    fundamental_frequency,
    harmonic_frequency,
    kinetic_inductance_per_square,
    line_parameters_geometric,
)
from .errors import AnalysisAborted, ConfigError, CpwresError, FixedPointDivergence
from .fitting import fit_notch
from .loss import (
    PowerBudget,
    QuasiparticleModel,
    TlsFitParameters,
    fit_temperature_sweep,
    fit_tls_power_sweep,
    mean_photon_number,
    photon_number,
    total_frequency_shift,
    total_loss,
)
from .notch import NotchParameters, SweepMeta, add_noise, frequency_grid, noise_sigma_for_snr, synthesize
from .traceio import read_trace, write_csv_trace

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
QI_SIGMA_FLOOR_REL = 0.01
MAX_FAILED_FRACTION = 0.5
FIXED_POINT_RTOL = 1e-9
FIXED_POINT_MAX_ITER = 100
BUDGET_FIELDS = ("fridge_attenuation_dB", "room_temp_attenuation_dB", "extra_line_loss_dB")


# -- JSON helpers --------------------------------------------------------------


def _clean(obj):
    """Convert numpy scalars/arrays to plain Python; non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _load_json(path, what):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"{what} not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    return data


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _provenance(inputs):
    return {
        "tool": "cpwres",
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "inputs": {str(p): _sha256(p) for p in inputs},
    }


def _number(block, key, default=None, *, where):
    value = block.get(key, default)
    if value is None:
        raise ConfigError(f"{where}: missing required field {key!r}")
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: field {key!r} must be a number, got {value!r}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"{where}: field {key!r} must be finite")
    return value


# -- manifests -----------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    vna_power_dBm: float
    temperature_K: float


@dataclass(frozen=True)
class SweepManifest:
    entries: list
    budget_fields: dict
    resonator_label: str = ""
    critical_temperature: float | None = None
    tls_saturation: TlsFitParameters | None = None
    source: Path | None = None
    extra: dict = field(default_factory=dict)

    def budget(self, vna_power_dBm, extra_line_loss_dB=None):
        fields = dict(self.budget_fields)
        if extra_line_loss_dB is not None:
            fields["extra_line_loss_dB"] = extra_line_loss_dB
        return PowerBudget(vna_power_dBm=vna_power_dBm, **fields)


def load_manifest(path):
    path = Path(path)
    data = _load_json(path, "manifest")
    where = str(path)
    raw_entries = data.get("entries")
    if not isinstance(raw_entries, list) or not raw_entries:
        raise ConfigError(f"{where}: 'entries' must be a non-empty list")
    base = path.parent
    entries = []
    for i, e in enumerate(raw_entries):
        if not isinstance(e, dict) or "path" not in e:
            raise ConfigError(f"{where}: entry {i} needs a 'path'")
        entries.append(ManifestEntry(
            path=(base / e["path"]).resolve(),
            vna_power_dBm=_number(e, "vna_power_dBm", where=f"{where} entry {i}"),
            temperature_K=_number(e, "temperature_K", where=f"{where} entry {i}"),
        ))
    shared = data.get("shared", {})
    budget_fields = {}
    for key in BUDGET_FIELDS:
        if key in shared:
            budget_fields[key] = _number(shared, key, where=f"{where} shared")
    try:
        PowerBudget(vna_power_dBm=0.0, **budget_fields)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    tc = None
    if "quasiparticle" in data:
        tc = _number(data["quasiparticle"], "critical_temperature", where=f"{where} quasiparticle")
    sat = None
    if "tls_saturation" in data:
        blk = data["tls_saturation"]
        sat = TlsFitParameters(
            delta0_tls=0.0,
            n_c=_number(blk, "n_c", where=f"{where} tls_saturation"),
            beta=_number(blk, "beta", where=f"{where} tls_saturation"),
        )
    return SweepManifest(
        entries=entries,
        budget_fields=budget_fields,
        resonator_label=str(data.get("resonator_label", "")),
        critical_temperature=tc,
        tls_saturation=sat,
        source=path,
    )


# -- per-trace fitting -----------------------------------------------------------


def _fit_one(task):
    """Fit one trace; never raises so a worker pool can map over a sweep."""
    path, budget = task
    try:
        sweep = read_trace(path)
        result = fit_notch(sweep)
        if not result.converged:
            return {"status": "failed", "error": "NonConvergence: refinement did not converge",
                    "fit": result.as_dict()}
        n_ph = mean_photon_number(budget, result)
        sigma = result.uncertainties.get("Q_i", math.nan)
        floor = QI_SIGMA_FLOOR_REL * result.Q_i
        sigma = floor if not math.isfinite(sigma) else max(sigma, floor)
        return {
            "status": "ok",
            "fit": result.as_dict(),
            "n_ph": n_ph,
            "Q_i": result.Q_i,
            "sigma_Q_i": sigma,
            "input_power_W": budget.input_power_W,
        }
    except (CpwresError, ValueError, OSError) as exc:
        return {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}


def fit_traces(manifest, jobs=1, extra_line_loss_dB=None):
    """Fit every manifest entry; results are returned in manifest order."""
    tasks = [(e.path, manifest.budget(e.vna_power_dBm, extra_line_loss_dB)) for e in manifest.entries]
    if jobs is None or jobs <= 0:
        jobs = os.cpu_count() or 1
    if jobs == 1 or len(tasks) == 1:
        results = [_fit_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_fit_one, tasks))
    base = manifest.source.parent.resolve() if manifest.source else None
    records = []
    for entry, res in zip(manifest.entries, results):
        shown = entry.path
        if base is not None:
            try:
                shown = entry.path.relative_to(base)
            except ValueError:
                pass
        rec = {"path": str(shown), "vna_power_dBm": entry.vna_power_dBm, "temperature_K": entry.temperature_K}
        rec.update(res)
        records.append(rec)
    failed = [r for r in records if r["status"] != "ok"]
    for r in failed:
        log.warning("trace %s failed: %s", r["path"], r["error"])
    if len(failed) > MAX_FAILED_FRACTION * len(records):
        raise AnalysisAborted(f"{len(failed)} of {len(records)} traces failed")
    return records


def _inputs(manifest):
    return [manifest.source] + [e.path for e in manifest.entries if e.path.exists()]


@dataclass
class SweepReport:
    report: dict
    table_header: list
    table: list

    def to_json(self):
        return dumps(self.report)

    def to_csv(self):
        lines = [",".join(self.table_header)]
        for row in self.table:
            lines.append(",".join("" if v is None or not math.isfinite(v) else f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"

    def write(self, out_dir, stem):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.json").write_text(self.to_json())
        (out / f"{stem}.csv").write_text(self.to_csv())
        return out


def run_power_sweep(manifest, jobs=1, extra_line_loss_dB=None):
    """Fit all traces, convert drive power to photon number, fit the TLS model."""
    if not isinstance(manifest, SweepManifest):
        manifest = load_manifest(manifest)
    records = fit_traces(manifest, jobs, extra_line_loss_dB)
    ok = [r for r in records if r["status"] == "ok"]
    temperature = float(np.median([r["temperature_K"] for r in ok]))
    f_r = float(np.mean([r["fit"]["f_r"] for r in ok]))
    points = [(r["n_ph"], r["Q_i"], r["sigma_Q_i"]) for r in ok]
    analysis = fit_tls_power_sweep(points, temperature, f_r)
    tls = analysis.tls
    order = np.argsort([r["n_ph"] for r in ok], kind="stable")
    table = []
    for i in order:
        r = ok[i]
        table.append([r["n_ph"], r["Q_i"], r["sigma_Q_i"], float(analysis.model_Q_i(r["n_ph"]))])
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": "power_sweep",
        "resonator_label": manifest.resonator_label,
        "traces": records,
        "n_failed": len(records) - len(ok),
        "analysis": {
            "temperature_K": temperature,
            "f_r": f_r,
            "tls": {
                "delta0_tls": tls.delta0_tls,
                "n_c": tls.n_c,
                "beta": tls.beta,
                "delta_other": tls.delta_other,
            },
            "uncertainties": tls.uncertainties,
            "reduced_chi2": analysis.reduced_chi2,
            "Q_i_single_photon": float(analysis.model_Q_i(1.0)),
            "Q_i_high_power": float(analysis.model_Q_i(float(np.max(analysis.photon_numbers)))),
        },
        "provenance": _provenance(_inputs(manifest)),
    }
    return SweepReport(report=report, table_header=["n_ph", "Q_i", "sigma", "model_Q_i"], table=table)


def run_temperature_sweep(manifest, jobs=1, extra_line_loss_dB=None):
    """Fit all traces, then the joint TLS + quasiparticle model of Q_i(T)."""
    if not isinstance(manifest, SweepManifest):
        manifest = load_manifest(manifest)
    if manifest.critical_temperature is None:
        raise ConfigError("temperature sweeps need quasiparticle.critical_temperature in the manifest")
    records = fit_traces(manifest, jobs, extra_line_loss_dB)
    ok = [r for r in records if r["status"] == "ok"]
    order = np.argsort([r["temperature_K"] for r in ok], kind="stable")
    ok = [ok[i] for i in order]
    n_ph = float(np.exp(np.mean(np.log([r["n_ph"] for r in ok]))))
    base = ok[0]
    f_ref = base["fit"]["f_r"]
    q0 = QuasiparticleModel.from_critical_temperature(manifest.critical_temperature, 0.0)
    points = [(r["temperature_K"], r["Q_i"], r["sigma_Q_i"]) for r in ok]
    analysis = fit_temperature_sweep(points, n_ph, f_ref, q0, saturation=manifest.tls_saturation)
    T_ref = base["temperature_K"]
    table = []
    for r in ok:
        T = r["temperature_K"]
        model_df = total_frequency_shift(T, f_ref, analysis.tls.delta0_tls, analysis.qp, T_ref=T_ref)
        table.append([
            T, r["Q_i"], r["sigma_Q_i"], float(analysis.model_Q_i(T)),
            r["fit"]["f_r"], r["fit"]["f_r"] - f_ref, float(model_df),
        ])
    grid = np.linspace(min(r["temperature_K"] for r in ok), max(r["temperature_K"] for r in ok), 1001)
    tls = analysis.tls
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": "temperature_sweep",
        "resonator_label": manifest.resonator_label,
        "traces": records,
        "n_failed": len(records) - len(ok),
        "analysis": {
            "photon_number": n_ph,
            "reference_temperature_K": T_ref,
            "f_r_reference": f_ref,
            "critical_temperature": manifest.critical_temperature,
            "tls": {
                "delta0_tls": tls.delta0_tls,
                "delta_other": tls.delta_other,
                "n_c": None if manifest.tls_saturation is None else tls.n_c,
                "beta": None if manifest.tls_saturation is None else tls.beta,
            },
            "kinetic_fraction": analysis.kinetic_fraction,
            "uncertainties": analysis.uncertainties,
            "reduced_chi2": analysis.reduced_chi2,
            "Q_i_argmax_temperature_K": float(grid[int(np.argmax(analysis.model_Q_i(grid)))]),
        },
        "provenance": _provenance(_inputs(manifest)),
    }
    header = ["T", "Q_i", "sigma", "model_Q_i", "f_r", "delta_f", "model_delta_f"]
    return SweepReport(report=report, table_header=header, table=table)


# -- synthetic datasets ----------------------------------------------------------


def solve_photon_number(input_power_W, f_r, Q_c, qi_of_n, *, rtol=FIXED_POINT_RTOL, max_iter=FIXED_POINT_MAX_ITER):
    """Self-consistent photon number n = N(P_in, Q_i(n)) by plain fixed-point iteration.

    Starts from n = 1 and iterates n <- photon_number(P_in, f_r, Q_i(n), Q_c)
    until the relative change is below ``rtol``.  Returns (n, Q_i(n)).
    """
    n = 1.0
    for _ in range(max_iter):
        q_i = qi_of_n(n)
        n_new = photon_number(input_power_W, f_r, q_i, Q_c)
        if not math.isfinite(n_new):
            break
        if abs(n_new - n) <= rtol * max(abs(n_new), 1e-300):
            return n_new, qi_of_n(n_new)
        n = n_new
    raise FixedPointDivergence(
        f"photon number did not settle within {max_iter} iterations (last n = {n:.6g})"
    )


def _synth_config(config):
    if isinstance(config, (str, Path)):
        return _load_json(config, "synth config"), str(config)
    if not isinstance(config, dict) or config.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"synth config needs schema_version {SCHEMA_VERSION}")
    return config, "synth config"


def synth_dataset(config, out_dir, seed=None):
    """Write a deterministic synthetic sweep: traces/*.csv, manifest.json, truth.json.

    For every schedule point the loaded Q_l follows from the truth model:
    1/Q_l = 1/Q_i(T, n) + cos(phi)/|Q_c|, with the photon number n solved
    self-consistently because it depends on Q_i.  Optional multiplicative
    Q_i scatter (``noise.qi_scatter_rel``) and complex S21 noise
    (``noise.snr_db``) are drawn from independent streams derived from ``seed``.
    """
    cfg, where = _synth_config(config)
    mode = cfg.get("mode", "power")
    if mode not in ("power", "temperature"):
        raise ConfigError(f"{where}: mode must be 'power' or 'temperature', got {mode!r}")
    base = cfg.get("baseline", {})
    f_r0 = _number(base, "f_r", where=f"{where} baseline")
    Q_c = _number(base, "Q_c", where=f"{where} baseline")
    phi = _number(base, "phi", 0.0, where=f"{where} baseline")
    a = _number(base, "a", 1.0, where=f"{where} baseline")
    alpha = _number(base, "alpha", 0.0, where=f"{where} baseline")
    tau = _number(base, "tau", 0.0, where=f"{where} baseline")

    t = cfg.get("tls", {})
    tls = TlsFitParameters(
        delta0_tls=_number(t, "delta0_tls", where=f"{where} tls"),
        n_c=_number(t, "n_c", where=f"{where} tls"),
        beta=_number(t, "beta", where=f"{where} tls"),
        delta_other=_number(t, "delta_other", 0.0, where=f"{where} tls"),
    )
    qp = None
    if "quasiparticle" in cfg:
        blk = cfg["quasiparticle"]
        try:
            qp = QuasiparticleModel.from_critical_temperature(
                _number(blk, "critical_temperature", where=f"{where} quasiparticle"),
                _number(blk, "kinetic_fraction", 0.0, where=f"{where} quasiparticle"),
            )
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    budget_fields = {k: _number(cfg.get("budget", {}), k, d, where=f"{where} budget")
                     for k, d in zip(BUDGET_FIELDS, (60.0, 20.0, 0.0))}

    sched = cfg.get("schedule", {})
    powers = sched.get("vna_power_dBm")
    temps = sched.get("temperature_K")
    if mode == "power":
        if not isinstance(powers, list) or not powers:
            raise ConfigError(f"{where}: power mode needs a list schedule.vna_power_dBm")
        temp = float(temps if temps is not None else 0.077)
        points = [(float(p), temp) for p in powers]
    else:
        if not isinstance(temps, list) or not temps:
            raise ConfigError(f"{where}: temperature mode needs a list schedule.temperature_K")
        if qp is None:
            raise ConfigError(f"{where}: temperature mode needs a quasiparticle block")
        power = float(powers if powers is not None else -60.0)
        points = [(power, float(T)) for T in temps]
    if any(T <= 0 for _, T in points):
        raise ConfigError(f"{where}: temperatures must be positive")

    trace_cfg = cfg.get("trace", {})
    n_points = int(trace_cfg.get("n_points", 1601))
    span = float(trace_cfg.get("span_linewidths", 10.0))
    noise = cfg.get("noise", {})
    snr_db = noise.get("snr_db")
    scatter = float(noise.get("qi_scatter_rel", 0.0))
    seed = int(cfg.get("seed", 0) if seed is None else seed)

    T_ref = min(T for _, T in points)
    streams = np.random.SeedSequence(seed).spawn(2 * len(points))
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    entries, truth_rows = [], []
    for i, (P, T) in enumerate(points):
        budget = PowerBudget(vna_power_dBm=P, **budget_fields)
        f_r = f_r0
        if mode == "temperature":
            f_r = f_r0 + float(total_frequency_shift(T, f_r0, tls.delta0_tls, qp, T_ref=T_ref))

        def qi_of_n(n, T=T, f_r=f_r):
            return 1.0 / float(total_loss(T, n, f_r, tls, qp))

        n_ph, q_i_true = solve_photon_number(budget.input_power_W, f_r, Q_c, qi_of_n)
        q_i = q_i_true
        if scatter > 0:
            q_i = q_i_true * (1.0 + scatter * np.random.default_rng(streams[2 * i]).standard_normal())
        Q_l = 1.0 / (1.0 / q_i + math.cos(phi) / Q_c)
        params = NotchParameters(f_r=f_r, Q_l=Q_l, Q_c=Q_c, phi=phi, a=a, alpha=alpha, tau=tau)
        center = f_r0 if mode == "temperature" else None
        freqs = frequency_grid(params, n_points, span, center=center)
        sweep = synthesize(params, freqs, meta=SweepMeta(vna_power_dBm=P, temperature_K=T))
        if snr_db is not None:
            sweep = add_noise(sweep, noise_sigma_for_snr(float(snr_db), a), streams[2 * i + 1])
        name = f"traces/{mode[0]}{i:03d}.csv"
        write_csv_trace(out / name, sweep)
        entries.append({"path": name, "vna_power_dBm": P, "temperature_K": T})
        truth_rows.append({
            "path": name, "vna_power_dBm": P, "temperature_K": T, "n_ph": n_ph,
            "Q_i_model": q_i_true, "Q_i": q_i, "Q_l": Q_l, "Q_c": Q_c, "f_r": f_r,
            "phi": phi, "a": a, "alpha": alpha, "tau": tau,
        })

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "resonator_label": str(cfg.get("label", "synthetic")),
        "shared": budget_fields,
        "entries": entries,
    }
    if qp is not None:
        manifest["quasiparticle"] = {"critical_temperature": qp.critical_temperature}
    truth = {
        "schema_version": SCHEMA_VERSION,
        "mode": mode,
        "seed": seed,
        "tls": {"delta0_tls": tls.delta0_tls, "n_c": tls.n_c, "beta": tls.beta, "delta_other": tls.delta_other},
        "quasiparticle": None if qp is None else {
            "critical_temperature": qp.critical_temperature, "kinetic_fraction": qp.kinetic_fraction},
        "traces": truth_rows,
    }
    (out / "manifest.json").write_text(dumps(manifest))
    (out / "truth.json").write_text(dumps(truth))
    return out / "manifest.json"


# -- design -------------------------------------------------------------------------


def load_design_config(config):
    cfg, where = (_load_json(config, "design config"), str(config)) if isinstance(config, (str, Path)) else (config, "design config")
    g = cfg.get("geometry", {})
    try:
        geom = CpwGeometry(
            center_width=_number(g, "center_width", where=f"{where} geometry"),
            gap=_number(g, "gap", where=f"{where} geometry"),
            length=_number(g, "length", where=f"{where} geometry"),
            substrate_permittivity=_number(g, "substrate_permittivity", 11.9, where=f"{where} geometry"),
        )
        film = None
        if "film" in cfg:
            fl = cfg["film"]
            film = FilmProperties(
                thickness=_number(fl, "thickness", where=f"{where} film"),
                critical_temperature=_number(fl, "critical_temperature", where=f"{where} film"),
                sheet_resistance=_number(fl, "sheet_resistance", where=f"{where} film"),
                bulk_penetration_depth=_number(fl, "bulk_penetration_depth", 150e-9, where=f"{where} film"),
            )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from exc
    return geom, film, int(cfg.get("n_harmonics", 3))


def design_report(geom, film=None, n_harmonics=3):
    """Line constants, resonance frequencies and film parameters as a dict."""
    line = line_parameters_geometric(geom)
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": "design",
        "geometry": {
            "center_width": geom.center_width,
            "gap": geom.gap,
            "length": geom.length,
            "substrate_permittivity": geom.substrate_permittivity,
            "resonator_type": geom.resonator_type.value,
        },
        "line": {
            "modulus": geom.modulus,
            "effective_permittivity": geom.effective_permittivity,
            "capacitance_per_length": line.capacitance,
            "inductance_per_length": line.geometric_inductance,
            "impedance": line.impedance,
            "phase_velocity": line.phase_velocity,
        },
        "fundamental_frequency": fundamental_frequency(geom),
        "harmonics": [harmonic_frequency(geom, n) for n in range(n_harmonics)],
    }
    if film is not None:
        report["film"] = {
            "thickness": film.thickness,
            "critical_temperature": film.critical_temperature,
            "sheet_resistance": film.sheet_resistance,
            "gap_energy": film.gap_energy,
            "kinetic_inductance_per_square": kinetic_inductance_per_square(film),
            "effective_penetration_depth": effective_penetration_depth(film),
        }
    return report
