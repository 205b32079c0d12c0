"""Batch experiment pipeline behind the command-line interface.

Each command reads a JSON config, assembles the experiment it needs
(meshes, electrodes, phantom, sensitivity matrix), runs one stage, and
writes its artifacts into the output directory. Commands are pure
functions of (config, input files, seed), so repeated runs reproduce
byte-identical CSV outputs; manifests additionally record per-phase
wall times from a monotonic clock and are exempt from that guarantee.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path

import numpy as np

from . import forward, inverse, metrics
from .mesh import (
    TriMesh,
    ElectrodeLayout,
    DifferenceOperators,
    generate_disk_mesh,
    place_electrodes,
    build_difference_operators,
    raster_extent,
    rasterize,
    save_mesh,
    save_element_values,
    load_element_values,
)
from .phantom import PhantomSpec, lung_model, load_phantom, save_phantom, assign_conductivity


class ConfigError(Exception):
    """Invalid or inconsistent pipeline configuration."""


_SOLVERS = ("nwatv", "fotv", "tv", "tikhonov")

# sweep defaults: four decades of lam/rho around the shipped ratio 5e-3,
# two decades of the weight floor around 0.01
_SWEEP_RATIOS = (5e-3 * np.logspace(-2.0, 2.0, 7)).tolist()
_SWEEP_DELTAS = np.logspace(-3.0, -1.0, 5).tolist()


@dataclass
class PipelineConfig:
    """One experiment: geometry, phantom, noise, solver, outputs."""

    radius: float = 0.1
    inverse_elements: int = 1024
    forward_elements: int = 16384
    electrode_count: int = 16
    current_ma: float = 1.0
    phantom_model: int | None = 7
    phantom_file: str | None = None
    sigma0: float = 1.0
    snr_db: float = 50.0
    seed: int = 42
    solver: str = "nwatv"
    lam: float = 5e-13
    rho: float = 1e-10
    delta: float = 0.01
    max_iters: int = 20
    tol: float = 1e-5
    lambda_b: float = 1e-7
    enable_preprocess: bool = False
    mask_elements: list[int] | None = None
    raster_resolution: int = 256
    out_dir: str = "out"
    sweep_lambda_over_rho: list[float] = field(default_factory=lambda: list(_SWEEP_RATIOS))
    sweep_delta: list[float] = field(default_factory=lambda: list(_SWEEP_DELTAS))
    profile_rows: list[int] = field(default_factory=lambda: [107, 144, 182])


def _validate_config(cfg: PipelineConfig) -> None:
    def bad(name, why):
        raise ConfigError(f"{name}: {why}")

    if not cfg.radius > 0:
        bad("radius", f"must be > 0, got {cfg.radius}")
    for name in ("inverse_elements", "forward_elements"):
        v = getattr(cfg, name)
        if not isinstance(v, int) or v < 64:
            bad(name, f"must be an integer >= 64, got {v!r}")
    if not isinstance(cfg.electrode_count, int) or cfg.electrode_count < 4:
        bad("electrode_count", f"must be an integer >= 4, got {cfg.electrode_count!r}")
    if not cfg.current_ma > 0:
        bad("current_ma", f"must be > 0, got {cfg.current_ma}")
    if not cfg.sigma0 > 0:
        bad("sigma0", f"must be > 0, got {cfg.sigma0}")
    if (cfg.phantom_model is None) == (cfg.phantom_file is None):
        bad("phantom_model/phantom_file", "exactly one must be set")
    if cfg.phantom_file is not None and not Path(cfg.phantom_file).is_file():
        bad("phantom_file", f"no such file: {cfg.phantom_file}")
    if math.isnan(cfg.snr_db) or cfg.snr_db == -math.inf:
        bad("snr_db", f"must be finite or +inf, got {cfg.snr_db}")
    if cfg.solver not in _SOLVERS:
        bad("solver", f"must be one of {_SOLVERS}, got {cfg.solver!r}")
    if cfg.lam < 0:
        bad("lam", f"must be >= 0, got {cfg.lam}")
    if not cfg.rho > 0:
        bad("rho", f"must be > 0, got {cfg.rho}")
    if not cfg.delta > 0:
        bad("delta", f"must be > 0, got {cfg.delta}")
    if not isinstance(cfg.max_iters, int) or cfg.max_iters < 1:
        bad("max_iters", f"must be an integer >= 1, got {cfg.max_iters!r}")
    if not cfg.tol > 0:
        bad("tol", f"must be > 0, got {cfg.tol}")
    if not cfg.lambda_b > 0:
        bad("lambda_b", f"must be > 0, got {cfg.lambda_b}")
    if not isinstance(cfg.raster_resolution, int) or cfg.raster_resolution < 16:
        bad("raster_resolution", f"must be an integer >= 16, got {cfg.raster_resolution!r}")
    if not cfg.sweep_lambda_over_rho or any(r <= 0 for r in cfg.sweep_lambda_over_rho):
        bad("sweep_lambda_over_rho", "must be a nonempty list of positive ratios")
    if not cfg.sweep_delta or any(d <= 0 for d in cfg.sweep_delta):
        bad("sweep_delta", "must be a nonempty list of positive floors")
    for r in cfg.profile_rows:
        if not 0 <= r <= cfg.raster_resolution - 1:
            bad("profile_rows", f"row {r} outside 0..{cfg.raster_resolution - 1}")
    if cfg.mask_elements is not None:
        if any((not isinstance(i, int)) or i < 0 for i in cfg.mask_elements):
            bad("mask_elements", "must be a list of nonnegative element indices")


def load_config(path) -> PipelineConfig:
    """Parse and validate a JSON config file."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
    if isinstance(raw.get("snr_db"), str):
        token = raw["snr_db"].strip().lower().lstrip("+")
        if token in ("inf", "infinity"):
            raw["snr_db"] = math.inf
        else:
            raise ConfigError(f"snr_db: unrecognized string {raw['snr_db']!r}")
    try:
        cfg = PipelineConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc))
    _validate_config(cfg)
    return cfg


def _config_json(cfg: PipelineConfig) -> dict:
    d = asdict(cfg)
    if math.isinf(d["snr_db"]):
        d["snr_db"] = "inf"
    return d


def _write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


# ---------------------------------------------------------------------------
# experiment assembly


@dataclass
class InverseProblem:
    """Coarse mesh, electrodes, difference operators, sensitivity matrix."""

    mesh: TriMesh
    layout: ElectrodeLayout
    ops: DifferenceOperators
    s: forward.SensitivityMatrix
    timings_s: dict


def load_phantom_spec(cfg: PipelineConfig) -> PhantomSpec:
    if cfg.phantom_model is not None:
        return lung_model(cfg.phantom_model)
    return load_phantom(cfg.phantom_file)


def build_inverse_problem(cfg: PipelineConfig) -> InverseProblem:
    t0 = time.perf_counter()
    mesh = generate_disk_mesh(cfg.radius, cfg.inverse_elements)
    layout = place_electrodes(mesh, cfg.electrode_count)
    ops = build_difference_operators(mesh)
    t1 = time.perf_counter()
    sigma0 = forward.ConductivityField.homogeneous(cfg.sigma0, mesh.n_elements)
    s = forward.sensitivity_matrix(mesh, layout, sigma0, current=cfg.current_ma)
    t2 = time.perf_counter()
    return InverseProblem(
        mesh=mesh,
        layout=layout,
        ops=ops,
        s=s,
        timings_s={"assembly": t1 - t0, "sensitivity": t2 - t1},
    )


def _forward_pair(cfg: PipelineConfig, coarse_layout: ElectrodeLayout):
    """Fine mesh with electrodes snapped to the coarse layout's angles."""
    fmesh = generate_disk_mesh(cfg.radius, cfg.forward_elements)
    flayout = place_electrodes(fmesh, cfg.electrode_count, angles=coarse_layout.angles)
    return fmesh, flayout


def _simulate_frames(cfg: PipelineConfig, fmesh: TriMesh, flayout: ElectrodeLayout, spec: PhantomSpec):
    """Reference/perturbed frames plus clean and noisy signed differences."""
    sigma_ref = forward.ConductivityField.homogeneous(cfg.sigma0, fmesh.n_elements)
    sigma_true = assign_conductivity(fmesh, spec)
    v_ref = forward.simulate_frame(fmesh, flayout, sigma_ref, current=cfg.current_ma)
    v_pert = forward.simulate_frame(fmesh, flayout, sigma_true, current=cfg.current_ma)
    dv = forward.VoltageFrame(forward.signed_difference(v_ref, v_pert), cfg.electrode_count)
    dv_noisy = forward.add_noise(dv, cfg.snr_db, cfg.seed)
    return v_ref, v_pert, dv, dv_noisy


def phantom_truth_image(spec: PhantomSpec, extent: float, resolution: int, radius: float) -> np.ndarray:
    """Analytic total-conductivity image on the raster grid (NaN outside).

    ``extent`` must match the raster grid of the mesh being compared
    against; pixel (iy, ix) is evaluated at its center, row iy
    increasing with y.
    """
    step = 2.0 * extent / resolution
    centers = -extent + step * (np.arange(resolution) + 0.5)
    xx, yy = np.meshgrid(centers, centers)  # yy varies along rows
    points = np.column_stack([xx.ravel(), yy.ravel()])
    inside = (points[:, 0] ** 2 + points[:, 1] ** 2) <= radius**2
    img = np.full(resolution * resolution, np.nan)
    img[inside] = spec.background
    claimed = np.zeros(len(points), dtype=bool)
    for inc in spec.inclusions:
        hit = inside & inc.contains(points) & ~claimed
        img[hit] = inc.value
        claimed |= hit
    return img.reshape(resolution, resolution)


# ---------------------------------------------------------------------------
# field-series files (iterate histories): repeated element-value blocks


def save_field_series(path, series: np.ndarray) -> None:
    """Write a (n_frames, n_elements) array as '# frame t' blocks."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 2:
        raise ValueError("expected a 2-d array of per-frame element values")
    with open(path, "w") as f:
        for t, row in enumerate(series, start=1):
            f.write(f"# frame {t}\n")
            f.write(f"{len(row)}\n")
            for v in row.tolist():
                f.write(f"{v!r}\n")


def load_field_series(path) -> np.ndarray:
    frames = []
    with open(path) as f:
        line = f.readline()
        while line:
            if not line.startswith("# frame"):
                raise ValueError(f"expected a frame header, got {line.strip()!r}")
            count = int(f.readline())
            vals = [float(f.readline()) for _ in range(count)]
            frames.append(vals)
            line = f.readline()
    if not frames:
        raise ValueError("no frames in file")
    return np.array(frames)


# ---------------------------------------------------------------------------
# solver dispatch


_ITERATIVE = {
    "nwatv": inverse.reconstruct_nwatv,
    "fotv": inverse.reconstruct_fotv,
    "tv": inverse.reconstruct_tv_isotropic,
}


def run_solver(
    cfg: PipelineConfig,
    problem: InverseProblem,
    delta_v: forward.VoltageFrame,
    *,
    lam: float | None = None,
    delta: float | None = None,
) -> inverse.ReconResult:
    """Run the configured solver; ``lam``/``delta`` override the config
    (used by sweeps)."""
    lam = cfg.lam if lam is None else lam
    delta = cfg.delta if delta is None else delta
    if cfg.solver == "tikhonov":
        t0 = time.perf_counter()
        x = inverse.reconstruct_tikhonov(problem.s, delta_v, lam)
        ms = (time.perf_counter() - t0) * 1e3
        b = delta_v.data
        resid = np.linalg.norm(problem.s.matrix @ x - b)
        scale = np.linalg.norm(b)
        if scale > 0:
            resid /= scale
        return inverse.ReconResult(
            final=x,
            history=x[None, :],
            data_residual=np.array([resid]),
            step_norm=np.array([np.linalg.norm(x)]),
            wall_ms=np.array([ms]),
            termination="direct",
        )
    solver_config = inverse.SolverConfig(
        lam=lam,
        rho=cfg.rho,
        delta=delta,
        max_iters=cfg.max_iters,
        tol=cfg.tol,
        mask=None if cfg.mask_elements is None else np.asarray(cfg.mask_elements, dtype=int),
        lambda_b=cfg.lambda_b,
        enable_preprocess=cfg.enable_preprocess,
    )
    boundary = problem.mesh.boundary_elements() if cfg.enable_preprocess else None
    return _ITERATIVE[cfg.solver](
        problem.s, delta_v, problem.ops, solver_config, boundary_elements=boundary
    )


# ---------------------------------------------------------------------------
# commands


def _outdir(cfg: PipelineConfig, out_dir) -> Path:
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_mesh(cfg: PipelineConfig, out_dir=None) -> dict:
    """Write meshes, the phantom, the true perturbation, and a truth image."""
    out = _outdir(cfg, out_dir)
    t0 = time.perf_counter()
    imesh = generate_disk_mesh(cfg.radius, cfg.inverse_elements)
    ilayout = place_electrodes(imesh, cfg.electrode_count)
    fmesh, flayout = _forward_pair(cfg, ilayout)
    spec = load_phantom_spec(cfg)
    sigma_coarse = assign_conductivity(imesh, spec)
    delta_true = sigma_coarse.values - cfg.sigma0
    truth = phantom_truth_image(
        spec, raster_extent(imesh), cfg.raster_resolution, cfg.radius
    )
    elapsed = time.perf_counter() - t0

    save_mesh(out / "inverse_mesh.txt", imesh, ilayout)
    save_mesh(out / "forward_mesh.txt", fmesh, flayout)
    save_phantom(out / "phantom.json", spec)
    save_element_values(out / "delta_sigma_true.txt", delta_true)
    metrics.write_image_pgm(out / "truth_image.pgm", truth)
    manifest = {
        "command": "mesh",
        "inverse_elements": imesh.n_elements,
        "inverse_nodes": imesh.n_nodes,
        "forward_elements": fmesh.n_elements,
        "forward_nodes": fmesh.n_nodes,
        "electrode_count": cfg.electrode_count,
        "timings_s": {"assembly": elapsed},
        "config": _config_json(cfg),
    }
    _write_json(out / "mesh.json", manifest)
    return manifest


def cmd_simulate(cfg: PipelineConfig, out_dir=None) -> dict:
    """Forward-simulate reference and perturbed frames; write the signed
    difference and its noisy copy."""
    out = _outdir(cfg, out_dir)
    t0 = time.perf_counter()
    imesh = generate_disk_mesh(cfg.radius, cfg.inverse_elements)
    ilayout = place_electrodes(imesh, cfg.electrode_count)
    fmesh, flayout = _forward_pair(cfg, ilayout)
    spec = load_phantom_spec(cfg)
    t1 = time.perf_counter()
    v_ref, v_pert, dv, dv_noisy = _simulate_frames(cfg, fmesh, flayout, spec)
    t2 = time.perf_counter()

    forward.save_frames(out / "v_reference.txt", [v_ref])
    forward.save_frames(out / "v_perturbed.txt", [v_pert])
    forward.save_frames(out / "dv_clean.txt", [dv])
    forward.save_frames(out / "dv_noisy.txt", [dv_noisy])
    manifest = {
        "command": "simulate",
        "seed": cfg.seed,
        "snr_db": "inf" if math.isinf(cfg.snr_db) else cfg.snr_db,
        "electrode_count": cfg.electrode_count,
        "current_ma": cfg.current_ma,
        "n_measurements": len(dv),
        "sign_convention": "reference_minus_perturbed",
        "noise_applied_to": "difference_frame",
        "files": ["v_reference.txt", "v_perturbed.txt", "dv_clean.txt", "dv_noisy.txt"],
        "timings_s": {"assembly": t1 - t0, "solve": t2 - t1},
        "config": _config_json(cfg),
    }
    _write_json(out / "simulate.json", manifest)
    return manifest


def _load_single_frame(path, expected_e: int) -> forward.VoltageFrame:
    try:
        frames = forward.load_frames(path)
    except FileNotFoundError:
        raise ConfigError(f"voltage file not found: {path}")
    frame = frames[0]
    if frame.electrode_count != expected_e:
        raise ConfigError(
            f"voltage file has {frame.electrode_count} electrodes, config says {expected_e}"
        )
    return frame


def cmd_reconstruct(cfg: PipelineConfig, data_path=None, out_dir=None) -> dict:
    """Reconstruct from a measured-difference file; write the final field,
    the iterate history and CSV, and a raster image."""
    out = _outdir(cfg, out_dir)
    data_path = Path(data_path) if data_path is not None else out / "dv_noisy.txt"
    problem = build_inverse_problem(cfg)
    dv = _load_single_frame(data_path, cfg.electrode_count)
    t0 = time.perf_counter()
    result = run_solver(cfg, problem, dv)
    iterations_s = time.perf_counter() - t0

    save_element_values(out / "delta_sigma.txt", result.final)
    save_field_series(out / "iterates.txt", result.history)
    with open(out / "iterates.csv", "w") as f:
        f.write("iteration,data_residual,step_norm,wall_ms\n")
        for n in range(result.n_iterations):
            f.write(
                f"{n + 1},{result.data_residual[n]!r},"
                f"{result.step_norm[n]!r},{result.wall_ms[n]!r}\n"
            )
    image = rasterize(problem.mesh, cfg.sigma0 + result.final, cfg.raster_resolution)
    metrics.write_image_pgm(out / "recon_image.pgm", image)
    manifest = {
        "command": "reconstruct",
        "solver": cfg.solver,
        "data_file": str(data_path),
        "termination": result.termination,
        "n_iterations": result.n_iterations,
        "final_data_residual": float(result.data_residual[-1]),
        "files": [
            "delta_sigma.txt",
            "iterates.txt",
            "iterates.csv",
            "recon_image.pgm",
        ],
        "timings_s": {
            "assembly": problem.timings_s["assembly"],
            "sensitivity": problem.timings_s["sensitivity"],
            "iterations": iterations_s,
        },
        "config": _config_json(cfg),
    }
    _write_json(out / "result.json", manifest)
    return manifest


def _truth_image_for(cfg: PipelineConfig, mesh: TriMesh, reference=None) -> np.ndarray:
    """Total-conductivity ground-truth image: analytic from the phantom, or
    a stored perturbation field used as a surrogate reference."""
    if reference is not None:
        ref_path = Path(reference)
        if not ref_path.is_file():
            raise ConfigError(f"reference field not found: {reference}")
        ref = load_element_values(ref_path)
        if len(ref) != mesh.n_elements:
            raise ConfigError(
                f"reference field has {len(ref)} values, mesh has {mesh.n_elements} elements"
            )
        return rasterize(mesh, cfg.sigma0 + ref, cfg.raster_resolution)
    spec = load_phantom_spec(cfg)
    return phantom_truth_image(
        spec, raster_extent(mesh), cfg.raster_resolution, cfg.radius
    )


def cmd_evaluate(cfg: PipelineConfig, result_dir=None, out_dir=None, reference=None) -> metrics.EvalReport:
    """Score a reconstruction run: per-iterate RE/PSNR plus line profiles.

    ``reference`` (a stored perturbation field) replaces the analytic
    phantom truth when given. All outputs are computed before anything is
    written, so a failure leaves no partial files.
    """
    result_dir = Path(result_dir if result_dir is not None else cfg.out_dir)
    out = _outdir(cfg, out_dir if out_dir is not None else result_dir)
    series_path = result_dir / "iterates.txt"
    if not series_path.is_file():
        raise ConfigError(f"no iterate history at {series_path}; run reconstruct first")

    mesh = generate_disk_mesh(cfg.radius, cfg.inverse_elements)
    series = load_field_series(series_path)
    if series.shape[1] != mesh.n_elements:
        raise ConfigError(
            f"iterate history has {series.shape[1]} values per frame, "
            f"mesh has {mesh.n_elements} elements"
        )
    truth = _truth_image_for(cfg, mesh, reference)

    res = cfg.raster_resolution
    re_list, psnr_list = [], []
    final_image = None
    for row in series:
        image = rasterize(mesh, cfg.sigma0 + row, res)
        re_list.append(metrics.relative_error(image, truth))
        psnr_list.append(metrics.psnr(image, truth))
        final_image = image

    profiles = {}
    for r in cfg.profile_rows:
        profiles[f"recon_row{r}"] = metrics.profile(final_image, (r, 0), (r, res - 1), res)
        profiles[f"truth_row{r}"] = metrics.profile(truth, (r, 0), (r, res - 1), res)
    report = metrics.EvalReport(
        re_per_iter=re_list, psnr_per_iter=psnr_list, profile_samples=profiles
    )

    metrics.save_eval_report(out / "eval.csv", report)
    with open(out / "profiles.csv", "w") as f:
        names = list(profiles)
        f.write("position," + ",".join(names) + "\n")
        for i in range(res):
            vals = ",".join(repr(float(profiles[k][i])) for k in names)
            f.write(f"{i},{vals}\n")
    _write_json(
        out / "evaluate.json",
        {
            "command": "evaluate",
            "n_iterations": len(re_list),
            "final_re": re_list[-1],
            "final_psnr": psnr_list[-1],
            "reference": None if reference is None else str(reference),
            "files": ["eval.csv", "profiles.csv"],
            "config": _config_json(cfg),
        },
    )
    return report


def cmd_sweep(cfg: PipelineConfig, out_dir=None, data_path=None) -> list[dict]:
    """Grid-sweep lam/rho x delta; one reconstruction per cell, scored
    against the analytic truth image.

    Cells run on a thread pool; rows are emitted in grid order (ratio-major)
    regardless of completion order. Per-cell failures are recorded in the
    table and the sweep continues.
    """
    out = _outdir(cfg, out_dir)
    t0 = time.perf_counter()
    problem = build_inverse_problem(cfg)
    spec = load_phantom_spec(cfg)
    if data_path is not None:
        dv = _load_single_frame(Path(data_path), cfg.electrode_count)
    else:
        fmesh, flayout = _forward_pair(cfg, problem.layout)
        dv = _simulate_frames(cfg, fmesh, flayout, spec)[3]
    truth = phantom_truth_image(
        spec, raster_extent(problem.mesh), cfg.raster_resolution, cfg.radius
    )
    t1 = time.perf_counter()

    cells = [
        (ratio, delta)
        for ratio in cfg.sweep_lambda_over_rho
        for delta in cfg.sweep_delta
    ]

    def run_cell(cell):
        ratio, delta = cell
        try:
            result = run_solver(cfg, problem, dv, lam=ratio * cfg.rho, delta=delta)
            image = rasterize(problem.mesh, cfg.sigma0 + result.final, cfg.raster_resolution)
            return {
                "lambda_over_rho": ratio,
                "delta": delta,
                "iterations": result.n_iterations,
                "termination": result.termination,
                "re": metrics.relative_error(image, truth),
                "psnr": metrics.psnr(image, truth),
            }
        except Exception as exc:  # per-cell failures must not kill the sweep
            return {
                "lambda_over_rho": ratio,
                "delta": delta,
                "iterations": 0,
                "termination": f"error:{type(exc).__name__}",
                "re": math.nan,
                "psnr": math.nan,
            }

    with ThreadPoolExecutor(max_workers=min(8, len(cells))) as pool:
        rows = list(pool.map(run_cell, cells))
    t2 = time.perf_counter()

    with open(out / "sweep.csv", "w") as f:
        f.write("index,lambda_over_rho,delta,iterations,termination,re,psnr\n")
        for i, row in enumerate(rows):
            f.write(
                f"{i},{row['lambda_over_rho']!r},{row['delta']!r},"
                f"{row['iterations']},{row['termination']},"
                f"{row['re']!r},{row['psnr']!r}\n"
            )
    _write_json(
        out / "sweep.json",
        {
            "command": "sweep",
            "n_cells": len(cells),
            "seed": cfg.seed,
            "solver": cfg.solver,
            "data_file": None if data_path is None else str(data_path),
            "failures": sum(1 for r in rows if r["termination"].startswith("error")),
            "timings_s": {"setup": t1 - t0, "cells": t2 - t1},
            "files": ["sweep.csv"],
            "config": _config_json(cfg),
        },
    )
    return rows


def cmd_render(cfg: PipelineConfig, field_path, out_dir=None, name=None) -> Path:
    """Rasterize a stored element-value field to a grayscale image.

    Values are rendered verbatim (no background offset); the sidecar map
    records the value range.
    """
    out = _outdir(cfg, out_dir)
    field_path = Path(field_path)
    if not field_path.is_file():
        raise ConfigError(f"field file not found: {field_path}")
    values = load_element_values(field_path)
    mesh = generate_disk_mesh(cfg.radius, cfg.inverse_elements)
    if len(values) != mesh.n_elements:
        raise ConfigError(
            f"field has {len(values)} values, mesh has {mesh.n_elements} elements"
        )
    image = rasterize(mesh, values, cfg.raster_resolution)
    stem = name if name is not None else field_path.stem
    target = out / f"{stem}.pgm"
    metrics.write_image_pgm(target, image)
    return target
