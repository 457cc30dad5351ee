"""Batch command-line front end: JSON config in, JSON/CSV artifacts out.

Exit codes: 0 success, 1 configuration error, 2 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import orbits as ob
from . import transfer as tr
from .errors import ConfigError, NonconvergenceError, NumericRangeError
from .ifs import PRESETS, IfsSpec, affine_map, ifs_spec
from .lyapunov import hs_angle, lyap_matrix, oseledets_projection
from .symbolic import Potential, tail_weighted_family, truncate_to_memory

SCHEMA_VERSION = 1
GAP_FLOOR = 1e-3


def _require_keys(obj: dict, allowed: set, where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}; "
                          f"allowed: {sorted(allowed)}")


def parse_ifs(obj) -> IfsSpec:
    if isinstance(obj, str):
        if obj not in PRESETS:
            raise ConfigError(f"unknown ifs preset {obj!r}; "
                              f"available: {sorted(PRESETS)}")
        return PRESETS[obj]()
    if not isinstance(obj, dict):
        raise ConfigError("ifs must be a preset name or an object")
    if "preset" in obj:
        _require_keys(obj, {"preset", "rho"}, "ifs")
        name = obj["preset"]
        if name not in PRESETS:
            raise ConfigError(f"unknown ifs preset {name!r}")
        if name in ("rotation_family", "rotation_pair"):
            if "rho" not in obj:
                raise ConfigError(f"preset {name!r} needs key 'rho'")
            return PRESETS[name](float(obj["rho"]))
        return PRESETS[name]()
    if "maps" in obj:
        _require_keys(obj, {"maps"}, "ifs")
        maps = []
        for j, m in enumerate(obj["maps"]):
            _require_keys(m, {"linear", "offset"}, f"ifs.maps[{j}]")
            try:
                maps.append(affine_map(np.array(m["linear"], dtype=float),
                                       np.array(m["offset"], dtype=float)))
            except ValueError as exc:
                raise ConfigError(f"ifs.maps[{j}]: {exc}") from exc
        return ifs_spec(maps)
    raise ConfigError("ifs object needs 'preset' or 'maps'")


def parse_potential(obj, t: int) -> Potential:
    if obj is None:
        return Potential.constant(t, 0.0)
    if not isinstance(obj, dict):
        raise ConfigError("potential must be an object or null")
    if "constant" in obj:
        _require_keys(obj, {"constant", "memory"}, "potential")
        return Potential.constant(t, float(obj["constant"]),
                                  memory=int(obj.get("memory", 1)))
    if "table" in obj:
        _require_keys(obj, {"table", "memory"}, "potential")
        if "memory" not in obj:
            raise ConfigError("tabulated potential needs 'memory'")
        try:
            return Potential.from_dict(t, int(obj["memory"]), obj["table"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if "family" in obj:
        _require_keys(obj, {"family", "values", "weight", "truncation_k"},
                      "potential")
        if obj["family"] != "tail_weighted":
            raise ConfigError(f"unknown potential family {obj['family']!r}")
        fam = tail_weighted_family(t, [float(v) for v in obj["values"]],
                                   float(obj["weight"]))
        return truncate_to_memory(fam, int(obj.get("truncation_k", 2)))
    raise ConfigError("potential needs 'constant', 'table' or 'family'")


def _grid(obj, default_start, default_stop, default_num):
    if obj is None:
        return np.linspace(default_start, default_stop, default_num)
    if isinstance(obj, list):
        return np.asarray([float(v) for v in obj])
    _require_keys(obj, {"start", "stop", "num", "log"}, "grid")
    start, stop = float(obj["start"]), float(obj["stop"])
    num = int(obj.get("num", default_num))
    if obj.get("log", False):
        return np.geomspace(start, stop, num)
    return np.linspace(start, stop, num)


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: str, header: list, columns: list):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([_fmt(v) for v in row])


def _write_json(path: str, payload: dict):
    payload = dict(payload)
    payload["schema_version"] = SCHEMA_VERSION
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _matrix_list(mat: np.ndarray) -> list:
    return [float(v) for v in np.asarray(mat).reshape(-1)]


def _state_label(state) -> str:
    return "".join(str(s) for s in state) if state else "-"


def _spectral_payload(res: tr.SpectralResult) -> dict:
    block = res.block
    return {
        "beta": res.beta,
        "pressure": res.pressure,
        "iterations": res.iterations,
        "theta": res.theta,
        "cone_diameter": res.diameter,
        "residual_right": res.residual_right,
        "residual_left": res.residual_left,
        "states": [_state_label(u) for u in block.states],
        "Q": {_state_label(u): _matrix_list(res.q_matrix(j))
              for j, u in enumerate(block.states)},
        "mu": {_state_label(u): _matrix_list(res.mu_matrix(j))
               for j, u in enumerate(block.states)},
    }


def cmd_solve(cfg: dict, out: str, seed: int, workers: int, fmt: str) -> dict:
    _require_keys(cfg, {"ifs", "q", "potential", "tol", "max_iter", "seed"},
                  "config")
    ifs = parse_ifs(cfg["ifs"])
    q = int(cfg.get("q", 1))
    pot = parse_potential(cfg.get("potential"), ifs.t)
    res = tr.solve(ifs, q, pot, tol=float(cfg.get("tol", 1e-12)),
                   max_iter=int(cfg.get("max_iter", 50_000)))
    payload = _spectral_payload(res)
    _write_json(os.path.join(out, "solve_summary.json"), payload)
    return payload


def cmd_root(cfg: dict, out: str, seed: int, workers: int, fmt: str) -> dict:
    _require_keys(cfg, {"ifs", "q", "potential", "tol", "seed"}, "config")
    ifs = parse_ifs(cfg["ifs"])
    q = int(cfg.get("q", 1))
    vhat = parse_potential(cfg.get("potential"), ifs.t)
    tol = float(cfg.get("tol", 1e-10))
    p0 = tr.pressure(ifs, q, Potential.constant(ifs.t, 0.0))
    c = tr.pressure_root(ifs, q, vhat, tol=tol)
    payload = {"c": c, "pressure_at_root": tr.pressure(ifs, q, vhat.scaled(-c)),
               "pressure_at_zero": p0}
    _write_json(os.path.join(out, "root_summary.json"), payload)
    return payload


def _counting_context(cfg: dict, workers: int):
    ifs = parse_ifs(cfg["ifs"])
    q = int(cfg.get("q", 1))
    vhat = parse_potential(cfg.get("potential"), ifs.t)
    family = ifs.family(q)
    beta = math.exp(tr.pressure(ifs, q, Potential.constant(ifs.t, 0.0)))
    if "c" in cfg and cfg["c"] is not None:
        c = float(cfg["c"])
    else:
        c = tr.pressure_root(ifs, q, vhat, tol=float(cfg.get("tol", 1e-10)))
    max_period = int(cfg.get("max_period", 10))
    data = ob.enumerate_orbits(family, max_period, workers=workers)
    return ifs, q, vhat, family, beta, c, max_period, data


def cmd_count(cfg: dict, out: str, seed: int, workers: int, fmt: str) -> dict:
    _require_keys(cfg, {"ifs", "q", "potential", "c", "tol", "max_period",
                        "gamma_prime", "r_grid", "seed"}, "config")
    ifs, q, vhat, family, beta, c, max_period, data = _counting_context(cfg, workers)
    tables = ob.counting_tables(family, vhat, c, max_period, orbit_data=data)
    gamma_prime = float(cfg.get("gamma_prime", 1.5))
    r_values = _grid(cfg.get("r_grid"), 1.0, float(max_period), max_period)
    report = ob.asymptotic_report(tables, beta, c, gamma_prime=gamma_prime,
                                  r_values=r_values)
    header = list(report.keys())
    columns = [report[k] for k in header]
    payload = {
        "beta": beta, "c": c, "max_period": max_period,
        "pi_bounded": bool(c < 0), "n_orbits": data.n_orbits(),
        "exact_weight": tables.exact_weight,
        "bound_beta_ratio": beta / (beta - 1.0) if beta > 1.0 else None,
        "gamma_prime": gamma_prime,
    }
    if fmt == "json":
        payload["table"] = {k: [float(v) for v in report[k]] for k in header}
    else:
        _write_csv(os.path.join(out, "count_table.csv"), header, columns)
    _write_json(os.path.join(out, "count_summary.json"), payload)
    return payload


def cmd_zeta(cfg: dict, out: str, seed: int, workers: int, fmt: str) -> dict:
    _require_keys(cfg, {"ifs", "q", "potential", "n_terms", "max_period",
                        "counted_tail_to", "z_points", "seed"}, "config")
    ifs = parse_ifs(cfg["ifs"])
    q = int(cfg.get("q", 1))
    pot = parse_potential(cfg.get("potential"), ifs.t)
    family = ifs.family(q)
    block = tr.build_block_operator(ifs, q, pot)
    beta = block.spectral_radius()
    n_terms = int(cfg.get("n_terms", 60))
    max_period = int(cfg.get("max_period", 10))
    counted_to = cfg.get("counted_tail_to")
    data = ob.enumerate_orbits(family, max_period, workers=workers)
    if cfg.get("z_points") is not None:
        zs = [complex(float(p[0]), float(p[1])) for p in cfg["z_points"]]
    else:
        radius = 0.5 / beta
        zs = [radius * complex(math.cos(2 * math.pi * j / 8),
                               math.sin(2 * math.pi * j / 8)) for j in range(8)]
    rows = {k: [] for k in ("z_re", "z_im", "series_re", "series_im",
                            "euler_re", "euler_im", "rational_re", "rational_im",
                            "series_tail", "euler_tail")}
    for z in zs:
        sres = ob.zeta_series(z, block, n_terms)
        eres = ob.zeta_euler(z, data, pot, beta=beta,
                             counted_tail_to=int(counted_to) if counted_to else None)
        rres = ob.zeta_rational(z, block)
        rows["z_re"].append(z.real)
        rows["z_im"].append(z.imag)
        rows["series_re"].append(sres.value.real)
        rows["series_im"].append(sres.value.imag)
        rows["euler_re"].append(eres.value.real)
        rows["euler_im"].append(eres.value.imag)
        rows["rational_re"].append(rres.value.real if rres.value else math.inf)
        rows["rational_im"].append(rres.value.imag if rres.value else math.inf)
        rows["series_tail"].append(sres.tail_bound)
        rows["euler_tail"].append(eres.tail_bound)
    pole = ob.find_real_pole(block)
    payload = {"beta": beta, "pole": pole, "n_terms": n_terms,
               "max_period": max_period, "n_orbits": data.n_orbits()}
    header = list(rows.keys())
    if fmt == "json":
        payload["table"] = rows
    else:
        _write_csv(os.path.join(out, "zeta_table.csv"), header,
                   [rows[k] for k in header])
    _write_json(os.path.join(out, "zeta_summary.json"), payload)
    return payload


def cmd_variational(cfg: dict, out: str, seed: int, workers: int, fmt: str) -> dict:
    _require_keys(cfg, {"ifs", "q", "potential", "samples", "depth",
                        "competitors", "tol", "seed"}, "config")
    ifs = parse_ifs(cfg["ifs"])
    q = int(cfg.get("q", 1))
    pot = parse_potential(cfg.get("potential"), ifs.t)
    res = tr.solve(ifs, q, pot, tol=float(cfg.get("tol", 1e-12)))
    cm = tr.CylinderMeasure(res)
    samples = int(cfg.get("samples", 20_000))
    depth = int(cfg.get("depth", 24))
    competitors = cfg.get("competitors", ["kusuoka"])
    results = []
    for j, comp in enumerate(competitors):
        weights = None if comp == "kusuoka" else [float(w) for w in comp]
        rep = tr.variational_value(cm, samples, depth=depth, seed=seed + j,
                                   weights=weights)
        results.append({
            "competitor": rep.competitor if weights is None else str(weights),
            "entropy": rep.entropy, "energy": rep.energy,
            "interaction": rep.interaction, "total": rep.total,
            "se_total": rep.se_total, "se_entropy": rep.se_entropy,
            "se_energy": rep.se_energy, "se_interaction": rep.se_interaction,
            "gap_to_pressure": res.pressure - rep.total,
            "norm_violations": rep.norm_violations,
        })
    payload = {"pressure": res.pressure, "beta": res.beta, "depth": depth,
               "samples": samples, "rows": results}
    _write_json(os.path.join(out, "variational_summary.json"), payload)
    return payload


def cmd_lyapunov(cfg: dict, out: str, seed: int, workers: int, fmt: str) -> dict:
    _require_keys(cfg, {"ifs", "q", "potential", "n_words", "l", "tol", "seed"},
                  "config")
    ifs = parse_ifs(cfg["ifs"])
    q = int(cfg.get("q", 1))
    pot = parse_potential(cfg.get("potential"), ifs.t)
    res = tr.solve(ifs, q, pot, tol=float(cfg.get("tol", 1e-12)))
    cm = tr.CylinderMeasure(res)
    n_words = int(cfg.get("n_words", 32))
    l = int(cfg.get("l", 200))
    family = res.block.family
    mu_total = res.mu_total_matrix()
    words = cm.sample_many(l, n_words, seed=seed)
    cols = {k: [] for k in ("word_index", "l", "top_eigenvalue", "gap",
                            "idempotency_defect", "alignment_angle", "skipped")}
    n_skipped = 0
    for idx in range(n_words):
        word = tuple(int(s) for s in words[idx])
        est = lyap_matrix(family, mu_total, word, l)
        osel = oseledets_projection(family, mu_total, word, l)
        density = cm.density(word[:l])
        angle = hs_angle(osel.projection, density)
        skipped = est.gap < GAP_FLOOR
        n_skipped += int(skipped)
        cols["word_index"].append(idx)
        cols["l"].append(l)
        cols["top_eigenvalue"].append(est.eigenvalues[0])
        cols["gap"].append(est.gap)
        cols["idempotency_defect"].append(osel.idempotency_defect)
        cols["alignment_angle"].append(angle)
        cols["skipped"].append(float(skipped))
    payload = {
        "l": l, "n_words": n_words, "n_skipped": n_skipped,
        "gap_floor": GAP_FLOOR,
        "mean_top_eigenvalue": float(np.mean(cols["top_eigenvalue"])),
        "max_idempotency_defect": float(np.max(cols["idempotency_defect"])),
        "max_alignment_angle": float(np.max(cols["alignment_angle"])),
    }
    header = list(cols.keys())
    if fmt == "json":
        payload["table"] = cols
    else:
        _write_csv(os.path.join(out, "lyapunov_table.csv"), header,
                   [cols[k] for k in header])
    _write_json(os.path.join(out, "lyapunov_summary.json"), payload)
    return payload


def cmd_scanline(cfg: dict, out: str, seed: int, workers: int, fmt: str) -> dict:
    _require_keys(cfg, {"ifs", "q", "potential", "c", "tol", "y_grid",
                        "exclude", "seed"}, "config")
    ifs = parse_ifs(cfg["ifs"])
    q = int(cfg.get("q", 1))
    vhat = parse_potential(cfg.get("potential"), ifs.t)
    family = ifs.family(q)
    if "c" in cfg and cfg["c"] is not None:
        c = float(cfg["c"])
    else:
        c = tr.pressure_root(ifs, q, vhat, tol=float(cfg.get("tol", 1e-10)))
    if c <= 0:
        raise ConfigError("line scan applies to the c > 0 case")
    pot = vhat.scaled(abs(c))
    y_values = _grid(cfg.get("y_grid"), 0.0, 20.0, 401)
    scan = ob.line_scan(family, pot, y_values,
                        exclude=float(cfg.get("exclude", 0.05)))
    payload = {"c": c, "min_modulus": scan.min_modulus,
               "argmin_y": scan.argmin_y, "exclusion": scan.exclusion}
    cols = {"y": scan.y, "re": scan.det.real, "im": scan.det.imag,
            "abs": np.abs(scan.det)}
    if fmt == "json":
        payload["table"] = {k: [float(v) for v in cols[k]] for k in cols}
    else:
        _write_csv(os.path.join(out, "scanline_table.csv"), list(cols.keys()),
                   [cols[k] for k in cols])
    _write_json(os.path.join(out, "scanline_summary.json"), payload)
    return payload


COMMANDS = {
    "solve": cmd_solve,
    "root": cmd_root,
    "count": cmd_count,
    "zeta": cmd_zeta,
    "variational": cmd_variational,
    "lyapunov": cmd_lyapunov,
    "scanline": cmd_scanline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ifszeta",
        description="Transfer-operator spectra, cylinder measures, zeta "
                    "functions and orbit counts for affine IFS fractals.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="RNG seed")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if not isinstance(cfg, dict):
        print("config error: top level must be an object", file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    try:
        COMMANDS[args.command](cfg, args.out, seed, args.workers, args.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NonconvergenceError, NumericRangeError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
