"""``netident`` command-line tool.

Exit codes: 0 success / confident detection, 1 usage or configuration error,
2 ambiguous detection, 3 radix decode or reconstruction failure.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from . import __version__
from .detection import (AmbiguousDetection, DecodeError, ReconstructionError, StaleTable,
                        build_table, detect, load_table, reconstruct_lti, table_text)
from .formats import (atomic_write, dump_json, fmt_number, parse_number, read_vector_file,
                      steady_state_csv)
from .graphs import FamilyTooLarge, Graph, GraphError, GraphFamily, enumerate_family, parse_graph
from .indication import (IndicationVector, SeparationError, applied_input, gaussian_w, radix_w,
                         separation_index)
from .models import ModelError, NetworkModel, parse_model
from .simulation import (ConvergenceError, DivergenceError, StepTooLarge, case_study, integrate,
                         run_scenario, run_to_convergence)
from .steady_state import NonConvergence, SteadyStateError, solve

EXIT_OK, EXIT_USAGE, EXIT_AMBIGUOUS, EXIT_DECODE = 0, 1, 2, 3

ENV_OUT_DIR = "NETIDENT_OUT_DIR"
ENV_JOBS = "NETIDENT_JOBS"

_CONFIG_ERRORS = (ModelError, GraphError, FamilyTooLarge, SteadyStateError, SeparationError,
                  StaleTable, NonConvergence, ConvergenceError, DivergenceError, StepTooLarge,
                  ValueError, OSError, KeyError)


class _Fail(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


def _error_record(kind: str, message: str) -> str:
    return json.dumps({"error": kind, "message": message}, sort_keys=True)


class _Group(click.Group):
    """Maps library exceptions to the exit-code contract with a JSON error line on stderr."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except _Fail as err:
            click.echo(_error_record(err.kind, str(err)), err=True)
            ctx.exit(err.code)
        except AmbiguousDetection as err:
            click.echo(_error_record("ambiguous", str(err)), err=True)
            ctx.exit(EXIT_AMBIGUOUS)
        except (DecodeError, ReconstructionError) as err:
            click.echo(_error_record("decode", str(err)), err=True)
            ctx.exit(EXIT_DECODE)
        except _CONFIG_ERRORS as err:
            click.echo(_error_record(type(err).__name__, str(err)), err=True)
            ctx.exit(EXIT_USAGE)


# -- shared plumbing ----------------------------------------------------------------

def _meta(command: str, seed, **config) -> dict:
    """Provenance block embedded in every artifact; no timestamps, so reruns are byte-identical."""
    canon = json.dumps({"command": command, **config}, sort_keys=True, default=str)
    return {"tool": "netident", "version": __version__,
            "config_hash": hashlib.sha256(canon.encode()).hexdigest()[:16], "seed": seed}


def _meta_comment(meta: dict) -> str:
    return (f"# tool: {meta['tool']} {meta['version']}\n# config: {meta['config_hash']}\n"
            f"# seed: {json.dumps(meta['seed'])}\n")


def _out_path(ctx, path, default: str) -> Path:
    if path:
        return Path(path)
    return Path(ctx.obj["out_dir"]) / default


def _write(path: Path, text: str):
    atomic_write(path, text)
    click.echo(f"wrote {path}", err=True)


def _load_model(path) -> NetworkModel:
    return parse_model(Path(path).read_text())


def _lti(model: NetworkModel):
    if model.lti is None:
        raise _Fail(EXIT_USAGE, "config", "this command needs an all-LTI model")
    return model.lti


def _load_graph(spec: str, n: int) -> Graph:
    """A graph file, or ``key:<bits>`` with one bit per vertex pair."""
    if spec.startswith("key:"):
        return Graph.from_key(n, spec[4:])
    g = parse_graph(Path(spec).read_text())
    if g.n != n:
        raise _Fail(EXIT_USAGE, "config", f"graph has {g.n} vertices, model has {n}")
    return g


def _family(spec: str | None, n: int) -> GraphFamily:
    fam = GraphFamily.from_spec(spec) if spec else GraphFamily.all(n)
    if fam.n != n:
        raise _Fail(EXIT_USAGE, "config", f"family is on {fam.n} vertices, model has {n}")
    return fam


def _w_record(iv: IndicationVector, meta: dict, report: dict | None = None) -> dict:
    rec = {"meta": meta, "w": [fmt_number(v) for v in iv.w],
           "provenance": {k: (fmt_number(v) if isinstance(v, (Fraction, float)) else v)
                          for k, v in iv.provenance.items()}}
    if report:
        rec["report"] = report
    return rec


def _load_w(path) -> IndicationVector:
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        w = tuple(parse_number(str(v)) for v in data["w"])
        prov = dict(data.get("provenance", {"mode": "given"}))
        for k in ("M", "N", "D"):
            if k in prov:
                prov[k] = int(prov[k])
        fam = prov.get("family")
        return IndicationVector(w, prov, GraphFamily.from_spec(fam) if fam else None)
    return IndicationVector(tuple(read_vector_file(path)), {"mode": "given"})


def _w_hash(iv: IndicationVector) -> list:
    return [fmt_number(v) for v in iv.w]


def _vector_json(values) -> list:
    return [fmt_number(v) for v in values]


def _radix_precision_warning(iv: IndicationVector):
    """Warn when float64 cannot hold outputs of this size to within the digit rounding margin."""
    prov = iv.provenance
    if prov.get("mode") != "radix":
        return
    if prov.get("log10_rel_precision_needed", 0) < math.log10(np.finfo(float).eps):
        click.echo("warning: radix outputs exceed double precision; measurements must be exact "
                   "or extended precision for decoding", err=True)


def _detection_record(res, table, meta, y) -> dict:
    return {"meta": meta, "graph": res.graph.key_string() or "-",
            "edges": [list(e) for e in res.graph.edges], "distance": fmt_number(res.distance),
            "margin": fmt_number(res.margin), "runner_up": fmt_number(res.runner_up),
            "epsilon": fmt_number(table.epsilon), "confident": res.confident,
            "y": _vector_json(y)}


# -- commands -------------------------------------------------------------------------

@click.group(cls=_Group)
@click.version_option(__version__, prog_name="netident")
@click.option("--out-dir", envvar=ENV_OUT_DIR, default=".", show_default=True,
              type=click.Path(file_okay=False),
              help=f"Directory for default output files (env {ENV_OUT_DIR}).")
@click.option("--jobs", envvar=ENV_JOBS, default=1, show_default=True,
              type=click.IntRange(min=1), help=f"Worker processes (env {ENV_JOBS}).")
@click.pass_context
def main(ctx, out_dir, jobs):
    """Identify the interaction graph of a diffusively coupled network from steady outputs."""
    ctx.ensure_object(dict)
    ctx.obj.update(out_dir=out_dir, jobs=jobs)


@main.command("gen-w")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False),
              help="Model config file (required for radix mode and for the margin report).")
@click.option("-n", "n", type=int, help="Number of agents when no model is given.")
@click.option("--mode", type=click.Choice(["gaussian", "radix"]), default="gaussian",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Seed of the Gaussian draw.")
@click.option("--scale", type=float, default=1.0, show_default=True,
              help="Multiplier of the Gaussian draw.")
@click.option("--family", "family_spec", help="Graph family, e.g. all:4 (default: all graphs).")
@click.option("--radix", "M", type=int, help="Override the radix M (radix mode).")
@click.option("--epsilon/--no-epsilon", "report_eps", default=True, show_default=True,
              help="Compute the separation index when a model is given (gaussian mode).")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Output file [w.json].")
@click.pass_context
def gen_w(ctx, model_path, n, mode, seed, scale, family_spec, M, report_eps, output):
    """Generate an indication vector and report its margin."""
    model = _load_model(model_path) if model_path else None
    if model is not None:
        n = model.n
    if n is None:
        raise _Fail(EXIT_USAGE, "usage", "give --model or -n")
    fam = _family(family_spec, n)
    report = {}
    if mode == "radix":
        if model is None:
            raise _Fail(EXIT_USAGE, "usage", "radix mode needs --model")
        iv = radix_w(fam, _lti(model), M)
        report = {"M": iv.provenance["M"], "N": iv.provenance["N"], "D": iv.provenance["D"],
                  "abs_error_budget_per_agent": fmt_number(Fraction(1, 2 * iv.provenance["D"]))}
        seed = None
    else:
        iv = gaussian_w(n, seed, scale)
        if model is not None and report_eps:
            rep = separation_index(iv, fam, model)
            report = {"epsilon": fmt_number(rep.epsilon),
                      "error_budget": fmt_number(rep.epsilon / 2)}
    iv.provenance["family"] = fam.spec()
    meta = _meta("gen-w", seed, model=model.fingerprint() if model else None, n=n, mode=mode,
                 scale=scale, family=fam.spec(), M=M)
    path = _out_path(ctx, output, "w.json")
    _write(path, dump_json(_w_record(iv, meta, report)))
    if report:
        click.echo(dump_json(report), nl=False)


@main.command("solve-ss")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--w", "w_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--graph", "graph_spec", help="Graph file or key:<bits>.")
@click.option("--family", "family_spec", help="Solve for every member of a family instead.")
@click.option("--tol", type=float, default=1e-10, show_default=True,
              help="Residual tolerance of the Newton solver.")
@click.option("-o", "--output", type=click.Path(dir_okay=False),
              help="Output CSV [steady_state.csv].")
@click.pass_context
def solve_ss(ctx, model_path, w_path, graph_spec, family_spec, tol, output):
    """Steady-state outputs (exact for LTI models with exact w)."""
    model = _load_model(model_path)
    iv = _load_w(w_path)
    if (graph_spec is None) == (family_spec is None):
        raise _Fail(EXIT_USAGE, "usage", "give exactly one of --graph and --family")
    graphs = ([_load_graph(graph_spec, model.n)] if graph_spec
              else list(enumerate_family(_family(family_spec, model.n))))
    w = applied_input(iv.w, model)
    rows = []
    for g in graphs:
        if model.all_integrators and not g.is_connected():
            continue
        rows.append((g, solve(g, model, w, tol=tol)))
    meta = _meta("solve-ss", iv.provenance.get("seed"), model=model.fingerprint(),
                 w=_w_hash(iv), graphs=[g.key_string() for g in graphs], tol=tol)
    _write(_out_path(ctx, output, "steady_state.csv"),
           _meta_comment(meta) + steady_state_csv(rows, model.n))


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--w", "w_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--graph", "graph_spec", required=True, help="Graph file or key:<bits>.")
@click.option("--t-end", type=float, default=10.0, show_default=True)
@click.option("--h", "step", type=float, default=1e-3, show_default=True, help="RK4 step size.")
@click.option("--record-every", type=int, default=10, show_default=True,
              help="Record one sample every this many steps.")
@click.option("--converge", is_flag=True, help="Also run on to convergence and report it.")
@click.option("-o", "--output", type=click.Path(dir_okay=False),
              help="Trajectory CSV [trajectory.csv].")
@click.pass_context
def simulate(ctx, model_path, w_path, graph_spec, t_end, step, record_every, converge, output):
    """Integrate the closed loop and write the trajectory."""
    model = _load_model(model_path)
    iv = _load_w(w_path)
    g = _load_graph(graph_spec, model.n)
    w = np.array([float(v) for v in iv.w])
    traj = integrate(model, g, w, t_span=(0.0, t_end), h=step, record_every=record_every)
    meta = _meta("simulate", iv.provenance.get("seed"), model=model.fingerprint(),
                 w=_w_hash(iv), graph=g.key_string(), t_end=t_end, h=step,
                 record_every=record_every)
    path = _out_path(ctx, output, "trajectory.csv")
    _write(path, _meta_comment(meta) + traj.to_csv())
    summary = {"meta": meta, "terminal_y": _vector_json(traj.y[-1]), "t_end": fmt_number(t_end)}
    if converge:
        v = run_to_convergence(model, g, w, x0=traj.x[-1], h=step, t0=t_end)
        summary.update(converged=v.converged, converged_y=_vector_json(v.y),
                       residual=fmt_number(v.residual), t_converged=fmt_number(v.t),
                       solver_gap=None if v.solver_gap is None else fmt_number(v.solver_gap))
    click.echo(dump_json(summary), nl=False)


@main.command("build-table")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--w", "w_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--family", "family_spec", help="Graph family (default: all graphs).")
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Table file [table.csv].")
@click.pass_context
def build_table_cmd(ctx, model_path, w_path, family_spec, tol, output):
    """Precompute the steady output of every family member."""
    model = _load_model(model_path)
    iv = _load_w(w_path)
    fam = _family(family_spec, model.n)
    table = build_table(fam, model, iv.w, tol=tol, jobs=ctx.obj["jobs"])
    meta = _meta("build-table", iv.provenance.get("seed"), model=model.fingerprint(),
                 w=_w_hash(iv), family=fam.spec(), tol=tol)
    text = table_text(table)
    head, _, rest = text.partition("\n")
    _write(_out_path(ctx, output, "table.csv"), head + "\n" + _meta_comment(meta) + rest)
    click.echo(f"{len(table)} entries, epsilon = {fmt_number(table.epsilon)}")


def _detect_and_report(ctx, y, table, meta, output, strict):
    try:
        res = detect(y, table, strict=False)
    except AmbiguousDetection as err:
        rec = {"meta": meta, "error": "ambiguous", "message": str(err), "confident": False,
               "y": _vector_json(y)}
        _write(_out_path(ctx, output, "detection.json"), dump_json(rec))
        raise
    rec = _detection_record(res, table, meta, y)
    _write(_out_path(ctx, output, "detection.json"), dump_json(rec))
    click.echo(dump_json(rec), nl=False)
    if strict and not res.confident:
        raise AmbiguousDetection(
            f"nearest entry is {res.distance:.6g} away, beyond eps/2 = {table.epsilon / 2:.6g}")


@main.command("detect")
@click.option("--table", "table_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--y", "y_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Measured output (text or JSON with a 'y' field).")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False),
              help="Refuse the table if it was built for a different model.")
@click.option("-o", "--output", type=click.Path(dir_okay=False),
              help="Detection record [detection.json].")
@click.pass_context
def detect_cmd(ctx, table_path, y_path, model_path, output):
    """Nearest-entry graph detection; exit 2 unless within eps/2 of a unique entry."""
    model = _load_model(model_path) if model_path else None
    table = load_table(table_path, model)
    y = read_vector_file(y_path)
    meta = _meta("detect", None, table=table.fingerprint, w=[fmt_number(v) for v in table.w],
                 y=_vector_json(y))
    _detect_and_report(ctx, y, table, meta, output, strict=True)


def _reconstruction_record(rec, meta) -> dict:
    return {"meta": meta, "graph": rec.graph.key_string() or "-",
            "edges": [list(e) for e in rec.graph.edges],
            "weights": [fmt_number(v) for v in rec.weights]}


@main.command("reconstruct-lti")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--w", "w_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Radix w file written by gen-w.")
@click.option("--y", "y_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--digit-tol", type=float, default=0.25, show_default=True,
              help="Largest accepted distance of D*y_i from an integer.")
@click.option("-o", "--output", type=click.Path(dir_okay=False),
              help="Reconstruction record [reconstruction.json].")
@click.pass_context
def reconstruct_cmd(ctx, model_path, w_path, y_path, digit_tol, output):
    """Exact graph and weights from one radix measurement; exit 3 on decode failure."""
    model = _load_model(model_path)
    iv = _load_w(w_path)
    y = read_vector_file(y_path)
    rec = reconstruct_lti(y, _lti(model), iv, digit_tol=digit_tol, jobs=ctx.obj["jobs"])
    meta = _meta("reconstruct-lti", None, model=model.fingerprint(), w=_w_hash(iv),
                 y=_vector_json(y), digit_tol=digit_tol)
    out = _reconstruction_record(rec, meta)
    _write(_out_path(ctx, output, "reconstruction.json"), dump_json(out))
    click.echo(dump_json(out), nl=False)


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--w", "w_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--family", "family_spec", help="Graph family (default: all graphs).")
@click.option("--tol", type=float, default=1e-10, show_default=True)
def epsilon(model_path, w_path, family_spec, tol):
    """Separation index of w over a family."""
    model = _load_model(model_path)
    iv = _load_w(w_path)
    fam = _family(family_spec, model.n)
    rep = separation_index(iv, fam, model, tol=tol)
    out = {"epsilon": fmt_number(rep.epsilon), "error_budget": fmt_number(rep.epsilon / 2),
           "closest_pair": None if rep.pair is None else [g.key_string() for g in rep.pair]}
    if isinstance(rep.epsilon_sq, Fraction):
        out["epsilon_sq"] = fmt_number(rep.epsilon_sq)
    click.echo(dump_json(out), nl=False)


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--hidden", "hidden_spec", required=True,
              help="The hidden graph (file or key:<bits>).")
@click.option("--method", type=click.Choice(["table", "radix"]), default="table",
              show_default=True)
@click.option("--family", "family_spec", help="Candidate family (default: all graphs).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--scale", type=float, default=1.0, show_default=True)
@click.option("--measure", type=click.Choice(["solve", "simulate"]), default="solve",
              show_default=True, help="Obtain y from the solver or by simulating to convergence.")
@click.option("--h", "step", type=float, default=1e-3, show_default=True)
@click.option("--perturb", type=float, default=0.0, show_default=True,
              help="Add a seeded perturbation of norm PERTURB * epsilon to y (table method).")
@click.pass_context
def pipeline(ctx, model_path, hidden_spec, method, family_spec, seed, scale, measure, step,
             perturb):
    """gen-w, measure the hidden graph once, then detect or reconstruct."""
    model = _load_model(model_path)
    hidden = _load_graph(hidden_spec, model.n)
    fam = _family(family_spec, model.n)
    out_dir = Path(ctx.obj["out_dir"])
    if method == "radix":
        iv = radix_w(fam, _lti(model))
        _radix_precision_warning(iv)
    else:
        iv = gaussian_w(model.n, seed, scale)
    iv.provenance["family"] = fam.spec()
    meta = _meta("pipeline", seed if method == "table" else None, model=model.fingerprint(),
                 hidden=hidden.key_string(), method=method, family=fam.spec(), scale=scale,
                 measure=measure, h=step, perturb=perturb)
    _write(out_dir / "w.json", dump_json(_w_record(iv, meta)))
    w_in = applied_input(iv.w, model)
    if measure == "simulate":
        wf = np.array([float(v) for v in w_in])
        traj = integrate(model, hidden, wf, t_span=(0.0, 10.0), h=step)
        _write(out_dir / "trajectory.csv", _meta_comment(meta) + traj.to_csv())
        y = list(run_to_convergence(model, hidden, wf, x0=traj.x[-1], h=step, t0=10.0).y)
    else:
        y = list(solve(hidden, model, w_in).y)

    if method == "radix":
        _write(out_dir / "y.json", dump_json({"meta": meta, "y": _vector_json(y)}))
        rec = reconstruct_lti(y, _lti(model), iv)
        out = _reconstruction_record(rec, meta)
        out["correct"] = rec.graph == hidden
        _write(out_dir / "reconstruction.json", dump_json(out))
        click.echo(dump_json(out), nl=False)
        return
    table = build_table(fam, model, iv.w, jobs=ctx.obj["jobs"])
    _write(out_dir / "table.csv", table_text(table))
    y = np.array([float(v) for v in y])
    if perturb:
        d = np.random.default_rng(seed).standard_normal(model.n)
        y = y + perturb * table.epsilon * d / np.linalg.norm(d)
    _write(out_dir / "y.json", dump_json({"meta": meta, "y": _vector_json(y)}))
    _detect_and_report(ctx, y, table, meta, out_dir / "detection.json", strict=True)


def _parse_scenario(path: Path):
    """``model=<file>``, ``w=<file>``, optional ``t_end=`` / ``h=`` lines and
    ``t=<real> graph=<file|key:bits>`` schedule entries; relative paths are
    taken from the config's directory."""
    cfg, schedule = {}, []
    base = path.parent
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = dict(tok.split("=", 1) for tok in line.split())
        if "t" in fields:
            schedule.append((float(fields["t"]), fields["graph"]))
        else:
            cfg.update(fields)
    if "model" not in cfg or "w" not in cfg or not schedule:
        raise _Fail(EXIT_USAGE, "config", "scenario needs model=, w= and t= graph= lines")

    def resolve(p):
        return p if p.startswith("key:") else str(base / p)

    return cfg, [(t, resolve(g)) for t, g in schedule], resolve


@main.command()
@click.argument("config", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--case-study", "case_study_flag", is_flag=True,
              help="Run the built-in ten-agent scenario instead of a config file.")
@click.option("--seed", type=int, default=1, show_default=True, help="Case-study seed.")
@click.option("--table", "table_path", type=click.Path(exists=True, dir_okay=False),
              help="Lookup table for per-segment detection.")
@click.option("--h", "step", type=float, default=None, help="RK4 step size [1e-3].")
@click.pass_context
def scenario(ctx, config, case_study_flag, seed, table_path, step):
    """Simulate through scheduled graph changes, detecting the graph after each segment."""
    out_dir = Path(ctx.obj["out_dir"])
    t_end = None
    if case_study_flag:
        cs = case_study(seed)
        model, w, schedule = cs.model, cs.w, cs.schedule
        table = (load_table(table_path, model) if table_path
                 else build_table(cs.family, model, w, jobs=ctx.obj["jobs"]))
        cfg = {"case_study": True}
    elif config:
        cfg, sched, _ = _parse_scenario(Path(config))
        model = _load_model(cfg["model"] if os.path.isabs(cfg["model"])
                            else Path(config).parent / cfg["model"])
        wpath = cfg["w"] if os.path.isabs(cfg["w"]) else Path(config).parent / cfg["w"]
        iv = _load_w(wpath)
        w = np.array([float(v) for v in applied_input(iv.w, model)])
        schedule = [(t, _load_graph(g, model.n)) for t, g in sched]
        seed = iv.provenance.get("seed")
        tp = table_path or cfg.get("table")
        if tp and not os.path.isabs(tp) and not table_path:
            tp = str(Path(config).parent / tp)
        table = load_table(tp, model) if tp else None
        t_end = float(cfg["t_end"]) if "t_end" in cfg else None
        step = step or (float(cfg["h"]) if "h" in cfg else None)
    else:
        raise _Fail(EXIT_USAGE, "usage", "give a scenario config or --case-study")
    step = step or 1e-3
    res = run_scenario(model, schedule, w, table=table, t_end=t_end, h=step)
    meta = _meta("scenario", seed, model=model.fingerprint(), w=_vector_json(w),
                 schedule=[(t, g.key_string()) for t, g in schedule], h=step, config=cfg)
    _write(out_dir / "trajectory.csv", _meta_comment(meta) + res.trajectory.to_csv())
    _write(out_dir / "outputs.csv", _meta_comment(meta) + res.trajectory.to_csv(with_state=False))
    segments = []
    for (t, g), v, d in zip(schedule, res.verdicts, res.detections or [None] * len(schedule)):
        seg = {"t_start": fmt_number(t), "graph": g.key_string() or "-",
               "converged": v.converged, "t_end": fmt_number(v.t),
               "residual": fmt_number(v.residual), "y": _vector_json(v.y)}
        if isinstance(d, AmbiguousDetection):
            seg["detection"] = {"error": "ambiguous", "message": str(d)}
        elif d is not None:
            seg["detection"] = {"graph": d.graph.key_string() or "-", "confident": d.confident,
                                "distance": fmt_number(d.distance),
                                "margin": fmt_number(d.margin), "correct": d.graph == g}
        segments.append(seg)
    out = {"meta": meta, "segments": segments}
    _write(out_dir / "scenario.json", dump_json(out))
    click.echo(dump_json(out), nl=False)
    if any("detection" in s and not s["detection"].get("confident", False) for s in segments):
        ctx.exit(EXIT_AMBIGUOUS)


if __name__ == "__main__":  # pragma: no cover
    main()
