"""Command-line interface.

Each subcommand reads CSV inputs, writes CSV artifacts and a JSON report
into the output directory, and embeds the effective configuration and the
package version in every report. Exit codes: 0 on success, 1 when a
numerical step fails (the step is named), 2 for unreadable or invalid
input (the path is named).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .community import (
    CommunityAssignment,
    brim,
    inter_community_share,
    read_membership_csv,
    write_membership_csv,
)
from .complexity import (
    Taxon,
    UndefinedThresholdError,
    binarize_for_nestedness,
    classify_taxonomy,
    fitness_complexity,
    mean_shift_1d,
    nested_ordering,
    nodf,
    per_block_nodf,
)
from .flowmatrix import (
    FlowCounts,
    build_transition_matrix,
    entry_exit_shares,
    read_flow_csv,
    strip_self_loops,
    write_flow_csv,
    write_matrix_csv,
)
from .markov import deviation_report, observed_shares
from .policy import (
    INFORMED,
    SKILLS_ONLY,
    coverage_summary,
    informed_strategy,
    metric_stability,
    random_walk_coverage,
    skills_only_strategy,
    walker_uniforms,
)
from .structure import (
    SkillMatrix,
    centrality_report,
    correlate,
    inter_intra_scores,
    read_mapping_csv,
    read_skill_csv,
    rome_to_pcs,
    similarity_matrix,
    size_correlations,
    write_skill_csv,
)
from .synthnet import (
    KINDS,
    condensation_fixture,
    degree_preserving_null,
    nested_flow,
    planted_blocks,
    random_skills,
    uniform_flow,
)

OUT_ENV = "LABORFLOW_OUT"
VERSION = f"v{__version__}"


class InputError(Exception):
    """Unreadable or invalid input; ``path`` names the offending file."""

    def __init__(self, path, message: str):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


class NumericFailure(Exception):
    """A numerical step did not converge or is undefined."""

    def __init__(self, operation: str, message: str):
        self.operation = operation
        super().__init__(f"{operation}: {message}")


@dataclass
class RunConfig:
    flows: str | None = None
    skills: str | None = None
    mapping: str | None = None
    communities: str | None = None
    theta: float = 0.01
    fc_iters: int = 200
    nodf_cutoff: float = 0.01
    bandwidth: float = 3.0
    theta_A: float | None = None
    theta_T: float | None = None
    delta: float = 0.005
    steps: int = 5
    n_seeds: int = 500
    percentile: float = 0.98
    top_n: int = 5
    seed: int = 0
    c_max: int = 24
    n_restarts: int = 16
    strategy: str = "both"
    with_self_loops: bool = False
    count_starts: bool = False
    allow_unconverged: bool = False
    out_dir: str = "."

    def __post_init__(self):
        if self.strategy == "skills":
            self.strategy = SKILLS_ONLY
        if self.strategy not in (SKILLS_ONLY, INFORMED, "both"):
            raise ValueError(f"unknown strategy {self.strategy!r}")

    @classmethod
    def from_sources(cls, config_path: str | None, overrides: dict[str, Any]) -> RunConfig:
        values: dict[str, Any] = {"out_dir": os.environ.get(OUT_ENV, ".")}
        if config_path:
            try:
                loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
            except OSError as exc:
                raise InputError(config_path, exc.strerror or str(exc)) from None
            except json.JSONDecodeError as exc:
                raise InputError(config_path, f"invalid JSON: {exc}") from None
            if not isinstance(loaded, dict):
                raise InputError(config_path, "config must be a JSON object")
            names = {f.name for f in dataclasses.fields(cls)}
            unknown = sorted(set(loaded) - names)
            if unknown:
                raise InputError(config_path, f"unknown config keys: {', '.join(unknown)}")
            values.update(loaded)
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except (TypeError, ValueError) as exc:
            raise InputError(config_path or "<arguments>", str(exc)) from None

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------- output


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, Taxon):
        return obj.value
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True,
                               allow_nan=False) + "\n", encoding="utf-8")
    return path


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    if isinstance(v, Taxon):
        return v.value
    return "" if v is None else str(v)


def write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def _report(config: RunConfig, command: str, **body) -> dict:
    return {"command": command, "version": VERSION, "config": config.to_dict(), **body}


# ---------------------------------------------------------------- inputs


def _require(config: RunConfig, name: str) -> str:
    value = getattr(config, name)
    if not value:
        raise InputError(f"<{name}>", f"no {name} file given (use --{name})")
    return value


def load_flows(config: RunConfig) -> FlowCounts:
    path = _require(config, "flows")
    try:
        return read_flow_csv(path)
    except OSError as exc:
        raise InputError(path, exc.strerror or str(exc)) from None
    except ValueError as exc:
        raise InputError(path, str(exc)) from None


def load_skills(config: RunConfig, codes) -> SkillMatrix:
    path = _require(config, "skills")
    try:
        S = read_skill_csv(path)
    except OSError as exc:
        raise InputError(path, exc.strerror or str(exc)) from None
    except ValueError as exc:
        raise InputError(path, str(exc)) from None
    if config.mapping:
        try:
            mapping = read_mapping_csv(config.mapping)
        except OSError as exc:
            raise InputError(config.mapping, exc.strerror or str(exc)) from None
        except ValueError as exc:
            raise InputError(config.mapping, str(exc)) from None
        rows = {c: S.row(c) for c in S.occupations}
        S = rome_to_pcs(rows, mapping, S.skills)
    missing = [c for c in codes if c not in S.occupations]
    if missing:
        raise InputError(path, f"no skill vector for occupations {', '.join(missing[:10])}")
    if S.subset(codes).empty_rows:
        raise InputError(path, f"all-zero skill vectors: {', '.join(S.subset(codes).empty_rows)}")
    return S.subset(codes)


def load_communities(config: RunConfig, flows: FlowCounts) -> CommunityAssignment:
    path = config.communities
    try:
        membership = read_membership_csv(path)
        return CommunityAssignment.from_membership(flows, membership)
    except OSError as exc:
        raise InputError(path, exc.strerror or str(exc)) from None
    except ValueError as exc:
        raise InputError(path, str(exc)) from None


def _out(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- steps


def step_ingest(config: RunConfig, flows: FlowCounts) -> dict:
    out = _out(config)
    counts = np.asarray(flows.counts)
    body = {
        "n_occupations": flows.n,
        "total_flow": int(counts.sum()),
        "stayers": int(np.trace(counts)),
        "movers": int(counts.sum() - np.trace(counts)),
        "entries": int(np.sum(flows.entry_counts)),
        "exits": int(np.sum(flows.exit_counts)),
        "groups": sorted(flows.tags),
    }
    write_json(out / "ingest.json", _report(config, "ingest", **body))
    return body


def step_matrix(config: RunConfig, flows: FlowCounts):
    out = _out(config)
    P = build_transition_matrix(flows, config.theta)
    Pt = strip_self_loops(P)
    write_matrix_csv(P, out / "transition.csv")
    write_matrix_csv(Pt, out / "transition_no_self_loops.csv")
    raw_links = int(np.count_nonzero(np.asarray(flows.counts) - np.diag(np.diag(flows.counts))))
    body = {
        "n_occupations": P.n,
        "links_before_filter": raw_links,
        "links_after_filter": int(np.count_nonzero(Pt.probs)),
        "dangling": list(P.dangling),
        "degenerate": list(Pt.degenerate),
    }
    write_json(out / "matrix.json", _report(config, "matrix", **body))
    return P, Pt


def step_communities(config: RunConfig, flows: FlowCounts, P) -> CommunityAssignment:
    out = _out(config)
    if config.communities:
        comm = load_communities(config, flows)
        source = "file"
    else:
        comm = brim(flows, c_max=config.c_max, seed=config.seed, n_restarts=config.n_restarts)
        source = "brim"
    write_membership_csv(comm, out / "communities.csv")
    share = inter_community_share(P, comm)
    ee = entry_exit_shares(flows, comm)
    write_csv(out / "community_shares.csv",
              ["occupation", "community", "outside_outflow_share", "outside_inflow_share"],
              [(c, comm.membership[c], share.outside_outflow_share[c],
                share.outside_inflow_share[c]) for c in flows.codes])
    body = {
        "source": source,
        "modularity": comm.modularity,
        "n_communities": comm.n_communities,
        "sizes": {str(k): len(v) for k, v in comm.members().items()},
        "inter_community_share": share.inter_share,
        "entry_exit": {str(k): dataclasses.asdict(v) for k, v in sorted(ee.items())},
    }
    write_json(out / "communities.json", _report(config, "communities", **body))
    return comm


def step_steady_state(config: RunConfig, flows: FlowCounts, P) -> dict:
    out = _out(config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = deviation_report(observed_shares(flows), P)
    if not rep.converged and not config.allow_unconverged:
        raise NumericFailure("steady-state", "power iteration did not converge")
    write_csv(out / "steady_state.csv", ["occupation", "observed", "stationary", "deviation_pct"],
              zip(rep.occupations, rep.observed, rep.stationary, rep.deviations))
    body = {
        "lambda2": rep.lambda2_modulus,
        "halftime": rep.halftime,
        "share_exceeding_10pct": rep.share_exceeding_10pct,
        "converged": rep.converged,
        "closed_classes": [list(c) for c in rep.closed_classes],
        "unique_stationary": len(rep.closed_classes) == 1,
    }
    write_json(out / "steady_state.json", _report(config, "steady-state", **body))
    return body


def _threshold(values, bandwidth: float, given: float | None, axis: str) -> tuple[float, dict]:
    if given is not None:
        return given, {"source": "config", "threshold": given}
    try:
        ms = mean_shift_1d(values, bandwidth)
    except UndefinedThresholdError as exc:
        raise NumericFailure("complexity",
                             f"{axis} threshold undefined ({exc}); set theta_{axis[0].upper()}") from None
    return ms.threshold, {"source": "mean-shift", "threshold": ms.threshold,
                          "modes": ms.modes, "cluster_sizes": ms.sizes}


def step_complexity(config: RunConfig, Pt, comm: CommunityAssignment | None = None):
    out = _out(config)
    scores = fitness_complexity(Pt, config.fc_iters)
    if not scores.converged and not config.allow_unconverged:
        raise NumericFailure("fitness-complexity",
                             f"rank orders still changing after {config.fc_iters} iterations")
    theta_a, info_a = _threshold(scores.accessibility, config.bandwidth, config.theta_A,
                                 "accessibility")
    theta_t, info_t = _threshold(scores.transferability, config.bandwidth, config.theta_T,
                                 "transferability")
    labels = classify_taxonomy(scores, theta_a, theta_t)
    write_csv(out / "scores.csv", ["occupation", "accessibility", "transferability", "taxon"],
              [(c, a, t, labels.labels[c]) for c, a, t in
               zip(scores.occupations, scores.accessibility, scores.transferability)])
    write_csv(out / "taxonomy.csv", ["occupation", "taxon"],
              [(c, labels.labels[c]) for c in scores.occupations])
    B = binarize_for_nestedness(Pt, config.nodf_cutoff)
    rows, cols = nested_ordering(B, scores)
    codes = scores.occupations
    write_csv(out / "nested_order.csv", ["position", "destination_by_accessibility",
                                         "origin_by_transferability"],
              [(k, codes[r], codes[c]) for k, (r, c) in enumerate(zip(rows, cols))])
    body = {
        "iterations": scores.iterations,
        "converged": scores.converged,
        "rank_stable_at": scores.rank_stable_at,
        "no_inflow": list(scores.no_inflow),
        "no_outflow": list(scores.no_outflow),
        "accessibility_threshold": info_a,
        "transferability_threshold": info_t,
        "taxonomy_counts": {t.value: n for t, n in labels.counts().items()},
        "nodf": nodf(B),
    }
    if comm is not None:
        blocks = per_block_nodf(B, comm, codes)
        body["nodf_per_block"] = {str(k): v for k, v in blocks.per_block.items()}
        body["nodf_block_mean"] = blocks.mean
    write_json(out / "complexity.json", _report(config, "complexity", **body))
    return scores, labels


def step_diagnostics(config: RunConfig, flows: FlowCounts, Pt, scores, labels,
                     comm: CommunityAssignment, S: SkillMatrix) -> dict:
    out = _out(config)
    cent = centrality_report(Pt)
    ii = inter_intra_scores(S, comm)
    codes = Pt.codes
    d_p = np.array([ii[c].d_p for c in codes])
    d_r = np.array([ii[c].d_r for c in codes])
    sizes = np.asarray(flows.counts, dtype=float).sum(axis=1)
    write_csv(out / "diagnostics.csv",
              ["occupation", "betweenness", "closeness", "harmonic_closeness",
               "d_intra", "d_inter", "d_p", "d_r", "size"],
              [(c, b, cl, h, ii[c].d_intra, ii[c].d_inter, ii[c].d_p, ii[c].d_r, s)
               for c, b, cl, h, s in zip(codes, cent.betweenness, cent.closeness,
                                         cent.harmonic_closeness, sizes)])
    A, T = scores.accessibility, scores.transferability

    def block(only):
        keep = [c for c in codes if only is None or labels.labels.get(c) == only]
        if len(keep) < 2:  # too few occupations to rank
            return dict.fromkeys(["rho_betweenness_accessibility",
                                  "rho_closeness_transferability", "rho_dp_accessibility",
                                  "rho_dr_transferability", "rho_A_size", "rho_T_size"],
                                 math.nan) | {"n": len(keep)}
        sc = size_correlations(scores, sizes, labels, only)
        return {
            "n": len(keep),
            "rho_betweenness_accessibility": correlate(cent.betweenness, A, codes, labels, only),
            "rho_closeness_transferability": correlate(cent.closeness, T, codes, labels, only),
            "rho_dp_accessibility": correlate(d_p, A, codes, labels, only),
            "rho_dr_transferability": correlate(d_r, T, codes, labels, only),
            "rho_A_size": sc.rho_A_size,
            "rho_T_size": sc.rho_T_size,
        }

    body = {
        "distance_transform": cent.distance_transform,
        "all": block(None),
        "condensers": block(Taxon.CONDENSER),
    }
    write_json(out / "diagnostics.json", _report(config, "diagnostics", **body))
    return body


def step_policy(config: RunConfig, Pt, scores, S: SkillMatrix) -> dict:
    out = _out(config)
    D = similarity_matrix(S)
    strategies = [SKILLS_ONLY, INFORMED] if config.strategy == "both" else [config.strategy]
    U = walker_uniforms(Pt.codes, config.steps, config.n_seeds, config.seed)

    def coverage(M):
        return random_walk_coverage(M, config.steps, config.n_seeds, config.seed,
                                    with_self_loops=config.with_self_loops,
                                    count_starts=config.count_starts, uniforms=U)

    columns = {"original": coverage(Pt)}
    summary: dict[str, Any] = {"original": {"coverage": coverage_summary(columns["original"])}}
    link_rows = []
    for name in strategies:
        if name == SKILLS_ONLY:
            outcome = skills_only_strategy(Pt, D, config.delta)
        else:
            outcome = informed_strategy(Pt, D, scores, config.delta, config.percentile,
                                        config.top_n)
        outcome.coverage_before = columns["original"]
        outcome.coverage_after = columns[name] = coverage(outcome.modified)
        after = fitness_complexity(outcome.modified, config.fc_iters)
        outcome.metric_stability = metric_stability(scores, after)
        write_matrix_csv(outcome.modified, out / f"policy_{name}_matrix.csv")
        link_rows += [(name, l.origin, l.destination, l.delta, l.induced)
                      for l in outcome.added_links]
        summary[name] = {
            "coverage": coverage_summary(outcome.coverage_after),
            "links_added": len(outcome.added_links),
            "skipped": list(outcome.skipped),
            "similarity_threshold": outcome.similarity_threshold,
            "metric_stability": dataclasses.asdict(outcome.metric_stability),
        }
    write_csv(out / "policy_links.csv", ["strategy", "origin", "destination", "delta", "induced"],
              link_rows)
    names = list(columns)
    write_csv(out / "policy_coverage.csv", ["seed", *names],
              [(s, *(columns[n][s] for n in names)) for s in range(config.n_seeds)])
    body = {
        "coverage_counts_starts": config.count_starts,
        "walks_with_self_loops": config.with_self_loops,
        "strategies": summary,
    }
    write_json(out / "policy.json", _report(config, "policy", **body))
    return body


# ---------------------------------------------------------------- commands


def cmd_ingest(config: RunConfig, args) -> None:
    step_ingest(config, load_flows(config))


def cmd_matrix(config: RunConfig, args) -> None:
    step_matrix(config, load_flows(config))


def cmd_communities(config: RunConfig, args) -> None:
    flows = load_flows(config)
    P = build_transition_matrix(flows, config.theta)
    step_communities(config, flows, P)


def cmd_steady_state(config: RunConfig, args) -> None:
    flows = load_flows(config)
    step_steady_state(config, flows, build_transition_matrix(flows, config.theta))


def cmd_complexity(config: RunConfig, args) -> None:
    flows = load_flows(config)
    Pt = strip_self_loops(build_transition_matrix(flows, config.theta))
    comm = load_communities(config, flows) if config.communities else None
    step_complexity(config, Pt, comm)


def cmd_diagnostics(config: RunConfig, args) -> None:
    flows = load_flows(config)
    P = build_transition_matrix(flows, config.theta)
    Pt = strip_self_loops(P)
    S = load_skills(config, flows.codes)
    comm = load_communities(config, flows) if config.communities else \
        step_communities(config, flows, P)
    scores, labels = step_complexity(config, Pt, comm)
    step_diagnostics(config, flows, Pt, scores, labels, comm, S)


def cmd_policy(config: RunConfig, args) -> None:
    flows = load_flows(config)
    Pt = strip_self_loops(build_transition_matrix(flows, config.theta))
    S = load_skills(config, flows.codes)
    scores = fitness_complexity(Pt, config.fc_iters)
    step_policy(config, Pt, scores, S)


def cmd_run(config: RunConfig, args) -> None:
    flows = load_flows(config)
    S = load_skills(config, flows.codes) if config.skills else None
    step_ingest(config, flows)
    P, Pt = step_matrix(config, flows)
    comm = step_communities(config, flows, P)
    step_steady_state(config, flows, P)
    scores, labels = step_complexity(config, Pt, comm)
    if S is not None:
        step_diagnostics(config, flows, Pt, scores, labels, comm, S)
        step_policy(config, Pt, scores, S)
    outputs = sorted(p.name for p in _out(config).iterdir() if p.name != "run.json")
    write_json(_out(config) / "run.json", _report(config, "run", outputs=outputs))


def cmd_synth(config: RunConfig, args) -> None:
    out = _out(config)
    n, seed = args.n, config.seed
    communities = None
    skills = None
    if args.kind == "planted_blocks":
        flows = planted_blocks(n, args.c, args.p_in, args.p_out, seed,
                               stay_share=args.stay_share)
    elif args.kind == "nested":
        flows = nested_flow(n, args.gamma, seed, n_blocks=args.n_blocks)
    elif args.kind == "uniform":
        flows = uniform_flow(n, seed, stay_share=args.stay_share)
    elif args.kind == "condensation":
        fx = condensation_fixture(seed=seed)
        flows, skills, communities = fx.flows, fx.skills, fx.assignment()
    else:
        if args.base:
            base = load_flows(dataclasses.replace(config, flows=args.base))
        else:
            base = nested_flow(n, args.gamma, seed, n_blocks=args.n_blocks)
        m = int(np.count_nonzero(np.asarray(base.counts) - np.diag(np.diag(base.counts))))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            flows = degree_preserving_null(base, args.n_swaps if args.n_swaps is not None else m,
                                           seed)
    if skills is None:
        skills = random_skills(flows.codes, seed=seed)
    write_flow_csv(flows, out / "flows.csv")
    write_skill_csv(skills, out / "skills.csv")
    if communities is not None:
        write_membership_csv(communities, out / "communities.csv")
    params = {k: v for k, v in vars(args).items()
              if k in ("kind", "n", "c", "p_in", "p_out", "gamma", "n_blocks", "n_swaps",
                       "stay_share", "base")}
    write_json(out / "synth.json", _report(config, "synth", generator=params,
                                           n_occupations=flows.n))


COMMANDS = {
    "ingest": cmd_ingest,
    "matrix": cmd_matrix,
    "communities": cmd_communities,
    "steady-state": cmd_steady_state,
    "complexity": cmd_complexity,
    "diagnostics": cmd_diagnostics,
    "policy": cmd_policy,
    "synth": cmd_synth,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="laborflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=VERSION)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--out", dest="out_dir",
                        help=f"output directory (default ${OUT_ENV} or the current directory)")
    common.add_argument("--seed", type=int)
    common.add_argument("--flows", help="flow CSV: origin,destination,count[,group]")
    common.add_argument("--theta", type=float, help="link filter fraction (default 0.01)")
    common.add_argument("--allow-unconverged", action="store_true", default=None,
                        help="report instead of failing on non-convergence")

    def add(name, help_, *extras):
        p = sub.add_parser(name, parents=[common], help=help_)
        for extra in extras:
            extra(p)
        return p

    def comm_args(p):
        p.add_argument("--communities", help="membership CSV: occupation,community")
        p.add_argument("--c-max", dest="c_max", type=int)
        p.add_argument("--restarts", dest="n_restarts", type=int)

    def fc_args(p):
        p.add_argument("--fc-iters", dest="fc_iters", type=int)
        p.add_argument("--nodf-cutoff", dest="nodf_cutoff", type=float)
        p.add_argument("--bandwidth", type=float)
        p.add_argument("--theta-a", dest="theta_A", type=float,
                       help="accessibility threshold (skips mean-shift)")
        p.add_argument("--theta-t", dest="theta_T", type=float,
                       help="transferability threshold (skips mean-shift)")

    def skill_args(p):
        p.add_argument("--skills", help="skill CSV: occupation,skill,weight")
        p.add_argument("--mapping", help="mapping CSV: source,target")

    def policy_args(p):
        p.add_argument("--strategy", choices=["skills", "informed", "both"])
        p.add_argument("--delta", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--seeds", dest="n_seeds", type=int)
        p.add_argument("--percentile", type=float)
        p.add_argument("--top-n", dest="top_n", type=int)
        p.add_argument("--with-self-loops", dest="with_self_loops", action="store_true",
                       default=None)
        p.add_argument("--count-starts", dest="count_starts", action="store_true", default=None,
                       help="count start positions as visited")

    sub = parser.add_subparsers(dest="command", required=True)
    add("ingest", "validate flows and summarize them")
    add("matrix", "build the filtered transition matrix")
    add("communities", "detect communities with BRIM", comm_args)
    add("steady-state", "stationary distribution and spectral gap")
    add("complexity", "accessibility, transferability, taxonomy and NODF", comm_args, fc_args)
    add("diagnostics", "centralities, skill similarity and correlations",
        comm_args, fc_args, skill_args)
    add("policy", "retraining-link strategies and walk coverage", fc_args, skill_args,
        policy_args)
    add("run", "full pipeline", comm_args, fc_args, skill_args, policy_args)
    synth = add("synth", "write a synthetic flow CSV (and skills)")
    synth.add_argument("--kind", choices=KINDS, required=True)
    synth.add_argument("--n", type=int, default=40)
    synth.add_argument("--c", type=int, default=2)
    synth.add_argument("--p-in", dest="p_in", type=float, default=0.9)
    synth.add_argument("--p-out", dest="p_out", type=float, default=0.05)
    synth.add_argument("--gamma", type=float, default=8.0)
    synth.add_argument("--n-blocks", dest="n_blocks", type=int, default=1)
    synth.add_argument("--n-swaps", dest="n_swaps", type=int)
    synth.add_argument("--stay-share", dest="stay_share", type=float, default=0.0)
    synth.add_argument("--base", help="flow CSV to randomize (degree_preserving_null)")
    return parser


_NOT_CONFIG = {"command", "config", "kind", "n", "c", "p_in", "p_out", "gamma", "n_blocks",
               "n_swaps", "stay_share", "base"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    try:
        config = RunConfig.from_sources(args.config, overrides)
        COMMANDS[args.command](config, args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"numerical failure in {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
