"""Scenario handling and randomized verification campaigns.

A scenario is a JSON object selecting a bound family, dimensions, a seed
and a trial count, with optional explicit matrices overriding the random
instance generation (complex entries as [re, im] pairs, matrices as
row-major nested arrays).  Campaign trials are seed-deterministic: trial t
of family f draws from ``default_rng([seed, f, t])`` regardless of worker
scheduling, and reports are gathered in trial order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds as bd
from . import channels as ch
from . import dilation as dl
from . import matkernel as mk
from . import states as st
from . import superchannel as sup
from .config import Tolerances
from .matkernel import DimShape

FAMILIES = ("spohn", "main", "clausius", "qdpi", "holevo", "mmap-consistency")
CONSISTENCY_TOL = 1e-10


class ScenarioError(ValueError):
    """Scenario file failed validation; the message names the field path."""


class ScenarioParseError(ScenarioError):
    """Scenario file is not syntactically valid JSON."""


@dataclass(frozen=True)
class Scenario:
    seed: int
    dims: dict
    trials: int
    bound: str
    tolerances: dict = field(default_factory=dict)
    explicit: dict = field(default_factory=dict)
    n_measurements: int = 50

    def families(self) -> tuple[str, ...]:
        return FAMILIES if self.bound == "all" else (self.bound,)

    def tols(self, base: Tolerances) -> Tolerances:
        known = {"herm_tol", "psd_floor", "recon_tol", "fp_tol", "support_tol", "slack_tol", "trace_tol"}
        overrides = {k: float(v) for k, v in self.tolerances.items() if k in known}
        return base.with_overrides(**overrides)


# ---------------------------------------------------------------------------
# JSON (de)serialization of matrices and extended reals
# ---------------------------------------------------------------------------

def parse_complex_matrix(obj, path: str) -> np.ndarray:
    """Nested row-major lists with entries as numbers or [re, im] pairs."""
    if not isinstance(obj, list) or not obj or not all(isinstance(r, list) for r in obj):
        raise ScenarioError(f"{path}: expected a nested list of matrix rows")
    ncols = len(obj[0])
    if ncols == 0 or any(len(r) != ncols for r in obj):
        raise ScenarioError(f"{path}: rows have inconsistent lengths (non-rectangular matrix)")
    out = np.empty((len(obj), ncols), dtype=complex)
    for i, row in enumerate(obj):
        for j, entry in enumerate(row):
            if isinstance(entry, (int, float)):
                out[i, j] = float(entry)
            elif isinstance(entry, list) and len(entry) == 2 and all(isinstance(x, (int, float)) for x in entry):
                out[i, j] = complex(entry[0], entry[1])
            else:
                raise ScenarioError(f"{path}[{i}][{j}]: expected a number or an [re, im] pair")
    return out


def matrix_to_json(m: np.ndarray) -> list:
    return [[[float(x.real), float(x.imag)] for x in row] for row in np.asarray(m, dtype=complex)]


def ext_to_json(v):
    """Extended real -> JSON-safe value."""
    if isinstance(v, float):
        if math.isnan(v):
            return "indeterminate"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
    return v


def jsonable(obj):
    """Recursively convert reports/details into strict-JSON values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return ext_to_json(float(obj))
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# Scenario loading
# ---------------------------------------------------------------------------

_EXPLICIT_MATRIX_KEYS = ("U", "rho_se", "op_choi", "H", "sigma", "V", "alpha")


def load_scenario(text: str) -> Scenario:
    """Parse and validate scenario JSON; raises ScenarioError with field paths."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioParseError("scenario: expected a JSON object")

    def need_int(key, default=None, minimum=0):
        v = raw.get(key, default)
        if v is None:
            raise ScenarioError(f"{key}: required field is missing")
        if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
            raise ScenarioError(f"{key}: expected an integer >= {minimum}, got {v!r}")
        return v

    seed = need_int("seed", 0, minimum=0)
    trials = need_int("trials", minimum=1)
    bound = raw.get("bound", "all")
    if bound not in FAMILIES + ("all",):
        raise ScenarioError(f"bound: {bound!r} is not one of {FAMILIES + ('all',)}")

    dims = raw.get("dims", {})
    if not isinstance(dims, dict):
        raise ScenarioError("dims: expected an object of positive integers")
    for k, v in dims.items():
        if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
            raise ScenarioError(f"dims.{k}: expected a positive integer, got {v!r}")

    tolerances = raw.get("tolerances", {})
    if not isinstance(tolerances, dict):
        raise ScenarioError("tolerances: expected an object")
    for k, v in tolerances.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
            raise ScenarioError(f"tolerances.{k}: expected a positive number, got {v!r}")

    n_meas = need_int("n_measurements", 50, minimum=1)

    explicit_raw = raw.get("explicit", {})
    if not isinstance(explicit_raw, dict):
        raise ScenarioError("explicit: expected an object")
    explicit = {}
    for key in _EXPLICIT_MATRIX_KEYS:
        if key in explicit_raw:
            explicit[key] = parse_complex_matrix(explicit_raw[key], f"explicit.{key}")
    if "op_kraus" in explicit_raw:
        ops = explicit_raw["op_kraus"]
        if not isinstance(ops, list) or not ops:
            raise ScenarioError("explicit.op_kraus: expected a nonempty list of matrices")
        explicit["op_kraus"] = [
            parse_complex_matrix(m, f"explicit.op_kraus[{i}]") for i, m in enumerate(ops)
        ]
    for key in ("beta", "theta"):
        if key in explicit_raw:
            v = explicit_raw[key]
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ScenarioError(f"explicit.{key}: expected a number, got {v!r}")
            explicit[key] = float(v)
    if "ensemble" in explicit_raw:
        ens = explicit_raw["ensemble"]
        if not isinstance(ens, dict) or "probs" not in ens or "ops_kraus" not in ens:
            raise ScenarioError("explicit.ensemble: expected an object with probs and ops_kraus")
        probs = ens["probs"]
        if not isinstance(probs, list) or any(not isinstance(p, (int, float)) for p in probs):
            raise ScenarioError("explicit.ensemble.probs: expected a list of numbers")
        ops_kraus = [
            [parse_complex_matrix(m, f"explicit.ensemble.ops_kraus[{i}][{j}]") for j, m in enumerate(op)]
            for i, op in enumerate(ens["ops_kraus"])
        ]
        explicit["ensemble"] = ([float(p) for p in probs], ops_kraus)

    scenario = Scenario(seed, dict(sorted(dims.items())), trials, bound,
                        dict(sorted(tolerances.items())), explicit, n_meas)
    _validate_explicit(scenario)
    return scenario


def _validate_explicit(scenario: Scenario, tols: Tolerances = Tolerances()) -> None:
    ex = scenario.explicit
    try:
        if "U" in ex:
            ch.check_unitary(ex["U"], tols, what="explicit.U")
        if "rho_se" in ex:
            d_s = scenario.dims.get("d_S", 2)
            d = ex["rho_se"].shape[0]
            if d % d_s != 0:
                raise ScenarioError(f"explicit.rho_se: dim {d} does not factor over d_S={d_s}")
            st.density(ex["rho_se"], DimShape([d_s, d // d_s], ["S", "E"]), tols=tols)
        if "sigma" in ex:
            st.density(ex["sigma"], tols=tols)
        if "alpha" in ex:
            st.density(ex["alpha"], labels=["A"], tols=tols)
        if "op_kraus" in ex:
            ch.from_kraus(ex["op_kraus"], tols=tols)
        if "op_choi" in ex:
            c = ex["op_choi"]
            d = int(round(math.sqrt(c.shape[0])))
            ch.from_choi(c, d, d, tols=tols)
        if "H" in ex and not mk.is_hermitian(ex["H"], 1e-10 * max(1.0, mk.max_abs(ex["H"]))):
            raise ScenarioError("explicit.H: matrix is not Hermitian")
        if "ensemble" in ex:
            probs, ops_kraus = ex["ensemble"]
            bd.Ensemble(tuple(probs), tuple(ch.from_kraus(op, tols=tols) for op in ops_kraus))
        if "V" in ex:
            ch.check_unitary(ex["V"], tols, what="explicit.V")
    except ScenarioError:
        raise
    except (mk.ShapeError, mk.ValidationError, ValueError) as exc:
        raise ScenarioError(f"explicit: {exc}") from exc


def scenario_echo(scenario: Scenario) -> dict:
    """Canonical JSON-safe form of the scenario for report embedding."""
    ex = {}
    for k, v in scenario.explicit.items():
        if k in ("beta", "theta"):
            ex[k] = v
        elif k == "op_kraus":
            ex[k] = [matrix_to_json(m) for m in v]
        elif k == "ensemble":
            probs, ops = v
            ex[k] = {"probs": probs, "ops_kraus": [[matrix_to_json(m) for m in op] for op in ops]}
        else:
            ex[k] = matrix_to_json(v)
    return {
        "seed": scenario.seed,
        "dims": scenario.dims,
        "trials": scenario.trials,
        "bound": scenario.bound,
        "tolerances": scenario.tolerances,
        "n_measurements": scenario.n_measurements,
        "explicit": ex,
    }


# ---------------------------------------------------------------------------
# Random instance generation
# ---------------------------------------------------------------------------

def random_correlated_state(d_s: int, d_e: int, rng: np.random.Generator,
                            tols: Tolerances) -> st.DensityMatrix:
    """Wishart state on S (x) E with rank drawn from {1..min(4, d_S d_E)}."""
    d = d_s * d_e
    rank = int(rng.integers(1, min(4, d) + 1))
    rho = st.random_density(d, rank, rng, tols=tols)
    return st.density(rho.mat, DimShape([d_s, d_e], ["S", "E"]), tols=tols)


def random_superchannel(d_s: int, d_e: int, rng: np.random.Generator,
                        tols: Tolerances, explicit: dict | None = None) -> sup.Superchannel:
    ex = explicit or {}
    if "rho_se" in ex:
        rho_se = st.density(ex["rho_se"], DimShape([d_s, d_e], ["S", "E"]), tols=tols)
    else:
        rho_se = random_correlated_state(d_s, d_e, rng, tols)
    u = ex.get("U")
    if u is None:
        u = st.haar_unitary(d_s * d_e, rng)
    return sup.build(u, rho_se, tols)


def random_operation(d: int, rng: np.random.Generator, tols: Tolerances,
                     explicit: dict | None = None,
                     bipartite: tuple[int, int] | None = None) -> ch.QuantumOperation:
    ex = explicit or {}
    if "op_kraus" in ex:
        return ch.from_kraus(ex["op_kraus"], bipartite=bipartite, tols=tols)
    if "op_choi" in ex:
        return ch.from_choi(ex["op_choi"], d, d, bipartite=bipartite, tols=tols)
    rank = int(rng.integers(1, d * d + 1))
    return ch.random_cptp(d, rank, rng, bipartite=bipartite, tols=tols)


# ---------------------------------------------------------------------------
# Trial evaluation
# ---------------------------------------------------------------------------

def evaluate_trial(scenario: Scenario, family: str, trial: int, tols: Tolerances,
                   collect: dict | None = None) -> bd.BoundReport:
    """Evaluate one seed-deterministic trial of the given bound family."""
    rng = np.random.default_rng(
        [np.uint64(scenario.seed), np.uint64(FAMILIES.index(family)), np.uint64(trial)]
    )
    ex = scenario.explicit
    dims = scenario.dims
    d_s = dims.get("d_S", 2)
    d_e = dims.get("d_E", 2)

    if family == "spohn":
        op = random_operation(d_s, rng, tols, ex)
        if "sigma" in ex:
            rho = st.density(ex["sigma"], tols=tols)
        else:
            rho = st.random_density(d_s, int(rng.integers(1, d_s + 1)), rng, tols=tols)
        report = bd.spohn(op, rho, tols=tols, collect=collect)

    elif family == "main":
        sc = random_superchannel(d_s, d_e, rng, tols, ex)
        op = random_operation(d_s, rng, tols, ex)
        report = bd.main_bound(sc, op, tols=tols, collect=collect)

    elif family == "clausius":
        h = ex.get("H")
        if h is None:
            h = np.diag(np.arange(d_s, dtype=float)).astype(complex)
        beta = ex.get("beta", 1.0)
        theta = ex.get("theta", math.pi / 4)
        gibbs, _ = bd.thermal_state(h, beta, tols)
        u = ex.get("U")
        if u is None:
            u = ch.partial_swap_unitary(d_s, theta)
        anchor = st.random_density(d_s, d_s, rng, tols=tols)
        rho_se = st.density(
            mk.tensor(anchor.mat, gibbs.mat), DimShape([d_s, d_s], ["S", "E"]), tols=tols
        )
        sc = sup.build(u, rho_se, tols)
        if "sigma" in ex:
            sigma = st.density(ex["sigma"], tols=tols)
        else:
            sigma = st.random_density(d_s, int(rng.integers(1, d_s + 1)), rng, tols=tols)
        report = bd.clausius(sc, sigma, h, beta, tols, collect=collect)

    elif family == "qdpi":
        d_p = dims.get("d_P", 2)
        d_q = dims.get("d_Q", 2)
        sc1 = random_superchannel(d_p, dims.get("d_E1", 2), rng, tols, ex)
        sc2 = random_superchannel(d_q, dims.get("d_E2", 2), rng, tols, ex)
        op = random_operation(d_p * d_q, rng, tols, ex, bipartite=(d_p, d_q))
        report = bd.qdpi(sc1, sc2, op, tols, collect=collect)

    elif family == "holevo":
        sc = random_superchannel(d_s, d_e, rng, tols, ex)
        if "ensemble" in ex:
            probs, ops_kraus = ex["ensemble"]
            ens = bd.Ensemble(tuple(probs), tuple(ch.from_kraus(op, tols=tols) for op in ops_kraus))
        else:
            k = int(rng.integers(2, 5))
            ops = tuple(ch.random_cptp(d_s, int(rng.integers(1, d_s * d_s + 1)), rng, tols=tols)
                        for _ in range(k))
            probs = rng.dirichlet(np.ones(k))
            probs = probs / probs.sum()
            ens = bd.Ensemble(tuple(float(p) for p in probs), ops)
        _, report, _ = bd.holevo(sc, ens, rng, scenario.n_measurements, tols, collect=collect)

    elif family == "mmap-consistency":
        d_a = dims.get("d_A", d_s)
        sc = random_superchannel(d_s, d_e, rng, tols, ex)
        v = ex.get("V")
        if v is None:
            v = st.haar_unitary(d_s * d_a, rng)
        if "alpha" in ex:
            alpha = st.density(ex["alpha"], labels=["A"], tols=tols)
        else:
            vec = st.random_pure(d_a, rng)
            alpha = st.density(np.outer(vec, vec.conj()), labels=["A"], tols=tols)
        iso = dl.IsometricOperation(v, alpha)
        upsilon, delta_s = dl.mmap(sc, iso, tols)
        reduced = mk.partial_trace(upsilon.mat, upsilon.shape, ["S"])
        direct = sup.act(sc, dl.operation_of(iso, tols))
        residual = mk.max_abs(reduced - direct.mat)
        slack = CONSISTENCY_TOL - residual
        report = bd.BoundReport(
            "mmap-consistency", CONSISTENCY_TOL, residual, slack, slack >= 0.0, 0.0,
            (), {"d_S": d_s, "d_E": d_e, "d_A": d_a, "delta_S": delta_s},
        )
        if collect is not None:
            collect.update(residual=residual, delta_S=delta_s,
                           upsilon_eigenvalues=st.spectrum(upsilon, tols).tolist())

    else:
        raise ScenarioError(f"bound: unknown family {family!r}")

    report.metadata["trial"] = trial
    report.metadata["seed"] = scenario.seed
    return report


# ---------------------------------------------------------------------------
# Campaign running and report assembly
# ---------------------------------------------------------------------------

def report_to_dict(report: bd.BoundReport) -> dict:
    return {
        "name": report.name,
        "lhs": report.lhs,
        "rhs": report.rhs,
        "slack": report.slack,
        "passed": report.passed,
        "tolerance": report.tolerance,
        "flags": list(report.flags),
        "metadata": dict(report.metadata),
    }


def _categorize(report: bd.BoundReport) -> str:
    if "indeterminate" in report.flags:
        return "flagged"
    return "passed" if report.passed else "failed"


def summarize(reports: list[bd.BoundReport]) -> dict:
    cats = [_categorize(r) for r in reports]
    finite = [r.slack for r in reports if math.isfinite(r.slack)]
    return {
        "trials": len(reports),
        "passes": cats.count("passed"),
        "failures": cats.count("failed"),
        "flagged_infinite": cats.count("flagged"),
        "min_slack": min(finite) if finite else None,
        "max_slack": max(finite) if finite else None,
    }


def _eval_task(args) -> tuple[str, int, dict]:
    scenario_json, family, trial, tols_kwargs = args
    scenario = load_scenario(scenario_json)
    report = evaluate_trial(scenario, family, trial, Tolerances(**tols_kwargs))
    return family, trial, report_to_dict(report)


def run_campaign(scenario: Scenario, tols: Tolerances, jobs: int = 1) -> dict:
    """Run every family of the scenario; returns the report object.

    The report is deterministic for a fixed scenario: per-trial seeds are
    derived from (seed, family, trial) and results are ordered by trial
    index, so serial and parallel executions produce identical output.
    The summary's wall_time field is left null so reports stay byte-stable;
    the CLI reports timing separately.
    """
    families = scenario.families()
    sections: dict[str, list[dict]] = {}
    if jobs <= 1:
        for family in families:
            sections[family] = [
                report_to_dict(evaluate_trial(scenario, family, t, tols))
                for t in range(scenario.trials)
            ]
    else:
        from concurrent.futures import ProcessPoolExecutor
        from dataclasses import asdict

        scenario_json = json.dumps(scenario_echo(scenario))
        tasks = [
            (scenario_json, family, t, asdict(tols))
            for family in families
            for t in range(scenario.trials)
        ]
        results: dict[tuple[str, int], dict] = {}
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for family, trial, rep in pool.map(_eval_task, tasks, chunksize=8):
                results[(family, trial)] = rep
        for family in families:
            sections[family] = [results[(family, t)] for t in range(scenario.trials)]

    def from_dicts(ds):
        return [
            bd.BoundReport(d["name"], d["lhs"], d["rhs"], d["slack"], d["passed"],
                           d["tolerance"], tuple(d["flags"]), d["metadata"])
            for d in ds
        ]

    section_objs = {
        family: {"reports": reps, "summary": summarize(from_dicts(reps))}
        for family, reps in sections.items()
    }
    all_reports = [r for reps in sections.values() for r in from_dicts(reps)]
    total = summarize(all_reports)
    total["wall_time"] = None
    return {
        "scenario": scenario_echo(scenario),
        "sections": section_objs,
        "summary": total,
    }


def render_json(report: dict) -> str:
    return json.dumps(jsonable(report), sort_keys=True, indent=2) + "\n"


def render_csv(report: dict) -> str:
    lines = ["section,trial,lhs,rhs,slack,passed,flags"]
    for family in sorted(report["sections"]):
        for rep in report["sections"][family]["reports"]:
            lines.append(
                ",".join([
                    family,
                    str(rep["metadata"].get("trial", "")),
                    str(ext_to_json(rep["lhs"])),
                    str(ext_to_json(rep["rhs"])),
                    str(ext_to_json(rep["slack"])),
                    str(rep["passed"]).lower(),
                    "|".join(rep["flags"]),
                ])
            )
    return "\n".join(lines) + "\n"
