"""Problem and policy files (JSON).

Problem file, explicit-table form::

    {
      "horizon": 3, "initial_state": 0, "sense": "min", "n_actions": 2,
      "action_names": ["a", "b"],                      # optional
      "transitions": [
        {"state": 0, "action": 1, "utility": 2.5, "successors": [[0, 0.3], [1, 0.7]]},
        ...
      ],
      "risks": [{"delta": 0.1, "risky_states": [3]},                # r = 1 on listed states
                {"delta": 0.2, "risk_fn": [[1, 0.25], [2, 0.5]]}],  # explicit r(s), 0 elsewhere
      "costs": [{"kind": "expected", "bound": 4.0, "values": [[0, 1, 2.0], ...]},
                {"kind": "global", "bound": 3.0, "delta": 0.1, "values": [...]}]
    }

Builtin form: ``{"builtin": "grid" | "highway", "params": {...}, "horizon": h,
"delta": Δ}``; ``params`` are the fields of :class:`GridParams` or
:class:`HighwayParams` (HVs as ``[lane, pos, target_lane, speed]``).

State ids are JSON scalars or arrays (read back as tuples). Augmented states
of reduced problems are ``{"aug": [base, [g_1, ...], step]}`` with exact
fractions written as ``{"frac": "p/q"}``, so reductions round-trip exactly.
Only rows that can matter are written: the reachable pairs, and non-zero
risk and cost entries.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any

from .benchmarks import HV, GridParams, HighwayParams, gen_grid, gen_highway
from .gcc import AugmentedState
from .model import EXPECTED, CostCriterion, Policy, ProblemSpec, RiskCriterion, Sense, cost_from_table, \
    risk_from_table, tabular_problem

FORMAT_VERSION = 1


class ProblemFormatError(ValueError):
    """Malformed problem or policy file."""


# -- state ids -------------------------------------------------------------------

def encode_state(s) -> Any:
    if isinstance(s, AugmentedState):
        return {"aug": [encode_state(s.base), [encode_state(v) for v in s.g], s.step]}
    if isinstance(s, Fraction):
        return {"frac": f"{s.numerator}/{s.denominator}"}
    if isinstance(s, tuple):
        return [encode_state(v) for v in s]
    if hasattr(s, "item"):          # numpy scalar
        return s.item()
    return s


def decode_state(v) -> Any:
    if isinstance(v, list):
        return tuple(decode_state(x) for x in v)
    if isinstance(v, dict):
        if "aug" in v:
            base, g, step = v["aug"]
            return AugmentedState(decode_state(base), tuple(decode_state(x) for x in g), step)
        if "frac" in v:
            return Fraction(v["frac"])
        raise ProblemFormatError(f"unknown tagged state {v!r}")
    return v


# -- problems ------------------------------------------------------------------------

def _reachable(spec: ProblemSpec, node_cap: int):
    """(state, action) pairs and states reachable within the horizon, in
    first-visit order."""
    layer = [spec.initial_state]
    states = {spec.initial_state: None}
    pairs: dict = {}
    for _ in range(spec.horizon):
        nxt: dict = {}
        for s in layer:
            for a in spec.available_actions(s):
                succ = [(t, p) for t, p in spec.successors(s, a) if p > 0]
                if not succ:
                    continue
                if (s, a) not in pairs:
                    pairs[(s, a)] = succ
                for t, _ in succ:
                    nxt[t] = None
        for t in nxt:
            states.setdefault(t, None)
        if len(states) > node_cap:
            raise ProblemFormatError(f"explicit form needs more than {node_cap} states; use the builtin form")
        layer = list(nxt)
    return pairs, list(states)


def problem_to_dict(spec: ProblemSpec, explicit: bool = False, node_cap: int = 200_000) -> dict:
    """Serialize ``spec``; benchmark instances use the builtin form unless
    ``explicit`` is set."""
    bench = spec.meta.get("benchmark")
    if bench and not explicit:
        p = spec.meta["params"]
        params = dict(vars(p))
        if bench == "highway":
            params["hvs"] = [[hv.lane, hv.pos, hv.target_lane, hv.speed] for hv in p.hvs]
            params["costs"] = list(p.costs)
        else:
            params["start"] = list(p.start)
        return {"format": FORMAT_VERSION, "builtin": bench, "params": params, "horizon": spec.horizon,
                "delta": spec.risks[0].delta}
    pairs, states = _reachable(spec, node_cap)
    enc = encode_state
    out: dict[str, Any] = {
        "format": FORMAT_VERSION,
        "horizon": spec.horizon,
        "initial_state": enc(spec.initial_state),
        "sense": spec.sense.value,
        "n_actions": spec.n_actions,
    }
    if spec.action_names:
        out["action_names"] = list(spec.action_names)
    out["transitions"] = [{"state": enc(s), "action": int(a), "utility": float(spec.utility(s, a)),
                           "successors": [[enc(t), float(p)] for t, p in succ]}
                          for (s, a), succ in pairs.items()]
    risks = []
    for rc in spec.risks:
        vals = [(s, float(rc.risk(s))) for s in states]
        entry: dict[str, Any] = {"delta": float(rc.delta)}
        if rc.name:
            entry["name"] = rc.name
        if all(r in (0.0, 1.0) for _, r in vals):
            entry["risky_states"] = [enc(s) for s, r in vals if r == 1.0]
        else:
            entry["risk_fn"] = [[enc(s), r] for s, r in vals if r != 0.0]
        risks.append(entry)
    out["risks"] = risks
    costs = []
    for cc in spec.costs:
        entry = {"kind": cc.kind, "bound": float(cc.bound),
                 "values": [[enc(s), int(a), float(cc.cost(s, a))] for s, a in pairs if cc.cost(s, a) != 0]}
        if cc.delta is not None:
            entry["delta"] = float(cc.delta)
        if cc.name:
            entry["name"] = cc.name
        costs.append(entry)
    out["costs"] = costs
    if "plan" in spec.meta:
        out["plan"] = spec.meta["plan"].summary()
    elif "plan_summary" in spec.meta:
        out["plan"] = spec.meta["plan_summary"]
    return out


def _builtin(d: dict) -> ProblemSpec:
    name, params = d["builtin"], dict(d.get("params", {}))
    h = int(d.get("horizon", 10 if name == "grid" else 4))
    delta = float(d.get("delta", 0.05))
    if name == "grid":
        if "start" in params:
            params["start"] = tuple(params["start"])
        return gen_grid(GridParams(**params), horizon=h, delta=delta)
    if name == "highway":
        if "hvs" in params:
            params["hvs"] = tuple(HV(*v) if isinstance(v, list) else HV(**v) for v in params["hvs"])
        if "costs" in params:
            params["costs"] = tuple(float(c) for c in params["costs"])
        return gen_highway(HighwayParams(**params), horizon=h, delta=delta)
    raise ProblemFormatError(f"unknown builtin generator {name!r}")


def problem_from_dict(d: dict) -> ProblemSpec:
    try:
        if "builtin" in d:
            return _builtin(d)
        dec = decode_state
        trans, util = {}, {}
        for row in d["transitions"]:
            key = (dec(row["state"]), int(row["action"]))
            trans[key] = [(dec(t), float(p)) for t, p in row["successors"]]
            util[key] = float(row.get("utility", 0.0))
        risks = []
        for r in d.get("risks", []):
            if "risky_states" in r:
                table = {dec(s): 1.0 for s in r["risky_states"]}
            else:
                table = {dec(s): float(v) for s, v in r["risk_fn"]}
            risks.append(RiskCriterion(risk_from_table(table), float(r["delta"]), r.get("name", "")))
        costs = []
        for c in d.get("costs", []):
            table = {(dec(s), int(a)): float(v) for s, a, v in c.get("values", [])}
            costs.append(CostCriterion(cost_from_table(table), float(c["bound"]), c.get("kind", EXPECTED),
                                       c.get("delta"), c.get("name", "")))
        names = d.get("action_names")
        return tabular_problem(trans, util, dec(d["initial_state"]), int(d["horizon"]),
                               sense=Sense(d.get("sense", "min")), risks=risks, costs=costs,
                               n_actions=d.get("n_actions"), action_names=tuple(names) if names else None,
                               meta={"plan_summary": d["plan"]} if "plan" in d else {})
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ProblemFormatError):
            raise
        raise ProblemFormatError(f"bad problem file: {exc!r}") from exc


def save_problem(spec: ProblemSpec, path, explicit: bool = False) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(spec, explicit), fh, indent=1)


def load_problem(path) -> ProblemSpec:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ProblemFormatError(f"{path}: {exc}") from exc
    return problem_from_dict(d)


# -- policies ------------------------------------------------------------------------

def policy_to_dict(policy: Policy | dict) -> dict:
    if not isinstance(policy, Policy):
        policy = Policy(dict(policy))
    entries = []
    for (s, k), a in policy.table.items():
        act = [[int(b), float(p)] for b, p in sorted(a.items())] if policy.stochastic else int(a)
        entries.append({"state": encode_state(s), "step": int(k), "action": act})
    entries.sort(key=lambda e: (e["step"], json.dumps(e["state"], sort_keys=True)))
    return {"format": FORMAT_VERSION, "kind": policy.kind, "entries": entries,
            "fallback": sorted(([encode_state(s), int(k)] for s, k in policy.fallback),
                               key=lambda e: json.dumps(e, sort_keys=True))}


def policy_from_dict(d: dict) -> Policy:
    try:
        stochastic = d.get("kind", "deterministic") == "stochastic"
        table = {}
        for e in d["entries"]:
            a = {int(b): float(p) for b, p in e["action"]} if stochastic else int(e["action"])
            table[(decode_state(e["state"]), int(e["step"]))] = a
        fb = frozenset((decode_state(s), int(k)) for s, k in d.get("fallback", []))
        return Policy(table, stochastic=stochastic, fallback=fb)
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFormatError(f"bad policy file: {exc!r}") from exc


def save_policy(policy: Policy, path) -> None:
    with open(path, "w") as fh:
        json.dump(policy_to_dict(policy), fh, indent=1)


def load_policy(path) -> Policy:
    with open(path) as fh:
        return policy_from_dict(json.load(fh))
