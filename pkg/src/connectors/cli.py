"""Batch front-end: ``certify run|verify|build-box|bound-tree``.

Configs are JSON documents validated against ``CONFIG_SCHEMA`` before any
compute. Results are written with the lossless hex-float encoding of
``connectors.io`` and can be re-verified offline from the file alone.
Exit codes: 0 ran, 2 config error, 3 solver stall.
"""

import argparse
import copy
import json
import platform
import sys
import time

import jsonschema
import numpy as np

from . import __version__, io

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STALL = 3
SCHEMA_VERSION = 1
TASKS = ["detect-local", "detect-quantum", "detect-entanglement", "tree-bound", "eval-witness", "build-box"]
GENERATORS = [
    "ghz-pauli",
    "svetlichny",
    "consecutive-ones",
    "majority",
    "deterministic",
    "pr",
    "tilted-pair",
    "fcs",
    "ghz-state",
    "upb-shifts",
    "maximally-mixed",
]

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "task"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "task": {"enum": TASKS},
        "box": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "file": {"type": "string"},
                "generator": {"enum": GENERATORS},
                "params": {"type": "object"},
                "seed": {"type": "integer", "minimum": 0},
            },
            "oneOf": [{"required": ["file"]}, {"required": ["generator"]}],
        },
        "world": {"enum": ["LOC", "QUANT", "SEP"]},
        "network": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "topology": {"enum": ["mpctn", "tree"]},
                "bond": {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2}]},
                "depth": {"type": "integer", "minimum": 1, "maximum": 4},
                "level": {"enum": ["1", "1+AB", "2"]},
                "k": {"type": "integer", "minimum": 1, "maximum": 2},
                "file": {"type": "string"},
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["see-saw", "projected-gradient", "fcs-I", "fcs-II"]},
                "max_sweeps": {"type": "integer", "minimum": 1},
                "threshold": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "alternate": {"type": "boolean"},
                "schedule": {"enum": ["random", "grow"]},
                "family": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                "pad": {"enum": ["identity", "copy"]},
                "epsilon": {"type": "number", "minimum": 0},
                "steps": {"type": "integer", "minimum": 1},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"result": {"type": "string"}, "box": {"type": "string"}, "trace_csv": {"type": "string"}},
        },
        "threads": {"type": "integer", "minimum": 1},
    },
}

DEFAULT_OPTIMIZER = {"method": "see-saw", "max_sweeps": 50, "threshold": 1e-6, "seed": 0, "alternate": True, "schedule": "random", "pad": "copy", "epsilon": 0.1, "steps": 20}


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------ config handling
def parse_override(text):
    """``a.b.c=value``; the value is parsed as JSON when possible, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(cfg, overrides):
    cfg = copy.deepcopy(cfg)
    for text in overrides or []:
        path, value = parse_override(text)
        node = cfg
        for k in path[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r} descends into a non-object")
        node[path[-1]] = value
    return cfg


def validate(cfg):
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{loc}: {exc.message}") from None
    task = cfg["task"]
    if task in ("detect-local", "detect-quantum", "detect-entanglement", "eval-witness", "build-box") and "box" not in cfg:
        raise ConfigError(f"task {task} needs a box")
    if task == "tree-bound" and "depth" not in cfg.get("network", {}):
        raise ConfigError("tree-bound needs network.depth")
    if task == "eval-witness" and "file" not in cfg.get("network", {}):
        raise ConfigError("eval-witness needs network.file (a result file holding a network)")
    return cfg


def load_config(path, overrides=()):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return validate(apply_overrides(cfg, overrides))


# ------------------------------------------------------------ boxes
def generate_box(spec):
    """Box (MPSBox / Box) or state (dense array / PauliMPS) named by a config ``box`` entry."""
    from . import boxes

    if "file" in spec:
        rec = io.load(spec["file"])
        # a build-box result document wraps the box record
        return box_from_record(rec["box"] if rec.get("type") == "result" else rec)
    name = spec["generator"]
    p = dict(spec.get("params", {}))
    rng = np.random.default_rng(spec.get("seed", 0))
    try:
        if name == "ghz-pauli":
            return boxes.ghz_pauli_mps(int(p["m"]), p.get("settings", "xz"))
        if name == "svetlichny":
            return boxes.svetlichny_mps(int(p["m"]))
        if name == "consecutive-ones":
            return boxes.consecutive_ones_mps(int(p["m"]), int(p["r"]))
        if name == "majority":
            return boxes.majority_mps(int(p["m"]))
        if name == "deterministic":
            m, n_in = int(p["m"]), int(p.get("inputs", 2))
            assign = p.get("assignments")
            if assign is None:
                assign = rng.integers(0, 2, size=(m, n_in)).tolist()
            return boxes.deterministic_box(assign)
        if name == "pr":
            return boxes.pr_box()
        if name == "tilted-pair":
            return boxes.tilted_pair_box(p.get("settings", "xyz"))
        if name == "fcs":
            m = int(p["m"])
            mode = p.get("mode", "nonlocality")
            chans = boxes.random_fcs_channels(m, rng, p.get("mixing"))
            return boxes.fcs_chain(m, chans, mode=mode, settings=p.get("settings", "xyz"))
        if name == "ghz-state":
            psi = boxes.ghz_state(int(p["m"]))
            return np.outer(psi, psi.conj())
        if name == "upb-shifts":
            return boxes.upb_state(boxes.shifts_upb())
        if name == "maximally-mixed":
            n = int(p["n"])
            return np.eye(2**n) / 2**n
    except KeyError as exc:
        raise ConfigError(f"generator {name} needs parameter {exc.args[0]}") from None
    raise ConfigError(f"unknown generator {name!r}")


def box_record(box):
    from .boxes import Box, PauliMPS
    from .mps import MPSBox

    if isinstance(box, MPSBox):
        return {"type": "mps-box", "outputs": list(box.scenario.outputs), "inputs": list(box.scenario.inputs), "sites": list(box.sites)}
    if isinstance(box, Box):
        return {"type": "box", "outputs": list(box.scenario.outputs), "inputs": list(box.scenario.inputs), "data": box.standard().data}
    if isinstance(box, PauliMPS):
        return {"type": "pauli-mps", "sites": list(box.sites)}
    rho = np.asarray(box, dtype=complex)
    return {"type": "state", "re": rho.real, "im": rho.imag}


def box_from_record(rec):
    from .boxes import Box, PauliMPS, Scenario
    from .mps import MPSBox

    kind = rec.get("type")
    if kind == "mps-box":
        return MPSBox(Scenario(rec["outputs"], rec["inputs"]), rec["sites"])
    if kind == "box":
        return Box(Scenario(rec["outputs"], rec["inputs"]), rec["data"])
    if kind == "pauli-mps":
        return PauliMPS(rec["sites"])
    if kind == "state":
        return np.asarray(rec["re"], float) + 1j * np.asarray(rec["im"], float)
    raise ConfigError(f"unknown box record type {kind!r}")


# ------------------------------------------------------------ verdicts
def verdict(value, threshold, certified):
    """detected: value < -threshold with every certificate valid; marginal: negative but not decisive."""
    if value < -threshold and certified:
        return "detected"
    if value < -threshold or value < -1e-9:
        return "marginal"
    return "not-detected"


def _versions():
    import scipy

    return {"artifact": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def _trace_payload(trace):
    rec = trace.to_record()
    rec["records"] = [{k: v for k, v in r.items() if k != "wall_ms"} for r in rec["records"]]
    return rec


def _verify_connectors(conns):
    from .conic import verify_certificate

    checks = []
    for c in conns:
        v = verify_certificate(c.certificate, c) if c.certificate is not None else None
        checks.append(bool(v is not None and v.ok))
    return checks


# ------------------------------------------------------------ tasks
def _default_world(task):
    return {"detect-local": "LOC", "detect-quantum": "QUANT", "detect-entanglement": "SEP"}.get(task, "LOC")


def _network_options(cfg, world):
    net = cfg.get("network", {})
    opts = {}
    if world == "QUANT":
        opts["level"] = net.get("level", "1+AB")
    if world == "SEP":
        opts["k"] = net.get("k", 1)
    bond = net.get("bond", 2 if world == "SEP" else [2, 2])
    if world == "SEP":
        bond = int(bond if np.isscalar(bond) else bond[0])
    else:
        bond = tuple(bond) if not np.isscalar(bond) else (int(bond), int(bond))
    return bond, opts


def _family(cfg, opt):
    spec = cfg["box"]
    if opt.get("schedule") != "grow" or "generator" not in spec:
        return [generate_box(spec)]
    fam = opt.get("family") or [spec.get("params", {}).get("m")]
    out = []
    for m in fam:
        s = copy.deepcopy(spec)
        s.setdefault("params", {})["m"] = m
        out.append(generate_box(s))
    return out


def task_detect(cfg):
    from . import mpctn

    world = cfg.get("world", _default_world(cfg["task"]))
    opt = {**DEFAULT_OPTIMIZER, **cfg.get("optimizer", {})}
    if opt["method"] in ("fcs-I", "fcs-II"):
        return task_fcs(cfg, opt)
    bond, wopts = _network_options(cfg, world)
    seed = int(opt["seed"])
    family = _family(cfg, opt)
    runs = []
    net = None
    for box in family:
        types = mpctn.state_sites(box)[1] if world == "SEP" else mpctn.box_sites(box)[1]
        if net is None:
            net = mpctn.warm_start("random", site_types=types, bond=bond, world=world, seed=seed, **wopts)
        else:
            net = mpctn.warm_start("grow", net, types, pad=opt["pad"])
        if opt["method"] == "projected-gradient":
            net, trace = mpctn.projected_gradient(net, box, epsilon=opt["epsilon"], steps=opt["steps"], seed=seed)
        else:
            net, trace = mpctn.see_saw(net, box, max_sweeps=opt["max_sweeps"], threshold=opt["threshold"], seed=seed, alternate=opt["alternate"])
        runs.append({"m": net.m, "status": trace.status, "value": trace.final, "wall_time": trace.wall_time})
        if trace.status == "solver-stall":
            break
        net = mpctn.Mpctn(net.world, net.site_types, net.bond, list(net.connectors), dict(net.world_opts))
    sites = mpctn.prepare(net, box)
    value = mpctn.evaluate(net, box, sites=sites)
    certified = all(_verify_connectors(net.connectors))
    result = {
        "kind": "mpctn",
        "world": world,
        "value": value,
        "status": trace.status,
        "verdict": verdict(value, opt["threshold"], certified),
        "threshold": opt["threshold"],
        "network": net.to_record(),
        "sites": sites,
        "trace": _trace_payload(trace),
        "family": [{"m": r["m"], "status": r["status"], "value": r["value"]} for r in runs],
        "seeds": {"optimizer": seed, "box": cfg["box"].get("seed", 0)},
    }
    timing = {"runs": [r["wall_time"] for r in runs]}
    return result, timing, trace.status == "solver-stall"


def task_fcs(cfg, opt):
    from . import mpctn
    from .boxes import random_fcs_channels

    spec = cfg["box"]
    if spec.get("generator") != "fcs":
        raise ConfigError("fcs methods need the fcs generator")
    p = spec.get("params", {})
    m = int(p["m"])
    rng = np.random.default_rng(spec.get("seed", 0))
    chans = [np.eye(4)] * m if p.get("identity") else random_fcs_channels(m, rng)
    r = mpctn.fcs_heuristic(chans, opt["method"][-1] if opt["method"] == "fcs-I" else "II")
    certified = all(_verify_connectors(r.connectors))
    result = {
        "kind": "fcs",
        "world": "LOC",
        "method": r.method,
        "value": r.value,
        "status": "finished",
        "verdict": verdict(r.value, opt["threshold"], certified),
        "threshold": opt["threshold"],
        "connectors": [c.to_record() for c in r.connectors],
        "channels": [np.asarray(U, dtype=complex) for U in chans],
        "step_values": r.step_values,
        "seeds": {"box": spec.get("seed", 0)},
    }
    return result, {}, False


def task_tree_bound(cfg):
    from .loc import chsh_tree, ns_min_value

    depth = int(cfg["network"]["depth"])
    res = ns_min_value(chsh_tree(depth))
    result = {
        "kind": "tree-bound",
        "depth": depth,
        "value": res.value,
        "status": "optimal",
        "verdict": "not-detected",
        "certificate": io.certificate_record(res.certificate),
    }
    return result, {}, False


def task_eval_witness(cfg):
    from . import mpctn

    src = io.load(cfg["network"]["file"])
    if "network" not in src:
        raise ConfigError("network.file holds no network")
    net = mpctn.Mpctn.from_record(src["network"])
    box = generate_box(cfg["box"])
    sites = mpctn.prepare(net, box)
    value = mpctn.evaluate(net, box, sites=sites)
    threshold = cfg.get("optimizer", {}).get("threshold", DEFAULT_OPTIMIZER["threshold"])
    certified = all(_verify_connectors(net.connectors))
    result = {
        "kind": "mpctn",
        "world": net.world,
        "value": value,
        "status": "evaluated",
        "verdict": verdict(value, threshold, certified),
        "threshold": threshold,
        "network": net.to_record(),
        "sites": sites,
    }
    return result, {}, False


def task_build_box(cfg):
    box = generate_box(cfg["box"])
    rec = box_record(box)
    path = cfg.get("output", {}).get("box")
    if path:
        io.save(path, rec)
    return {"kind": "box", "status": "built", "verdict": "not-detected", "value": 0.0, "box": rec}, {}, False


TASK_RUNNERS = {
    "detect-local": task_detect,
    "detect-quantum": task_detect,
    "detect-entanglement": task_detect,
    "tree-bound": task_tree_bound,
    "eval-witness": task_eval_witness,
    "build-box": task_build_box,
}


def run(cfg):
    """Execute a validated config; returns (result document, solver stalled)."""
    t0 = time.perf_counter()
    result, timing, stalled = TASK_RUNNERS[cfg["task"]](cfg)
    doc = {
        "type": "result",
        "format_version": io.FORMAT_VERSION,
        "index_ordering": io.INDEX_ORDERING,
        "task": cfg["task"],
        "config": cfg,
        "versions": _versions(),
        **result,
        "timing": {"wall_time": time.perf_counter() - t0, **timing},
    }
    return doc, stalled


# ------------------------------------------------------------ verification
def verify_result(doc, tol=1e-9):
    """Re-run every certificate check and re-evaluate the final contraction."""
    from . import mpctn
    from .conic import verify_certificate
    from .loc import Connector

    kind = doc.get("kind")
    checks = {}
    if kind == "mpctn":
        net = mpctn.Mpctn.from_record(doc["network"])
        net.check()
        certs = _verify_connectors(net.connectors)
        checks["certificates"] = all(certs) if doc["world"] != "SEP" or certs else True
        value = mpctn._chain(net.matrices(), [np.asarray(s, float) for s in doc["sites"]])[1]
        checks["value"] = abs(value - doc["value"]) <= tol * (1 + abs(value))
    elif kind == "fcs":
        conns = [Connector.from_record(c) for c in doc["connectors"]]
        checks["certificates"] = all(_verify_connectors(conns))
        from .boxes import tilted_pair_box
        from .loc import abbreviate

        p = abbreviate(tilted_pair_box("xyz")).reshape(4, 4)
        f, g = mpctn.fcs_forms()
        Gs = [(c.matrix @ mpctn.abbreviated_channel(U)).reshape(3, 3, 4, 4) for c, U in zip(conns, doc["channels"])]
        value = mpctn.ring_value(p, Gs, [f] + [g] * (len(Gs) - 1))
        checks["value"] = abs(value - doc["value"]) <= tol * (1 + abs(value))
    elif kind == "tree-bound":
        cert = io.certificate_from_record(doc["certificate"])
        checks["certificates"] = verify_certificate(cert, None).ok
        checks["value"] = abs(float(cert.payload["value"]) - doc["value"]) <= tol * (1 + abs(doc["value"]))
    elif kind == "box":
        box_from_record(doc["box"])
        checks["box"] = True
    else:
        return False, {"kind": False}
    if "verdict" in doc and "threshold" in doc:
        checks["verdict"] = doc["verdict"] == verdict(doc["value"], doc["threshold"], checks.get("certificates", True))
    return all(checks.values()), checks


# ------------------------------------------------------------ entry point
def _write_result(doc, path):
    text = io.dumps(doc)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _summary(doc):
    return f"{doc['task']}: verdict={doc.get('verdict')} value={doc.get('value'):.6g} status={doc.get('status')}"


def main(argv=None):
    parser = argparse.ArgumentParser(prog="certify", description="Certify nonlocality and entanglement with connector networks.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p_ver = sub.add_parser("verify", help="re-verify a result file offline")
    p_ver.add_argument("result")
    p_box = sub.add_parser("build-box", help="write a box file from a config")
    p_box.add_argument("config")
    p_box.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p_tree = sub.add_parser("bound-tree", help="no-signalling minimum of the CHSH tree")
    p_tree.add_argument("--depth", type=int, required=True)
    p_tree.add_argument("--output", default=None)
    args = parser.parse_args(argv)

    if args.command == "verify":
        try:
            doc = io.load(args.result)
            ok, checks = verify_result(doc)
        except Exception as exc:  # a damaged file never verifies
            print(f"verify: FAIL ({type(exc).__name__}: {exc})")
            return 1
        print(f"verify: {'PASS' if ok else 'FAIL'} {checks}")
        return 0 if ok else 1

    try:
        if args.command == "bound-tree":
            if not 1 <= args.depth <= 4:
                raise ConfigError("depth must be between 1 and 4")
            cfg = validate({"schema_version": SCHEMA_VERSION, "task": "tree-bound", "network": {"depth": args.depth}, "output": {"result": args.output} if args.output else {}})
        else:
            cfg = load_config(args.config, args.override)
            if args.command == "build-box":
                cfg = validate({**cfg, "task": "build-box"})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        doc, stalled = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"solver stall: {exc}", file=sys.stderr)
        return EXIT_STALL
    _write_result(doc, cfg.get("output", {}).get("result"))
    print(_summary(doc))
    return EXIT_STALL if stalled else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
