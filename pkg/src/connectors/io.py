"""Lossless JSON serialization.

Floats are written with ``float.hex`` so that every file round-trips bit for
bit. Arrays become ``{"dtype", "shape", "data"}`` objects; complex arrays
carry separate real and imaginary payloads.
"""

import json

import numpy as np
import scipy.sparse as sp

FORMAT_VERSION = 1
INDEX_ORDERING = "doubled-leg y = a*I + x; abbreviated: empty symbol first, then (a, x) a-major"


def encode_array(a):
    if sp.issparse(a):
        coo = a.tocoo()
        return {
            "sparse": list(coo.shape),
            "row": coo.row.tolist(),
            "col": coo.col.tolist(),
            "data": encode_array(coo.data),
        }
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return {"dtype": "complex", "shape": list(a.shape), "re": [float(v).hex() for v in a.real.ravel()], "im": [float(v).hex() for v in a.imag.ravel()]}
    if a.dtype.kind in "iub":
        return {"dtype": "int", "shape": list(a.shape), "data": a.astype(np.int64).ravel().tolist()}
    return {"dtype": "float", "shape": list(a.shape), "data": [float(v).hex() for v in a.astype(float).ravel()]}


def decode_array(obj):
    if "sparse" in obj:
        data = decode_array(obj["data"])
        return sp.csr_matrix((data, (obj["row"], obj["col"])), shape=tuple(obj["sparse"]))
    shape = tuple(obj["shape"])
    if obj["dtype"] == "complex":
        re = np.array([float.fromhex(v) for v in obj["re"]], dtype=float)
        im = np.array([float.fromhex(v) for v in obj["im"]], dtype=float)
        return (re + 1j * im).reshape(shape)
    if obj["dtype"] == "int":
        return np.array(obj["data"], dtype=np.int64).reshape(shape)
    return np.array([float.fromhex(v) for v in obj["data"]], dtype=float).reshape(shape)


def encode(obj):
    """Recursively encode dicts/lists/arrays/floats."""
    if isinstance(obj, dict):
        return {str(k): encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode(v) for v in obj]
    if isinstance(obj, np.ndarray) or sp.issparse(obj):
        return {"__array__": encode_array(obj)}
    if isinstance(obj, (float, np.floating)):
        return {"__float__": float(obj).hex()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def decode(obj):
    if isinstance(obj, dict):
        if "__array__" in obj and len(obj) == 1:
            return decode_array(obj["__array__"])
        if "__float__" in obj and len(obj) == 1:
            return float.fromhex(obj["__float__"])
        return {k: decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [decode(v) for v in obj]
    return obj


def dumps(obj):
    return json.dumps(encode(obj), indent=1, sort_keys=True)


def loads(text):
    return decode(json.loads(text))


def save(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj))


def load(path):
    with open(path) as fh:
        return loads(fh.read())


# ------------------------------------------------------------- typed records
def certificate_record(cert):
    return {"type": "certificate", "kind": cert.kind, "payload": cert.payload, "tol": cert.tol, "meta": cert.meta}


def certificate_from_record(rec):
    from .conic.problems import Certificate

    return Certificate(rec["kind"], rec["payload"], rec["tol"], rec.get("meta", {}))


def lp_record(p):
    return {"type": "linear-program", "form": "min c.x s.t. A x (sense) b, lb <= x <= ub", "c": p.c, "A": p.A, "b": p.b, "sense": list(p.sense), "lb": p.lb, "ub": p.ub}


def lp_from_record(rec):
    from .conic.problems import LinearProgram

    return LinearProgram(rec["c"], rec["A"], rec["b"], rec["sense"], rec["lb"], rec["ub"])


def sdp_record(p):
    return {
        "type": "semidefinite-program",
        "form": "min c.x s.t. F0_k + sum_i x_i F_ki PSD, G x <= h, A x = b",
        "c": p.c,
        "blocks": [{"F0": b.F0, "F": b.F} for b in p.blocks],
        "G": p.G,
        "h": p.h,
        "A": p.A,
        "b": p.b,
    }


def sdp_from_record(rec):
    from .conic.problems import PsdBlock, SemidefiniteProgram

    blocks = [PsdBlock(np.asarray(b["F0"]), sp.csr_matrix(b["F"])) for b in rec["blocks"]]
    return SemidefiniteProgram(rec["c"], blocks, rec["G"], rec["h"], rec["A"], rec["b"])


def dump_problem(p, path=None):
    """Self-describing text dump of an LP or SDP for cross-checking with external solvers."""
    from .conic.problems import LinearProgram

    rec = lp_record(p) if isinstance(p, LinearProgram) else sdp_record(p)
    rec["format_version"] = FORMAT_VERSION
    text = dumps(rec)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load_problem(text):
    rec = loads(text)
    return lp_from_record(rec) if rec["type"] == "linear-program" else sdp_from_record(rec)
