"""Reading and writing the JSON and CSV artifacts.

JSON is written with sorted keys and ``repr``-precision floats so identical
inputs give byte-identical files.
"""
import csv
import io as _io
import json
from pathlib import Path

import numpy as np

from .disentangle import LatentStructure
from .errors import DimensionMismatch, MixIdError, ParseError
from .gmm import gmm_from_arrays
from .pwa import Layer, NetworkSpec, PiecewiseAffineFunction


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj):
    return json.dumps(_plain(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj), encoding="utf-8")


def _load(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def gmm_from_dict(data):
    try:
        comps = data["components"]
        w = [c["weight"] for c in comps]
        mu = np.array([c["mean"] for c in comps], dtype=float)
        S = np.array([c["cov"] for c in comps], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed mixture: {exc}") from None
    if "dim" in data and mu.shape[1] != int(data["dim"]):
        raise DimensionMismatch(f"declared dim {data['dim']} but means have {mu.shape[1]}")
    return gmm_from_arrays(w, mu, S)


def read_gmm(path):
    return gmm_from_dict(_load(path))


def write_gmm(path, gmm):
    write_json(path, gmm.to_dict())


def network_from_dict(data):
    try:
        layers = [Layer(np.array(l["W"], dtype=float), np.array(l["b"], dtype=float),
                        l.get("act", "relu"), float(l.get("slope", 0.0) or 0.0))
                  for l in data["layers"]]
    except MixIdError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed network: {exc}") from None
    return NetworkSpec(tuple(layers))


def network_to_dict(net):
    out = []
    for l in net.layers:
        item = {"W": l.weights.tolist(), "b": l.bias.tolist(),
                "act": {"identity": "id"}.get(l.activation, l.activation)}
        if l.activation == "leaky_relu":
            item["slope"] = l.slope
        out.append(item)
    return {"layers": out}


def read_network(path):
    return network_from_dict(_load(path))


def write_network(path, net):
    write_json(path, network_to_dict(net))


def read_pwa(path):
    try:
        return PiecewiseAffineFunction.from_list(_load(path))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed piecewise-affine function: {exc}") from None


def write_pwa(path, f):
    write_json(path, f.to_list())


def read_structure(path):
    try:
        return LatentStructure.from_dict(_load(path))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed structure: {exc}") from None


def write_structure(path, structure):
    write_json(path, structure.to_dict())


def csv_text(header, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    Path(path).write_text(csv_text(header, rows), encoding="utf-8")


def write_matrix_csv(path, X, prefix="z"):
    X = np.asarray(X, dtype=float)
    write_csv(path, [f"{prefix}{j + 1}" for j in range(X.shape[1])], X.tolist())
