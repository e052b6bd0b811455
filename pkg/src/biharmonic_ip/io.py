"""File formats: fields, DN samples, models, decay profiles and recovery reports."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .grid import DnData, GridDomain, ScalarField
from .semilinear import CoefficientModel, PolyTensorField
from .tensor_core import SymTensor


def _header(field: ScalarField) -> dict:
    grid = field.grid
    return {"N": grid.N, "domain": [0.0, 1.0, 0.0, 1.0],
            "complex": bool(np.any(field.nodes.imag != 0)),
            "gamma": [[s.edge, s.s0, s.s1] for s in grid.gamma]}


def write_field(path, field: ScalarField, fmt=None):
    """Node values (boundary included, ghosts dropped) with a JSON header line.

    ``fmt`` is ``"csv"`` or ``"bin"``; by default it follows the file suffix.
    """
    path = Path(path)
    fmt = fmt or ("bin" if path.suffix in (".bin", ".dat") else "csv")
    head = json.dumps(_header(field))
    vals = field.nodes
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(head.encode() + b"\n")
            fh.write(np.ascontiguousarray(vals, dtype="<c16").tobytes())
        return path
    x1, x2 = field.grid.nodes_x
    with open(path, "w", newline="") as fh:
        fh.write("# " + head + "\n")
        w = csv.writer(fh)
        w.writerow(["i", "j", "x1", "x2", "re", "im"])
        for (i, j), v in np.ndenumerate(vals):
            w.writerow([i, j, repr(float(x1[i, j])), repr(float(x2[i, j])),
                        repr(float(v.real)), repr(float(v.imag))])
    return path


def read_field(path, grid: GridDomain | None = None) -> ScalarField:
    """Inverse of :func:`write_field`. The ghost layer is rebuilt by linear extrapolation."""
    path = Path(path)
    with open(path, "rb") as fh:
        first = fh.readline().decode()
        rest = fh.read()
    head = json.loads(first.lstrip("# ").strip())
    N = int(head["N"])
    if grid is None:
        grid = GridDomain(N, [tuple(s) for s in head.get("gamma", [["left", 0, 1]])])
    elif grid.N != N:
        raise ValueError(f"file holds N={N}, grid has N={grid.N}")
    if first.startswith("#"):
        vals = np.zeros(grid.shape, dtype=complex)
        rows = list(csv.reader(rest.decode().splitlines()))[1:]
        for r in rows:
            vals[int(r[0]), int(r[1])] = complex(float(r[4]), float(r[5]))
    else:
        vals = np.frombuffer(rest, dtype="<c16").reshape(grid.shape).copy()
    ext = np.zeros(grid.ext_shape, dtype=complex)
    ext[1:-1, 1:-1] = vals
    ext[0, :] = 2 * ext[1, :] - ext[2, :]
    ext[-1, :] = 2 * ext[-2, :] - ext[-3, :]
    ext[:, 0] = 2 * ext[:, 1] - ext[:, 2]
    ext[:, -1] = 2 * ext[:, -2] - ext[:, -3]
    return ScalarField(grid, ext)


def write_dn_csv(path, dn: DnData):
    """Rows ``(edge, s, order, re, im)`` for ``order`` in 2, 3."""
    edges, _, _, s = dn.samples
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edge", "s", "order", "re", "im"])
        for order, arr in ((2, dn.d2), (3, dn.d3)):
            for e, sk, v in zip(edges, s, arr):
                w.writerow([e, repr(float(sk)), order, repr(float(v.real)), repr(float(v.imag))])
    return path


def read_dn_csv(path, grid: GridDomain) -> DnData:
    edges, _, _, s = grid.boundary_samples("sigma")
    pos = {(e, round(float(sk), 12)): k for k, (e, sk) in enumerate(zip(edges, s))}
    d = {2: np.zeros(len(edges), dtype=complex), 3: np.zeros(len(edges), dtype=complex)}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            k = pos[(row["edge"], round(float(row["s"]), 12))]
            d[int(row["order"])][k] = complex(float(row["re"]), float(row["im"]))
    return DnData(grid, d[2], d[3])


def _tensor_from_spec(spec, l, n):
    if isinstance(spec, dict):
        return SymTensor.from_dict(spec)
    arr = np.asarray(spec, dtype=complex if np.iscomplexobj(spec) else float)
    if l == 0:
        return SymTensor(n, 0, arr.reshape(()))
    return SymTensor(n, l, arr)


def model_from_dict(data: dict) -> CoefficientModel:
    """Model from JSON data; each entry is ``{l, k, field}`` or ``{l, k, constant}``.

    ``constant`` is a number, a nested list of full components, or a tensor dict.
    """
    n = int(data.get("n", 2))
    model = CoefficientModel(n=n)
    for item in data.get("coefficients", []):
        l, k = int(item["l"]), int(item["k"])
        if "field" in item:
            model.set(l, k, PolyTensorField.from_dict(item["field"]))
        elif "constant" in item:
            model.set(l, k, _tensor_from_spec(item["constant"], l, n))
        else:
            raise ValueError(f"coefficient ({l}, {k}) needs 'field' or 'constant'")
    return model


def load_model(path) -> CoefficientModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_model(path, model: CoefficientModel):
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=2)
    return path


def write_decay_csv(path, profile):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "norm", "fit_residual"])
        for h, v, r in profile.rows():
            w.writerow([repr(float(h)), repr(float(v)), repr(float(r))])
    return path


def write_pairs_csv(path, result):
    """Boundary functional and fitted volume functional per test tuple."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tuple", "boundary_re", "boundary_im", "volume_re", "volume_im"])
        for k, (b, v) in enumerate(result.pairs):
            w.writerow([k, repr(b.real), repr(b.imag), repr(v.real), repr(v.imag)])
    return path


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
    return path


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item() if not np.iscomplexobj(obj) else [obj.real.item(), obj.imag.item()]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return np.stack([obj.real, obj.imag], axis=-1).tolist()
        return obj.tolist()
    if isinstance(obj, SymTensor):
        return obj.to_dict()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
