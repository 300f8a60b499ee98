"""JSON/CSV file formats: networks, loads, measurement sets, calibration results."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .network import FluidProperties, InnerNode, Network, Pipe, SourceNode
from .steady_state import LoadingCondition, MeasurementSet


class FormatError(ValueError):
    """Input document is malformed or inconsistent with the network."""


def _load_json(path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}") from exc


def _num(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(f"{what}: expected a number, got {value!r}")
    return float(value)


def network_from_dict(doc: dict) -> tuple[Network, tuple[str, ...]]:
    """Build a network and its sensor node list from the document layout."""
    if not isinstance(doc, dict):
        raise FormatError("network document must be a JSON object")
    try:
        fl = doc.get("fluid", {})
        fluid = FluidProperties(
            rho=_num(fl.get("rho", 998.5986), "fluid.rho"),
            eta=_num(fl.get("eta", 1.0526e-3), "fluid.eta"),
            g=_num(fl.get("g", 9.81), "fluid.g"),
        )
        inner, sources = [], []
        for node in doc["nodes"]:
            nid = str(node["id"])
            kind = node.get("type", "inner")
            if kind == "inner":
                inner.append(InnerNode(nid, _num(node.get("elevation", 0.0), f"node {nid} elevation")))
            elif kind == "source":
                sources.append(SourceNode(nid))
            else:
                raise FormatError(f"node {nid}: unknown type {kind!r}")
        pipes = []
        for p in doc["pipes"]:
            pid = str(p["id"])
            rough = p.get("roughness")
            pipes.append(Pipe(
                id=pid,
                from_node=str(p["from"]),
                to_node=str(p["to"]),
                length=_num(p["length"], f"pipe {pid} length"),
                diameter=_num(p["diameter"], f"pipe {pid} diameter"),
                roughness=None if rough is None else _num(rough, f"pipe {pid} roughness"),
                minor_loss=_num(p.get("minor_loss", 0.0), f"pipe {pid} minor_loss"),
            ))
    except KeyError as exc:
        raise FormatError(f"missing field {exc.args[0]!r} in network document") from exc
    except (TypeError, AttributeError) as exc:
        raise FormatError(f"malformed network document: {exc}") from exc
    sensors = tuple(str(s) for s in doc.get("sensors", []))
    return Network(inner, sources, pipes, fluid), sensors


def network_to_dict(net: Network, sensors=()) -> dict:
    doc = {
        "fluid": {"rho": net.fluid.rho, "eta": net.fluid.eta, "g": net.fluid.g},
        "nodes": [{"id": n.id, "elevation": n.elevation, "type": "inner"} for n in net.inner_nodes]
        + [{"id": s.id, "type": "source"} for s in net.source_nodes],
        "pipes": [],
        "sensors": list(sensors),
    }
    for p in net.pipes:
        entry = {"id": p.id, "from": p.from_node, "to": p.to_node,
                 "length": p.length, "diameter": p.diameter}
        if p.roughness is not None:
            entry["roughness"] = p.roughness
        doc["pipes"].append(entry)
    return doc


def read_network(path) -> tuple[Network, tuple[str, ...]]:
    return network_from_dict(_load_json(path))


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _vector(values, ids, what, default=None):
    """Dict keyed by id, or list in id order, to an array."""
    if isinstance(values, dict):
        unknown = [str(k) for k in values if str(k) not in ids]
        if unknown:
            raise FormatError(f"{what}: unknown node ids {', '.join(unknown)}")
        lookup = {str(k): v for k, v in values.items()}
        out = []
        for nid in ids:
            if nid in lookup:
                out.append(_num(lookup[nid], f"{what}[{nid}]"))
            elif default is not None:
                out.append(default)
            else:
                raise FormatError(f"{what}: missing value for node {nid}")
        return np.array(out, dtype=float)
    if isinstance(values, list):
        if len(values) != len(ids):
            raise FormatError(f"{what}: expected {len(ids)} values, got {len(values)}")
        return np.array([_num(v, what) for v in values], dtype=float)
    raise FormatError(f"{what}: expected an object or a list")


def loads_from_dict(doc: dict, net: Network) -> list[LoadingCondition]:
    try:
        entries = doc["loads"]
    except (KeyError, TypeError) as exc:
        raise FormatError("loads document needs a 'loads' list") from exc
    out = []
    for i, entry in enumerate(entries, start=1):
        try:
            q = _vector(entry["demands"], net.inner_ids, f"load {i} demands", default=0.0)
            hs = _vector(entry["source_heads"], net.source_ids, f"load {i} source_heads")
            out.append(LoadingCondition(q, hs))
        except KeyError as exc:
            raise FormatError(f"load {i}: missing field {exc.args[0]!r}") from exc
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"load {i}: {exc}") from exc
    return out


def loads_to_dict(loads, net: Network) -> dict:
    return {"loads": [
        {"demands": dict(zip(net.inner_ids, map(float, ld.demands))),
         "source_heads": dict(zip(net.source_ids, map(float, ld.source_heads)))}
        for ld in loads
    ]}


def read_loads(path, net: Network) -> list[LoadingCondition]:
    return loads_from_dict(_load_json(path), net)


def _sensor_ids(sensors) -> list[str]:
    # accepts a SensorConfig or a plain sequence of node ids
    return [str(s) for s in getattr(sensors, "measured_nodes", sensors)]


def measurements_to_dict(sets, net: Network, sensors) -> dict:
    sensors = _sensor_ids(sensors)
    return {
        "head_convention": "pressure",
        "sets": [
            {
                "demands": dict(zip(net.inner_ids, map(float, m.demands))),
                "source_heads": dict(zip(net.source_ids, map(float, m.source_heads))),
                "sensed_heads": dict(zip(sensors, map(float, m.sensed_heads))),
            }
            for m in sets
        ],
    }


def measurements_from_dict(doc: dict, net: Network, sensors, piezometric: bool = False
                           ) -> list[MeasurementSet]:
    """Parse measurement sets; sensed heads are returned as pressure heads.

    Piezometric input (``head_convention`` or the ``piezometric`` flag) has
    the sensor elevations subtracted.
    """
    if not isinstance(doc, dict) or "sets" not in doc:
        raise FormatError("measurement document needs a 'sets' list")
    convention = doc.get("head_convention", "pressure")
    if convention not in ("pressure", "piezometric"):
        raise FormatError(f"unknown head_convention {convention!r}")
    piezometric = piezometric or convention == "piezometric"
    sensors = _sensor_ids(sensors)
    z = np.array([net.elevations[net.inner_index[s]] for s in sensors])
    out = []
    for i, entry in enumerate(doc["sets"], start=1):
        try:
            q = _vector(entry["demands"], net.inner_ids, f"set {i} demands", default=0.0)
            hs = _vector(entry["source_heads"], net.source_ids, f"set {i} source_heads")
            y = _vector(entry["sensed_heads"], sensors, f"set {i} sensed_heads")
        except KeyError as exc:
            raise FormatError(f"set {i}: missing field {exc.args[0]!r}") from exc
        if piezometric:
            y = y - z
        out.append(MeasurementSet(q, hs, y))
    return out


def read_measurements(path, net: Network, sensors, piezometric: bool = False):
    return measurements_from_dict(_load_json(path), net, sensors, piezometric)


def result_to_dict(result, problem) -> dict:
    net = problem.network
    x = result.x
    eps = x[: net.n_pipes]
    heads = {}
    for i, hN in enumerate(problem.split(x)[1], start=1):
        heads[str(i)] = dict(zip(problem.sensors.unmeasured_nodes, map(float, hN)))
    return {
        "roughness_mm": [float(e) * 1e3 for e in eps],
        "roughness_m": dict(zip(net.pipe_ids, map(float, eps))),
        "unmeasured_heads_m": heads,
        "merit": float(result.merit),
        "feasible": bool(result.feasible),
        "seed": result.seed,
        "trace": [
            {
                "outer_iter": t.index,
                "x0": [float(v) for v in t.x0],
                "x": [float(v) for v in t.x],
                "v": float(t.merit),
                "newton_iterations": t.newton_iterations,
                "buffered": t.buffered,
                "status": t.status,
            }
            for t in result.trace
        ],
    }


def decision_vector_from_result(doc: dict, problem) -> np.ndarray:
    """Decision vector stored in a result document written by :func:`result_to_dict`."""
    try:
        eps = [_num(v, "roughness_mm") * 1e-3 for v in doc["roughness_mm"]]
        heads = doc["unmeasured_heads_m"]
        hN = [[_num(heads[str(i)][n], f"unmeasured_heads_m[{i}][{n}]")
               for n in problem.sensors.unmeasured_nodes]
              for i in range(1, problem.n_sets + 1)]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"result document does not match the problem: missing {exc}") from exc
    if len(eps) != problem.n_pipes:
        raise FormatError(f"result has {len(eps)} roughness values, expected {problem.n_pipes}")
    return problem.join(eps, hN)


def read_result_vector(path, problem) -> np.ndarray:
    return decision_vector_from_result(_load_json(path), problem)


def trace_rows(result, problem) -> list[list[str]]:
    """Table layout: one row per quantity, one column per outer iteration.

    Roughness in mm, heads in m, merit scaled by 1e5 (m^3/s).
    """
    net = problem.network
    labels = [f"eps_{pid}_mm" for pid in net.pipe_ids]
    for i in range(1, problem.n_sets + 1):
        labels += [f"hN_{nid}_set{i}_m" for nid in problem.sensors.unmeasured_nodes]
    scale = np.ones(problem.n_unknowns)
    scale[: net.n_pipes] = 1e3
    iters = [str(t.index) for t in result.trace]
    rows = [["quantity", "stage", *iters]]
    for stage in ("x0", "x"):
        for j, label in enumerate(labels):
            rows.append([label, stage, *(repr(float(getattr(t, stage)[j] * scale[j]))
                                         for t in result.trace)])
    rows.append(["v_e5", "x", *(repr(float(t.merit * 1e5)) for t in result.trace)])
    return rows


def write_trace_csv(path, result, problem) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(trace_rows(result, problem))


def write_scan_csv(path, grid) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([grid.axis_a.label, grid.axis_b.label if grid.axis_b else "b",
                    "v_L1", "v_L2", "v_Linf"])
        for row in grid.rows():
            w.writerow([repr(float(v)) for v in row])


