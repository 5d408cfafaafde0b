"""Problem and instance files.

Problems are stored as JSON mirroring the model types one to one; field
names match the dataclass fields.  Example:

    {
      "objective": [5.0, 3.0],
      "sense": "max",
      "risk": 0.1,
      "domain": {"kind": "binary", "n": 2},
      "ball": {"radius": 0.01, "norm": "l2"},
      "support": {"kind": "full_space", "dim": 2},
      "samples": [[1.0, 2.0], [0.5, 1.5]],
      "constraints": [
        {"kind": "affine", "A": [[-1.0, 0.0], [0.0, -1.0]],
         "a": [0.0, 0.0], "b": [0.0, 0.0], "h": 5.0}
      ]
    }

Transportation instances use a separate schema produced by
``drccp generate transport``.
"""

from __future__ import annotations

import json

import numpy as np

from .experiments import KnapsackInstance, TransportInstance
from .model import (
    AffineBoth,
    BilinearQuadratic,
    BinaryDomain,
    Box,
    BoxDomain,
    DrccpProblem,
    Ellipsoid,
    FullSpace,
    GroundNorm,
    LinearDomain,
    Polyhedron,
    QuadraticXi,
    SampleSet,
    WassersteinBall,
)


def _support_to_dict(s):
    if isinstance(s, FullSpace):
        return {"kind": "full_space", "dim": s.dim}
    if isinstance(s, Polyhedron):
        return {"kind": "polyhedron", "rows": s.rows.tolist(), "offsets": s.offsets.tolist()}
    if isinstance(s, Ellipsoid):
        return {"kind": "ellipsoid", "shape": s.shape.tolist(), "center": s.center.tolist()}
    if isinstance(s, Box):
        return {"kind": "box", "lower": s.lower.tolist(), "upper": s.upper.tolist()}
    raise TypeError(f"unknown support {type(s).__name__}")


def _support_from_dict(d):
    kind = d["kind"]
    if kind == "full_space":
        return FullSpace(int(d["dim"]))
    if kind == "polyhedron":
        return Polyhedron(np.asarray(d["rows"]), np.asarray(d["offsets"]))
    if kind == "ellipsoid":
        return Ellipsoid(np.asarray(d["shape"]), np.asarray(d["center"]))
    if kind == "box":
        return Box(np.asarray(d["lower"]), np.asarray(d["upper"]))
    raise ValueError(f"unknown support kind {kind!r}")


def _domain_to_dict(dom):
    if isinstance(dom, BinaryDomain):
        return {"kind": "binary", "n": dom.n}
    if isinstance(dom, BoxDomain):
        return {"kind": "box", "lower": dom.lower.tolist(), "upper": dom.upper.tolist()}
    if isinstance(dom, LinearDomain):
        return {"kind": "linear", "A": dom.A.tolist(), "rhs": dom.rhs.tolist()}
    raise TypeError(f"unknown domain {type(dom).__name__}")


def _domain_from_dict(d):
    kind = d["kind"]
    if kind == "binary":
        return BinaryDomain(int(d["n"]))
    if kind == "box":
        return BoxDomain(np.asarray(d["lower"]), np.asarray(d["upper"]))
    if kind == "linear":
        return LinearDomain(np.asarray(d["A"]), np.asarray(d["rhs"]))
    raise ValueError(f"unknown domain kind {kind!r}")


def _constraint_to_dict(f):
    if isinstance(f, AffineBoth):
        return {"kind": "affine", "A": f.A.tolist(), "a": f.a.tolist(),
                "b": f.b.tolist(), "h": f.h}
    if isinstance(f, QuadraticXi):
        return {"kind": "quadratic_xi", "A": f.A.tolist(), "b": f.b.tolist(), "h": f.h}
    if isinstance(f, BilinearQuadratic):
        return {"kind": "bilinear_quadratic", "W": f.W.tolist(), "r": f.r.tolist(),
                "h": f.h.tolist()}
    raise TypeError(f"unknown constraint {type(f).__name__}")


def _constraint_from_dict(d):
    kind = d["kind"]
    if kind == "affine":
        return AffineBoth(np.asarray(d["A"]), np.asarray(d["a"]),
                          np.asarray(d["b"]), float(d["h"]))
    if kind == "quadratic_xi":
        return QuadraticXi(np.asarray(d["A"]), np.asarray(d["b"]), float(d["h"]))
    if kind == "bilinear_quadratic":
        return BilinearQuadratic(np.asarray(d["W"]), np.asarray(d["r"]),
                                 np.asarray(d["h"]))
    raise ValueError(f"unknown constraint kind {kind!r}")


def problem_to_dict(p: DrccpProblem) -> dict:
    return {
        "objective": p.objective.tolist(),
        "sense": p.sense,
        "risk": p.risk,
        "domain": _domain_to_dict(p.domain),
        "ball": {"radius": p.ball.radius, "norm": p.ball.norm.value},
        "support": _support_to_dict(p.support),
        "samples": p.ball.center.samples.tolist(),
        "constraints": [_constraint_to_dict(f) for f in p.constraints],
    }


def problem_from_dict(d: dict) -> DrccpProblem:
    samples = SampleSet.from_array(np.asarray(d["samples"]))
    ball = WassersteinBall(
        float(d["ball"]["radius"]), GroundNorm(d["ball"]["norm"]), samples
    )
    return DrccpProblem(
        objective=np.asarray(d["objective"]),
        domain=_domain_from_dict(d["domain"]),
        constraints=tuple(_constraint_from_dict(c) for c in d["constraints"]),
        risk=float(d["risk"]),
        ball=ball,
        support=_support_from_dict(d["support"]),
        sense=d.get("sense", "min"),
    )


def save_problem(p: DrccpProblem, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(p), fh, indent=1)
        fh.write("\n")


def load_problem(path: str) -> DrccpProblem:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


# -- study instances ----------------------------------------------------------


def transport_to_dict(instance: TransportInstance, samples: np.ndarray) -> dict:
    return {
        "kind": "transport",
        "m": instance.m,
        "n": instance.n,
        "L_low": instance.L_low,
        "L_high": instance.L_high,
        "d": instance.d.tolist(),
        "mu": instance.mu.tolist(),
        "Sigma": instance.Sigma.tolist(),
        "seed": instance.seed,
        "samples": np.asarray(samples).tolist(),
    }


def transport_from_dict(d: dict) -> tuple[TransportInstance, np.ndarray]:
    inst = TransportInstance(
        int(d["m"]), int(d["n"]), float(d["L_low"]), float(d["L_high"]),
        np.asarray(d["d"]), np.asarray(d["mu"]), np.asarray(d["Sigma"]),
        int(d["seed"]),
    )
    return inst, np.asarray(d["samples"], dtype=float)


def knapsack_to_dict(instance: KnapsackInstance) -> dict:
    return {
        "kind": "knapsack",
        "n": instance.n,
        "T": instance.T,
        "c": instance.c.tolist(),
        "b": instance.b.tolist(),
        "samples": instance.samples.tolist(),
        "seed": instance.seed,
    }


def knapsack_from_dict(d: dict) -> KnapsackInstance:
    return KnapsackInstance(
        int(d["n"]), int(d["T"]), np.asarray(d["c"]), np.asarray(d["b"]),
        np.asarray(d["samples"]), int(d["seed"]),
    )


def save_json(obj: dict, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)
