"""Regenerate the golden IR snapshots (run from the repo root:
``python3 tests/make_golden.py``).  Each file pins the exact serialized
cone program of one tiny instance per builder."""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from drccp.model import (
    AffineBoth,
    BilinearQuadratic,
    BinaryDomain,
    Box,
    BoxDomain,
    DrccpProblem,
    Ellipsoid,
    FullSpace,
    GroundNorm,
    Polyhedron,
    QuadraticXi,
    SampleSet,
    WassersteinBall,
)
from drccp.reformulate import (
    build_binary_cvar_mip,
    build_cvar_relaxation,
    build_robust_membership,
    build_saa_milp,
    build_transport_cvar_lp,
)

GOLDEN = Path(__file__).parent / "golden"


def golden_cases():
    ball1 = WassersteinBall(0.25, GroundNorm.L2, SampleSet.from_array([[1.0, 2.0]]))
    affine = DrccpProblem(
        np.array([1.0, 2.0]),
        BinaryDomain(2),
        (AffineBoth(-np.eye(2), np.zeros(2), np.zeros(2), 4.0),),
        0.2,
        ball1,
        FullSpace(2),
        sense="max",
    )
    yield "binary_cvar_mip", build_binary_cvar_mip(affine)[0]
    yield "cvar_affine_fullspace", build_cvar_relaxation(affine)[0]

    box_problem = DrccpProblem(
        np.array([1.0, 1.0]),
        BoxDomain(np.zeros(2), np.ones(2)),
        (AffineBoth(-np.eye(2), np.zeros(2), np.zeros(2), 4.0),),
        0.2,
        ball1,
        Box(np.zeros(2), np.array([3.0, 3.0])),
        sense="max",
    )
    yield "robust_box", build_robust_membership(box_problem)

    ball2 = WassersteinBall(0.1, GroundNorm.L2, SampleSet.from_array([[0.25, -0.5]]))
    quad_poly = DrccpProblem(
        np.array([1.0, -1.0]),
        BoxDomain(-np.ones(2), np.ones(2)),
        (QuadraticXi(np.eye(2), np.zeros(2), 1.0),),
        0.2,
        ball2,
        Polyhedron(np.eye(2), np.array([1.0, 1.0])),
    )
    yield "cvar_quadratic_polyhedron", build_cvar_relaxation(quad_poly)[0]

    quad_ellip = DrccpProblem(
        np.array([1.0, -1.0]),
        BoxDomain(-np.ones(2), np.ones(2)),
        (QuadraticXi(np.eye(2), np.zeros(2), 1.0),),
        0.2,
        ball2,
        Ellipsoid(np.eye(2), np.zeros(2)),
    )
    yield "cvar_quadratic_ellipsoid", build_cvar_relaxation(quad_ellip)[0]

    bilinear = DrccpProblem(
        np.array([1.0]),
        BoxDomain(np.zeros(1), np.ones(1)),
        (BilinearQuadratic(np.eye(2)[None], np.zeros((1, 2)), np.ones(1)),),
        0.2,
        ball2,
        Ellipsoid(np.eye(2), np.zeros(2)),
    )
    yield "cvar_bilinear_ellipsoid", build_cvar_relaxation(bilinear)[0]

    from drccp.experiments import TransportInstance

    inst = TransportInstance(
        2, 2, 1.0, 1.0, np.full(4, 3.0), np.zeros(4), np.eye(4), 0
    )
    samples = np.array([[1.0, 2.0, 0.5, 1.5], [2.0, 1.0, 1.5, 0.5]])
    yield "transport_cvar_lp", build_transport_cvar_lp(inst, samples, 0.2, 0.1)[0]
    yield "saa_transport_milp", build_saa_milp(inst, samples, 0.2)


def main():
    GOLDEN.mkdir(exist_ok=True)
    for name, prog in golden_cases():
        path = GOLDEN / f"{name}.ir"
        path.write_text(prog.to_text())
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
