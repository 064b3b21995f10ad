"""Adaptive LR B-spline surface fitting for scattered 2.5D point clouds.

The pipeline: detect fault and gradient-fault curves in the data, estimate
the size of the jumps across them, classify the jumps into refinement
classes, and let the classes drive local (isotropic or anisotropic)
refinement of an LR B-spline quasi-interpolant.
"""

from .datasets import (
    PointCloud,
    ScatterPoint,
    add_gaussian_noise,
    eval_f1,
    eval_f2,
    generate_halton_cloud,
    halton,
    load_xyz,
    rescale_values,
    save_xyz,
)
from .mesh import (
    Element,
    LRMesh,
    MeshLine,
    elements,
    find_element,
    init_tensor_mesh,
    insert_meshline,
)
from .basis import (
    LRBasis,
    LRBSpline,
    bspline_eval_1d,
    eval_surface_basis,
    greville,
    split_by_knot_insertion,
    tensor_basis,
    update_basis,
)
from .quasi import (
    LocalPolynomial,
    QIConfig,
    Surface,
    assemble_qi,
    collect_support_points,
    dual_coefficient,
    eval_surface,
    local_ls_fit,
    rmse,
)
from .faults import (
    DetectionConfig,
    DetectionGrid,
    FaultPoint,
    build_grid,
    detect_fault_points,
    label_alignment,
)
from .jumps import (
    JumpConfig,
    classify_jumps,
    estimate_gradient_jump,
    estimate_jump,
)
from .adaptive import (
    AdaptiveConfig,
    FitReport,
    IterationRecord,
    mark,
    refine,
    run_fault_driven_fit,
    run_jump_driven_fit,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
