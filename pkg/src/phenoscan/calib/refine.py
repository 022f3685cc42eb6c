"""Joint reprojection refinement of intrinsics, rig poses and the target pose."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..geom import CameraIntrinsics, Pose, rodrigues_batch
from .lm import forward_jacobian, levenberg_marquardt, null_space_dim
from .turntable import canonicalize_gauge
from .types import (
    CornerObservations,
    NonConvergenceError,
    RankDeficiencyWarning,
    RigCalibration,
    TargetModel,
)

log = logging.getLogger(__name__)

# rotation about and translation along the world y-axis leave every image unchanged
GAUGE_DOF = 2


@dataclass
class RefineReport:
    initial_rms: float
    final_rms: float
    n_iter: int
    n_accepted: int
    message: str
    costs: list[float]
    per_view_rms: dict = field(default_factory=dict)
    null_dim: int = 0


class ReprojectionModel:
    """Vectorized reprojection residuals for every observed corner.

    Parameter layout: per camera ``[f, cu, cv, d1, d2]``, then per
    (camera, tilt) node a rotation correction and translation, then the
    same six numbers for the target zero pose.  Rotations are corrections
    applied on the left of the starting estimates.
    """

    def __init__(self, rig: RigCalibration, target: TargetModel, obs: CornerObservations):
        self.cams = sorted(rig.intrinsics)
        self.nodes = sorted(rig.base_poses)
        cam_idx = {k: n for n, k in enumerate(self.cams)}
        node_idx = {k: n for n, k in enumerate(self.nodes)}
        keep = np.array([(int(k), int(j)) in node_idx for k, j in zip(obs.camera, obs.tilt)], dtype=bool)
        if not keep.all():
            log.warning("dropping %d observations of uncalibrated nodes", int((~keep).sum()))
            obs = obs.subset(keep)
        self.obs = obs
        self.rec_cam = np.array([cam_idx[int(k)] for k in obs.camera], dtype=np.int64)
        self.rec_node = np.array(
            [node_idx[(int(k), int(j))] for k, j in zip(obs.camera, obs.tilt)], dtype=np.int64
        )
        theta = obs.pan_angle
        self.c, self.s = np.cos(theta), np.sin(theta)
        self.P = target.points[obs.corner]
        self.uv = obs.uv
        self.R0 = np.array([rig.base_poses[n].R for n in self.nodes])
        self.T0R = rig.target_zero_pose.R.copy()
        self.sizes = {k: (rig.intrinsics[k].width, rig.intrinsics[k].height) for k in self.cams}
        self.x0 = np.concatenate(
            [rig.intrinsics[k].params() for k in self.cams]
            + [np.r_[0.0, 0.0, 0.0, rig.base_poses[n].t] for n in self.nodes]
            + [np.r_[0.0, 0.0, 0.0, rig.target_zero_pose.t]]
        )

    def unpack(self, x):
        nc, nn = len(self.cams), len(self.nodes)
        intr = x[: 5 * nc].reshape(nc, 5)
        nd = x[5 * nc : 5 * nc + 6 * nn].reshape(nn, 6)
        tz = x[5 * nc + 6 * nn :]
        Rn = rodrigues_batch(nd[:, :3]) @ self.R0
        RT = rodrigues_batch(tz[None, :3])[0] @ self.T0R
        return intr, Rn, nd[:, 3:], RT, tz[3:]

    def residuals(self, x):
        intr, Rn, tn, RT, tT = self.unpack(x)
        q = self.P @ RT.T + tT
        # turntable rotation about y, one angle per record
        qx = self.c * q[:, 0] + self.s * q[:, 2]
        qz = -self.s * q[:, 0] + self.c * q[:, 2]
        q = np.column_stack([qx, q[:, 1], qz])
        pc = np.einsum("nij,nj->ni", Rn[self.rec_node], q) + tn[self.rec_node]
        m = pc[:, :2] / pc[:, 2:3]
        r2 = np.sum(m * m, axis=1)
        ki = intr[self.rec_cam]
        g = 1.0 + ki[:, 3] * r2 + ki[:, 4] * r2 * r2
        pred = ki[:, :1] * m * g[:, None] + ki[:, 1:3]
        return (pred - self.uv).ravel()

    def rig(self, x, pan_angles, rms=None) -> RigCalibration:
        intr, Rn, tn, RT, tT = self.unpack(x)
        intrinsics = {
            k: CameraIntrinsics.from_params(intr[n], *self.sizes[k]) for n, k in enumerate(self.cams)
        }
        base = {node: Pose(Rn[n], tn[n]) for n, node in enumerate(self.nodes)}
        return RigCalibration(intrinsics, base, Pose(RT, tT), tuple(pan_angles), rms)

    def per_view_rms(self, r) -> dict:
        d2 = r.reshape(-1, 2)
        d2 = np.sum(d2 * d2, axis=1)
        o = self.obs
        keys = np.column_stack([o.camera, o.tilt, o.pan])
        out = {}
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        sums = np.bincount(inv, weights=d2)
        cnt = np.bincount(inv)
        for n, key in enumerate(uniq):
            out[tuple(int(v) for v in key)] = float(np.sqrt(sums[n] / (2 * cnt[n])))
        return out


def rms_of(r: np.ndarray) -> float:
    """Root mean square over all residual coordinates (u and v separately)."""
    return float(np.sqrt(np.mean(r * r))) if r.size else 0.0


def refine_all(
    rig: RigCalibration,
    target: TargetModel,
    obs: CornerObservations,
    *,
    max_iter: int = 200,
    rms_floor: float = 1e-9,
    ref=None,
) -> tuple[RigCalibration, RefineReport]:
    """Refine every rig parameter against all corner observations.

    Pan angles are held fixed.  The result is returned in the canonical
    world gauge (see ``canonicalize_gauge``) relative to ``ref``, which
    defaults to the first node.
    """
    model = ReprojectionModel(rig, target, obs)
    n_res = len(model.uv) * 2
    floor = 0.5 * n_res * rms_floor**2
    res = levenberg_marquardt(model.residuals, model.x0, max_iter=max_iter, cost_floor=floor)
    r0 = model.residuals(model.x0)
    r = model.residuals(res.x)
    J = res.jac if res.jac is not None else forward_jacobian(model.residuals, res.x, r)
    nd = null_space_dim(J)
    if nd > GAUGE_DOF:
        warnings.warn(
            f"{nd - GAUGE_DOF} rig parameter combination(s) are not constrained by the observations",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    if not res.converged:
        raise NonConvergenceError(f"joint refinement did not converge: {res.message}")
    out = model.rig(res.x, rig.pan_angles, rms_of(r))
    ref = ref if ref is not None else out.nodes[0]
    base, T0 = canonicalize_gauge(out.base_poses, out.target_zero_pose, target, ref)
    out = RigCalibration(out.intrinsics, base, T0, out.pan_angles, out.rms)
    report = RefineReport(
        rms_of(r0), rms_of(r), res.n_iter, res.n_accepted, res.message, res.costs, model.per_view_rms(r), nd
    )
    log.info(
        "joint refinement: rms %.4f -> %.4f px in %d iterations (%d accepted)",
        report.initial_rms,
        report.final_rms,
        res.n_iter,
        res.n_accepted,
    )
    return out, report


def reprojection_rms(rig: RigCalibration, target: TargetModel, obs: CornerObservations) -> float:
    model = ReprojectionModel(rig, target, obs)
    return rms_of(model.residuals(model.x0))
