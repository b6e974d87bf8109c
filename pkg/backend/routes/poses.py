from fastapi import APIRouter, Depends, HTTPException

from config import EngineResources, get_resources
from errors import PosemodError
from schemas import NormalizedPose, Pose, PoseMetrics, PosePairRequest
from skeleton import forward_kinematics, geodesic_distance, lr_flip_pose, mpje, normalize_orientation

router = APIRouter(prefix="/poses", tags=["poses"])


@router.post("/flip", response_model=Pose)
def flip_pose(pose: Pose, res: EngineResources = Depends(get_resources)):
    """Left/right mirror of a pose."""
    try:
        return lr_flip_pose(pose, res.skeleton)
    except PosemodError as e:
        raise HTTPException(status_code=400, detail=str(e))


@router.post("/normalize", response_model=NormalizedPose)
def normalize_pose(pose: Pose, res: EngineResources = Depends(get_resources)):
    """Turn the body to face +z; returns the yaw that was removed."""
    try:
        normalized, yaw = normalize_orientation(pose, res.skeleton)
    except PosemodError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return NormalizedPose(pose=normalized, yaw=yaw)


@router.post("/metrics", response_model=PoseMetrics)
def pose_metrics(data: PosePairRequest, res: EngineResources = Depends(get_resources)):
    """MPJE (mm) and mean geodesic rotation distance (degrees) between two poses."""
    skel = res.skeleton
    try:
        return PoseMetrics(
            mpje_mm=mpje(forward_kinematics(data.pose_a, skel), forward_kinematics(data.pose_b, skel)),
            geodesic_deg=geodesic_distance(data.pose_a, data.pose_b),
        )
    except PosemodError as e:
        raise HTTPException(status_code=400, detail=str(e))
