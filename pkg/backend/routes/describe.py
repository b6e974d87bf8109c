from fastapi import APIRouter, Depends, HTTPException

from config import EngineResources, get_resources
from dataset import describe_pair
from errors import PosemodError
from pipeline import canonical_codes
from schemas import DescribeRequest, DescribeResponse

router = APIRouter(prefix="/describe", tags=["describe"])


@router.post("/", response_model=DescribeResponse)
def describe(data: DescribeRequest, res: EngineResources = Depends(get_resources)):
    """Modifier text turning pose A into pose B."""
    if data.cap is not None and data.cap < 1:
        raise HTTPException(status_code=400, detail="cap must be at least 1")
    try:
        described = describe_pair(data.pose_a, data.pose_b, data.pair_kind, res, data.seed, cap=data.cap)
    except PosemodError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return DescribeResponse(text=described.text, codes=described.codes, plan=canonical_codes(described.plan))
