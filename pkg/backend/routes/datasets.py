"""
Dataset statistics for an uploaded triplets.jsonl file.
"""
from fastapi import APIRouter, File, HTTPException, UploadFile

from dataset import stats_from_lines
from schemas import StatsReport

router = APIRouter(prefix="/datasets", tags=["datasets"])


@router.post("/stats", response_model=StatsReport)
async def upload_stats(file: UploadFile = File(...)):
    """Word, vocabulary and body-part statistics; malformed lines are listed, not fatal."""
    content = await file.read()
    try:
        text = content.decode("utf-8-sig")
    except UnicodeDecodeError:
        raise HTTPException(status_code=400, detail="Dataset file must be UTF-8 encoded")
    return stats_from_lines(text.splitlines())
