from typing import List

from fastapi import APIRouter, Depends

from config import EngineResources, get_resources
from instruction_parser import canonical, parse_modifier
from schemas import LintRequest, LintViolation, ParseResponse, TextRequest
from verbalizer import lint_modifier, lr_flip_text

router = APIRouter(prefix="/text", tags=["text"])


@router.post("/lint", response_model=List[LintViolation])
def lint_text(data: LintRequest):
    return lint_modifier(data.text, data.profile)


@router.post("/flip", response_model=TextRequest)
def flip_text(data: TextRequest, res: EngineResources = Depends(get_resources)):
    return TextRequest(text=lr_flip_text(data.text, res.guard))


@router.post("/parse", response_model=ParseResponse)
def parse_text(data: TextRequest, res: EngineResources = Depends(get_resources)):
    """Codes read back from a modifier written in the engine's own grammar."""
    result = parse_modifier(data.text, res.grammar)
    return ParseResponse(codes=canonical(result.edits), edits=result.edits, unknown_spans=result.unknown_spans)
