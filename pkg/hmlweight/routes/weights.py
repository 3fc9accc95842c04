"""
Imbalance weight inspection for an uploaded ARFF file.
"""

from fastapi import APIRouter, File, Form, UploadFile

from ..data import Split, parse_arff_bytes
from ..hierarchy import node_frequencies
from ..imbalance import DEFAULT_W0, NClassesMode, imbalance_weights, weight_table
from ..models import NodeWeight, WeightsResponse

router = APIRouter()


@router.post("/weights", response_model=WeightsResponse)
async def inspect_weights(
    file: UploadFile = File(...),
    w0: float = Form(DEFAULT_W0, ge=0),
    n_classes_mode: NClassesMode = Form(NClassesMode.NODE_COUNT),
):
    """Per-node frequencies and weights of an ARFF training split, rarest first."""
    parsed = parse_arff_bytes(await file.read())
    dataset = parsed.impute(parsed.column_means(), Split.TRAIN)
    freqs = node_frequencies(dataset.labels)
    weights = imbalance_weights(freqs, w0, n_classes_mode)
    rows = weight_table(dataset.hierarchy.node_ids, freqs, weights)
    return WeightsResponse(
        n_obs=dataset.n_rows,
        w0=w0,
        n_classes_mode=n_classes_mode.value,
        nodes=[NodeWeight(node_id=r.node_id, n_i=r.count, f_i=r.freq, w_i=r.raw, w_tilde=r.rescaled) for r in rows],
    )
