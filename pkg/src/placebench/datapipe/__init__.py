"""Training-data pipeline decision logic over pluggable model clients."""

from .clients import (
    ClientError, ClientUnavailable, MockClients, ModelClients, ModelServer, SocketClients, make_clients,
)
from .logic import (
    box_iou, build_record, pick_best_mask, region_iou, sam_prompt, select_inpaint_targets, verify_inpainting,
)
from .pipeline import (
    PipelineConfig, PipelineResult, PipelineStats, RecordStore, fixture_image, read_image_manifest,
    run_pipeline, write_fixture_set,
)
from .types import Detection, PipelineRecord

__all__ = [
    "ClientError", "ClientUnavailable", "MockClients", "ModelClients", "ModelServer", "SocketClients",
    "make_clients", "box_iou", "build_record", "pick_best_mask", "region_iou", "sam_prompt",
    "select_inpaint_targets", "verify_inpainting", "PipelineConfig", "PipelineResult", "PipelineStats",
    "RecordStore", "fixture_image", "read_image_manifest", "run_pipeline", "write_fixture_set",
    "Detection", "PipelineRecord",
]
