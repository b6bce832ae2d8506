"""Resource-aware visual anomaly detection for edge-server deployments.

The library simulates an edge device that compresses images or CNN
features (random sampling, product quantization, 8-bit tiling + image
codec), a bandwidth-limited channel, and a server that runs a
memory-bank nearest-neighbor detector — plus the latency/payload
accounting to compare the strategies.
"""

from .binio import (
    BadMagicError,
    FormatError,
    SizeMismatchError,
    TruncatedError,
    UnsupportedVersionError,
)
from .channel import (
    ConstraintCheck,
    ConstraintViolation,
    DeviceProfile,
    LatencyReport,
    LatencyRow,
    check_constraints,
    scale_edge_time,
    total_time,
    tx_time,
)
from .codecs import (
    DeflateCodec,
    ImageCodec,
    Payload,
    RawCodec,
    SampledPatchSet,
    TilePlan,
    WebpCodec,
    available_codecs,
    get_codec,
    image_decode,
    image_encode,
    measure_payload,
    read_payload,
    read_payload_stream,
    rs_encode,
    rs_payload,
    tile_pack,
    tile_unpack,
)
from .data_io import (
    DatasetIndex,
    DatasetLayoutError,
    SyntheticDataset,
    generate_synthetic,
    load_feature_dataset,
    read_feature_file,
    scan_dataset,
    write_feature_dataset,
    write_feature_file,
)
from .detector import (
    AnomalyResult,
    MemoryBank,
    build_memory_bank,
    coreset_select,
    detect,
    make_anomaly_map,
    read_memory_bank,
    score_patches,
)
from .metrics import (
    CategoryMetrics,
    MetricReport,
    delta_percent,
    pixel_f1_best,
    roc_auc,
)
from .model import (
    AlignmentError,
    FeatureStack,
    FeatureTensor,
    ImageSample,
    PatchFeature,
    PatchGrid,
    build_patch_grid,
    flatten_embedding,
)
from .pipeline import (
    RunConfig,
    Scenario,
    SuiteResult,
    default_scenarios,
    replay_published_tables,
    run_scenario,
    run_suite,
)
from .pq import (
    Codebook,
    PqCodes,
    pq_decode,
    pq_encode,
    pq_payload,
    pq_train,
    read_codebook,
    serialize_codebook,
)

__version__ = "0.1.0"
