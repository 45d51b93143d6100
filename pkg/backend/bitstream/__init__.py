from .container import (
    PAYLOAD_KEYS,
    CodedBitstream,
    FrameRecord,
    StreamHeader,
    read_container,
    write_container,
)
from .range_coder import RangeDecoder, RangeEncoder, range_decode, range_encode
from .tables import (
    CdfTable,
    factorized_tables,
    gaussian_scale_table,
    gaussian_tables,
    quantize_cdf,
    scale_indexes,
    table_from_pmf,
)

__all__ = [
    "PAYLOAD_KEYS",
    "CdfTable",
    "CodedBitstream",
    "FrameRecord",
    "RangeDecoder",
    "RangeEncoder",
    "StreamHeader",
    "factorized_tables",
    "gaussian_scale_table",
    "gaussian_tables",
    "quantize_cdf",
    "range_decode",
    "range_encode",
    "read_container",
    "scale_indexes",
    "table_from_pmf",
    "write_container",
]
