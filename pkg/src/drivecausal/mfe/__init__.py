from .extractor import (PATCH, SEGMENTS, FeatureBundle, MultiLevelExtractor, MultiLevelFusion,
                        TemporalAttentionBlock, channel_linear, check_clip, extract_bundle,
                        frame_major, fuse_multilevel, global_shape, local_shape, segment_clips)

__all__ = [
    "PATCH", "SEGMENTS", "FeatureBundle", "MultiLevelExtractor", "MultiLevelFusion",
    "TemporalAttentionBlock", "channel_linear", "check_clip", "extract_bundle", "frame_major",
    "fuse_multilevel", "global_shape", "local_shape", "segment_clips",
]
