use crate::{Error, Result};

/// Replicated input extent along one axis: `(tiles - 1) * max(filter - strides, 0)`.
pub fn replicated_extent(tiles: u64, filter: u64, strides: u64) -> u64 {
    tiles.saturating_sub(1) * filter.saturating_sub(strides)
}

/// Per-channel overlap for a known tile grid. Strip intersections are counted once
/// per strip, i.e. twice in total.
pub fn overlap_for_grid(
    tiles_h: u64,
    tiles_w: u64,
    channel_h: u64,
    channel_w: u64,
    filter_h: u64,
    filter_w: u64,
    strides: u64,
) -> u64 {
    replicated_extent(tiles_w, filter_w, strides) * channel_h
        + replicated_extent(tiles_h, filter_h, strides) * channel_w
}

/// Overlapping input elements per channel when a `channel_h x channel_w` plane is cut
/// into `tile_h x tile_w` tiles.
pub fn overlap(
    channel_h: u64,
    channel_w: u64,
    tile_h: u64,
    tile_w: u64,
    filter_h: u64,
    filter_w: u64,
    strides: u64,
) -> Result<u64> {
    let all = [
        channel_h, channel_w, tile_h, tile_w, filter_h, filter_w, strides,
    ];
    if all.contains(&0) {
        return Err(Error::InvalidArgument(
            "overlap arguments must be >= 1".into(),
        ));
    }
    if tile_h > channel_h || tile_w > channel_w {
        return Err(Error::InvalidArgument(format!(
            "tile {tile_h}x{tile_w} exceeds channel {channel_h}x{channel_w}"
        )));
    }
    Ok(overlap_for_grid(
        channel_h.div_ceil(tile_h),
        channel_w.div_ceil(tile_w),
        channel_h,
        channel_w,
        filter_h,
        filter_w,
        strides,
    ))
}
