use alloc::vec;
use alloc::vec::Vec;

use super::MediaError;

pub const VIDEO_CLOCK_RATE: u32 = 90_000;

/// Studio-range black as (Y, U, V).
pub const BLACK: (u8, u8, u8) = (16, 128, 128);

/// Planar 8-bit 4:2:0 picture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoFrame {
    pub width: u32,
    pub height: u32,
    pub y: Vec<u8>,
    pub u: Vec<u8>,
    pub v: Vec<u8>,
    /// 90 kHz media clock.
    pub timestamp: u32,
}

pub(super) fn check_dims(width: u32, height: u32) -> Result<(), MediaError> {
    if width == 0 || height == 0 || !width.is_multiple_of(2) || !height.is_multiple_of(2) {
        return Err(MediaError::BadDimensions { width, height });
    }
    Ok(())
}

impl VideoFrame {
    pub fn solid(
        width: u32,
        height: u32,
        (y, u, v): (u8, u8, u8),
        timestamp: u32,
    ) -> Result<Self, MediaError> {
        check_dims(width, height)?;
        let luma = (width * height) as usize;
        Ok(Self {
            width,
            height,
            y: vec![y; luma],
            u: vec![u; luma / 4],
            v: vec![v; luma / 4],
            timestamp,
        })
    }

    pub fn black(width: u32, height: u32, timestamp: u32) -> Result<Self, MediaError> {
        Self::solid(width, height, BLACK, timestamp)
    }

    /// Encoded size of a frame with these dimensions.
    pub fn byte_len(width: u32, height: u32) -> usize {
        let luma = width as usize * height as usize;
        luma + luma / 2
    }

    pub fn pixel(&self, x: u32, y: u32) -> (u8, u8, u8) {
        let c = ((y / 2) * (self.width / 2) + x / 2) as usize;
        (self.y[(y * self.width + x) as usize], self.u[c], self.v[c])
    }
}

fn scale_plane(src: &[u8], sw: u32, sh: u32, dw: u32, dh: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity((dw * dh) as usize);
    for dy in 0..dh {
        let sy = (u64::from(dy) * u64::from(sh) / u64::from(dh)) as usize;
        let row = &src[sy * sw as usize..(sy + 1) * sw as usize];
        out.extend((0..dw).map(|dx| row[(u64::from(dx) * u64::from(sw) / u64::from(dw)) as usize]));
    }
    out
}

/// Nearest-neighbor resize: destination index `i` samples source index
/// `floor(i * src / dst)` on each axis of each plane.
pub fn scale_frame(frame: &VideoFrame, out_w: u32, out_h: u32) -> Result<VideoFrame, MediaError> {
    check_dims(out_w, out_h)?;
    if (out_w, out_h) == (frame.width, frame.height) {
        return Ok(frame.clone());
    }
    let (sw, sh) = (frame.width, frame.height);
    Ok(VideoFrame {
        width: out_w,
        height: out_h,
        y: scale_plane(&frame.y, sw, sh, out_w, out_h),
        u: scale_plane(&frame.u, sw / 2, sh / 2, out_w / 2, out_h / 2),
        v: scale_plane(&frame.v, sw / 2, sh / 2, out_w / 2, out_h / 2),
        timestamp: frame.timestamp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn intersects(&self, o: &Rect) -> bool {
        self.x < o.x + o.width
            && o.x < self.x + self.width
            && self.y < o.y + o.height
            && o.y < self.y + self.height
    }
}

/// Cells of a row-major `ceil(sqrt(n))`-sided grid. Cell sizes are rounded
/// down to even so chroma stays aligned; any remainder strip stays black.
/// Returns no cells if the canvas is too small to give each one 2x2 pixels.
pub fn grid_cells(n: usize, canvas_w: u32, canvas_h: u32) -> Vec<Rect> {
    if n == 0 {
        return Vec::new();
    }
    let mut side = 1u32;
    while (side as usize) * (side as usize) < n {
        side += 1;
    }
    let cw = (canvas_w / side) & !1;
    let ch = (canvas_h / side) & !1;
    if cw == 0 || ch == 0 {
        return Vec::new();
    }
    (0..n as u32)
        .map(|i| Rect {
            x: (i % side) * cw,
            y: (i / side) * ch,
            width: cw,
            height: ch,
        })
        .collect()
}

fn blit_plane(dst: &mut [u8], dst_w: u32, src: &[u8], src_w: u32, src_h: u32, x: u32, y: u32) {
    for row in 0..src_h {
        let d = ((y + row) * dst_w + x) as usize;
        let s = (row * src_w) as usize;
        dst[d..d + src_w as usize].copy_from_slice(&src[s..s + src_w as usize]);
    }
}

/// Tiles the inputs, in the order given, over a black canvas.
pub fn compose_grid(
    inputs: &[&VideoFrame],
    canvas_w: u32,
    canvas_h: u32,
) -> Result<VideoFrame, MediaError> {
    let timestamp = inputs.iter().map(|f| f.timestamp).max().unwrap_or(0);
    let mut canvas = VideoFrame::black(canvas_w, canvas_h, timestamp)?;
    for (frame, cell) in inputs
        .iter()
        .zip(grid_cells(inputs.len(), canvas_w, canvas_h))
    {
        let scaled = scale_frame(frame, cell.width, cell.height)?;
        blit_plane(
            &mut canvas.y,
            canvas_w,
            &scaled.y,
            cell.width,
            cell.height,
            cell.x,
            cell.y,
        );
        let (cx, cy, cw, ch) = (cell.x / 2, cell.y / 2, cell.width / 2, cell.height / 2);
        blit_plane(&mut canvas.u, canvas_w / 2, &scaled.u, cw, ch, cx, cy);
        blit_plane(&mut canvas.v, canvas_w / 2, &scaled.v, cw, ch, cx, cy);
    }
    Ok(canvas)
}
