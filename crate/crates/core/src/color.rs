//! BT.709 colour conversion on the 0..255 scale.

/// RGB to YUV. U and V are offset by 128 so all three channels share the
/// 0..255 range.
pub fn rgb_to_yuv(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    let y = 0.2126 * r + 0.7152 * g + 0.0722 * b;
    let u = (b - y) / 1.8556 + 128.0;
    let v = (r - y) / 1.5748 + 128.0;
    [y, u, v]
}

pub fn yuv_to_rgb(yuv: [f64; 3]) -> [f64; 3] {
    let [y, u, v] = yuv;
    let r = y + 1.5748 * (v - 128.0);
    let b = y + 1.8556 * (u - 128.0);
    let g = (y - 0.2126 * r - 0.0722 * b) / 0.7152;
    [r, g, b]
}

/// Converts a row-major RGB attribute array in place.
pub fn rgb_to_yuv_slice(attrs: &mut [f64]) {
    for px in attrs.chunks_exact_mut(3) {
        let o = rgb_to_yuv([px[0], px[1], px[2]]);
        px.copy_from_slice(&o);
    }
}

pub fn yuv_to_rgb_slice(attrs: &mut [f64]) {
    for px in attrs.chunks_exact_mut(3) {
        let o = yuv_to_rgb([px[0], px[1], px[2]]);
        px.copy_from_slice(&o);
    }
}

/// Rounds and clamps to a byte.
pub fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
