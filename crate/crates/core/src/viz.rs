//! Binary PGM/PPM renderings of activation maps and source images.

use std::fs;
use std::io;
use std::path::Path;

use crate::growth::ActivationMap;
use crate::numerics::Tensor3;

/// Hue step between consecutive kernels, in degrees.
pub const GOLDEN_ANGLE_DEG: f64 = 137.507_764_050_037_85;

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn pnm(magic: &str, width: usize, height: usize, body: &[u8]) -> Vec<u8> {
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(body);
    out
}

/// Full-saturation, full-value RGB for kernel `i`.
pub fn kernel_color(i: usize) -> [u8; 3] {
    let hue = (i as f64 * GOLDEN_ANGLE_DEG).rem_euclid(360.0);
    let h = hue / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [to_byte(r), to_byte(g), to_byte(b)]
}

/// Grayscale P5 of the max response at each position, scaled to 0–255.
pub fn activity_pgm(map: &ActivationMap) -> Vec<u8> {
    let body: Vec<u8> = map.max_response.iter().map(|&v| to_byte(v)).collect();
    pnm("P5", map.width, map.height, &body)
}

/// Colour P6 of the dominant kernel at each active position; inactive
/// positions are black.
pub fn dominant_kernel_ppm(map: &ActivationMap) -> Vec<u8> {
    let body: Vec<u8> = map
        .active
        .iter()
        .zip(&map.argmax_kernel)
        .flat_map(|(&on, &k)| if on { kernel_color(k) } else { [0, 0, 0] })
        .collect();
    pnm("P6", map.width, map.height, &body)
}

/// P5 for one channel, P6 for three. Other channel counts render the first
/// channel as grayscale.
pub fn image_pnm(image: &Tensor3) -> Vec<u8> {
    let (h, w, c) = image.shape();
    if c == 3 {
        let body: Vec<u8> = image.data().iter().map(|&v| to_byte(v)).collect();
        pnm("P6", w, h, &body)
    } else {
        let body: Vec<u8> = image.data().iter().step_by(c).map(|&v| to_byte(v)).collect();
        pnm("P5", w, h, &body)
    }
}

pub fn write(path: impl AsRef<Path>, bytes: &[u8]) -> io::Result<()> {
    fs::write(path, bytes)
}
