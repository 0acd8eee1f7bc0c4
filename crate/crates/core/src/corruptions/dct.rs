//! Intra-frame 8x8 block-DCT codec with baseline JPEG quantisation tables.

const LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55, 14, 13, 16, 24, 40, 57, 69, 56, 14, 17, 22, 29,
    51, 87, 80, 62, 18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104, 113, 92, 49, 64, 78, 87, 103, 121,
    120, 101, 72, 92, 95, 98, 112, 100, 103, 99,
];

const CHROMA_TABLE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// IJG quality scaling of a base table, entries clamped to `[1, 255]`.
pub fn quant_table(base: &[u16; 64], quality: u32) -> [f64; 64] {
    let q = quality.clamp(1, 100);
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    std::array::from_fn(|i| ((base[i] as u32 * scale + 50) / 100).clamp(1, 255) as f64)
}

fn basis() -> [[f64; 8]; 8] {
    std::array::from_fn(|u| {
        let alpha = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        std::array::from_fn(|x| alpha * (((2 * x + 1) * u) as f64 * std::f64::consts::PI / 16.0).cos())
    })
}

/// Quantises and reconstructs one level-shifted 8x8 block in place.
fn code_block(block: &mut [f64; 64], table: &[f64; 64], c: &[[f64; 8]; 8]) {
    let mut tmp = [0.0; 64];
    let mut coef = [0.0; 64];
    for u in 0..8 {
        for y in 0..8 {
            tmp[u * 8 + y] = (0..8).map(|x| c[u][x] * block[y * 8 + x]).sum();
        }
    }
    for v in 0..8 {
        for u in 0..8 {
            coef[v * 8 + u] = (0..8).map(|y| c[v][y] * tmp[u * 8 + y]).sum();
        }
    }
    for (f, q) in coef.iter_mut().zip(table) {
        *f = (*f / q).round() * q;
    }
    for v in 0..8 {
        for x in 0..8 {
            tmp[v * 8 + x] = (0..8).map(|u| c[u][x] * coef[v * 8 + u]).sum();
        }
    }
    for y in 0..8 {
        for x in 0..8 {
            block[y * 8 + x] = (0..8).map(|v| c[v][y] * tmp[v * 8 + x]).sum();
        }
    }
}

/// Runs one plane through the codec; partial edge blocks are padded by edge replication.
pub fn code_plane(plane: &mut [f64], w: usize, h: usize, table: &[f64; 64]) {
    let c = basis();
    let mut block = [0.0; 64];
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            for y in 0..8 {
                for x in 0..8 {
                    block[y * 8 + x] = plane[(by + y).min(h - 1) * w + (bx + x).min(w - 1)] - 128.0;
                }
            }
            code_block(&mut block, table, &c);
            for y in 0..8.min(h - by) {
                for x in 0..8.min(w - bx) {
                    plane[(by + y) * w + bx + x] = block[y * 8 + x] + 128.0;
                }
            }
        }
    }
}

/// Compresses an interleaved RGB image through YCbCr planes at the given quality.
pub fn code_rgb(rgb: &[f32], w: usize, h: usize, quality: u32) -> Vec<f32> {
    let n = w * h;
    let (mut y, mut cb, mut cr) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let (r, g, b) = (rgb[3 * i] as f64, rgb[3 * i + 1] as f64, rgb[3 * i + 2] as f64);
        y[i] = 0.299 * r + 0.587 * g + 0.114 * b;
        cb[i] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
        cr[i] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
    }
    code_plane(&mut y, w, h, &quant_table(&LUMA_TABLE, quality));
    let chroma = quant_table(&CHROMA_TABLE, quality);
    code_plane(&mut cb, w, h, &chroma);
    code_plane(&mut cr, w, h, &chroma);
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        let (l, u, v) = (y[i], cb[i] - 128.0, cr[i] - 128.0);
        out.push((l + 1.402 * v) as f32);
        out.push((l - 0.344136 * u - 0.714136 * v) as f32);
        out.push((l + 1.772 * u) as f32);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quality_scaling_matches_ijg() {
        assert_eq!(quant_table(&LUMA_TABLE, 50)[0], 16.0);
        assert_eq!(quant_table(&LUMA_TABLE, 10)[0], 80.0);
        assert_eq!(quant_table(&LUMA_TABLE, 100)[63], 1.0);
    }

    #[test]
    fn flat_blocks_survive_and_detail_is_lost() {
        let mut flat = vec![77.0; 64];
        code_plane(&mut flat, 8, 8, &quant_table(&LUMA_TABLE, 10));
        // DC of -51 * 8 quantised by step 80 gives -400, i.e. level 78 everywhere.
        assert!(flat.iter().all(|v| (v - 78.0).abs() < 1e-9));
        let texture: Vec<f64> = (0..256).map(|i| ((i * 73 + 11) % 97) as f64 + 80.0).collect();
        let error = |quality| {
            let mut v = texture.clone();
            code_plane(&mut v, 16, 16, &quant_table(&LUMA_TABLE, quality));
            v.iter().zip(&texture).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        assert!(error(10) > error(50));
        assert!(error(50) > 0.0);
    }

    #[test]
    fn basis_is_orthonormal() {
        let c = basis();
        for a in 0..8 {
            for b in 0..8 {
                let d: f64 = (0..8).map(|x| c[a][x] * c[b][x]).sum();
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }
}
