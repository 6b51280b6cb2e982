//! Intermediate-product dumps for inspection: label maps, boundary
//! overlays, steady masks, per-region counts, ENF tracks and spectrograms.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::detect::EnfMatrix;
use crate::enf::{EnfEstimator, IntensitySeries};
use crate::error::Result;
use crate::ingest::{encode_pgm, Frame};
use crate::slic::SuperpixelMap;
use crate::steady::{steady_counts, SteadyMask};

/// Labels as a 16-bit PGM (labels above 65535 saturate).
pub fn write_label_pgm(map: &SuperpixelMap, path: &Path) -> Result<()> {
    let codes: Vec<u16> = map.labels.iter().map(|&l| l.min(u16::MAX as u32) as u16).collect();
    std::fs::write(path, encode_pgm(map.width, map.height, 16, &codes))?;
    Ok(())
}

/// Grey frame with region boundaries drawn in red, as binary PPM.
pub fn write_boundary_overlay(frame: &Frame, map: &SuperpixelMap, path: &Path) -> Result<()> {
    let (w, h) = (map.width, map.height);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            let l = map.label(x, y);
            let edge = (x + 1 < w && map.label(x + 1, y) != l) || (y + 1 < h && map.label(x, y + 1) != l);
            if edge {
                out.extend([255, 0, 0]);
            } else {
                let g = (frame.get(x, y) * 255.0).round() as u8;
                out.extend([g, g, g]);
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Steady mask as binary PBM; steady pixels are white (bit 0).
pub fn write_mask_pbm(mask: &SteadyMask, path: &Path) -> Result<()> {
    let mut out = format!("P4\n{} {}\n", mask.width, mask.height).into_bytes();
    for row in mask.mask.chunks(mask.width) {
        for byte in row.chunks(8) {
            let mut b = 0u8;
            for (i, &steady) in byte.iter().enumerate() {
                if !steady {
                    b |= 0x80 >> i;
                }
            }
            out.push(b);
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// `label,pixels,steady_pixels` per region.
pub fn write_steady_counts_csv(map: &SuperpixelMap, mask: &SteadyMask, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "label,pixels,steady_pixels")?;
    for (l, (size, steady)) in map.region_sizes().iter().zip(steady_counts(map, mask)).enumerate() {
        writeln!(out, "{l},{size},{steady}")?;
    }
    out.flush()?;
    Ok(())
}

/// One row per hop: `t_s` followed by one column per region.
pub fn write_enf_csv(matrix: &EnfMatrix, hop_times: &[f64], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "t_s")?;
    for r in matrix.rows() {
        write!(out, ",region_{}", r.region_label)?;
    }
    writeln!(out)?;
    for (i, t) in hop_times.iter().enumerate().take(matrix.columns()) {
        write!(out, "{t}")?;
        for r in matrix.rows() {
            write!(out, ",{}", r.values[i])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SpectrogramInfo {
    rows: usize,
    cols: usize,
    first_bin_hz: f64,
    bin_width_hz: f64,
    dtype: &'static str,
}

/// In-band magnitudes as little-endian f32 (row per hop) plus a
/// `<path>.json` describing the layout.
pub fn write_spectrogram(estimator: &EnfEstimator, series: &IntensitySeries, path: &Path) -> Result<()> {
    let spec = estimator.spectrogram(series);
    let cols = spec.first().map_or(0, |r| r.len());
    let bytes: Vec<u8> = spec.iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes)?;
    let info = SpectrogramInfo {
        rows: spec.len(),
        cols,
        first_bin_hz: estimator.band_bins().0 as f64 * estimator.bin_width_hz(),
        bin_width_hz: estimator.bin_width_hz(),
        dtype: "f32le",
    };
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    std::fs::write(side, serde_json::to_string_pretty(&info)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pbm_packs_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mask = SteadyMask { width: 10, height: 2, mask: (0..20).map(|i| i % 3 != 0).collect() };
        let p = dir.path().join("m.pbm");
        write_mask_pbm(&mask, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"P4\n10 2\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 4);
        // row 0: pixels 0, 3, 6, 9 are not steady
        assert_eq!(bytes[header.len()], 0b1001_0010);
        assert_eq!(bytes[header.len() + 1], 0b0100_0000);
    }

    #[test]
    fn label_pgm_is_sixteen_bit() {
        let dir = tempfile::tempdir().unwrap();
        let map = SuperpixelMap { width: 2, height: 1, labels: vec![0, 300], region_count: 2 };
        let p = dir.path().join("l.pgm");
        write_label_pgm(&map, &p).unwrap();
        let img = crate::ingest::read_pgm(&p).unwrap();
        assert_eq!(img.bit_depth, 16);
    }
}
