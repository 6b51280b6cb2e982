use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{FrameSequence, LoadOptions, VideoMeta};
use crate::error::{Error, Result};

/// A decoded P5 image: width, height, bit depth and integer codes.
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub codes: Vec<u16>,
}

/// Splits the next whitespace-delimited header token, skipping `#` comments.
fn next_token<'a>(buf: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < buf.len() && buf[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < buf.len() && buf[*pos] == b'#' {
            while *pos < buf.len() && buf[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < buf.len() && !buf[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &buf[start..*pos])
}

fn parse_num(tok: Option<&[u8]>, what: &str, path: &Path) -> Result<usize> {
    tok.and_then(|t| std::str::from_utf8(t).ok())
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::MalformedHeader(format!("{}: bad {what}", path.display())))
}

pub fn read_pgm(path: &Path) -> Result<PgmImage> {
    let buf = fs::read(path)?;
    let mut pos = 0;
    if next_token(&buf, &mut pos) != Some(b"P5".as_slice()) {
        return Err(Error::MalformedHeader(format!("{}: not a binary PGM (P5)", path.display())));
    }
    let width = parse_num(next_token(&buf, &mut pos), "width", path)?;
    let height = parse_num(next_token(&buf, &mut pos), "height", path)?;
    let maxval = parse_num(next_token(&buf, &mut pos), "maxval", path)?;
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("{}: zero dimension", path.display())));
    }
    if maxval == 0 || maxval > 65535 || !(maxval + 1).is_power_of_two() {
        return Err(Error::MalformedHeader(format!("{}: unsupported maxval {maxval}", path.display())));
    }
    let bit_depth = (maxval + 1).trailing_zeros() as u8;
    let px = width * height;
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let raster = buf.get(pos..).unwrap_or(&[]);
    if raster.len() < px * bytes_per {
        return Err(Error::TruncatedStream(format!(
            "{}: {} raster bytes, expected {}",
            path.display(),
            raster.len(),
            px * bytes_per
        )));
    }
    let codes = if bytes_per == 1 {
        raster[..px].iter().map(|&b| b as u16).collect()
    } else {
        raster[..2 * px].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    Ok(PgmImage { width, height, bit_depth, codes })
}

fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    Ok(files)
}

pub(super) fn read_pgm_sequence(dir: &Path, opts: &LoadOptions) -> Result<FrameSequence> {
    let frame_rate = opts.frame_rate;
    let mut files = pgm_files(dir)?;
    if files.is_empty() {
        return Err(Error::EmptySequence);
    }
    if let Some(m) = opts.frame_limit(frame_rate) {
        files.truncate(m.max(1));
    }
    let first = read_pgm(&files[0])?;
    let (width, height, bit_depth) = (first.width, first.height, first.bit_depth);
    let meta = VideoMeta { width, height, frame_rate, frame_count: files.len(), bit_depth };
    let mut codes = Vec::with_capacity(width * height * files.len());
    codes.extend_from_slice(&first.codes);
    for f in &files[1..] {
        let img = read_pgm(f)?;
        if (img.width, img.height, img.bit_depth) != (width, height, bit_depth) {
            return Err(Error::MalformedHeader(format!(
                "{} is {}x{} {}-bit, sequence is {width}x{height} {bit_depth}-bit",
                f.display(),
                img.width,
                img.height,
                img.bit_depth
            )));
        }
        codes.extend_from_slice(&img.codes);
    }
    if bit_depth <= 8 {
        FrameSequence::from_u8(meta, codes.into_iter().map(|c| c as u8).collect())
    } else {
        FrameSequence::from_u16(meta, codes)
    }
}

pub(crate) fn encode_pgm(width: usize, height: usize, bit_depth: u8, codes: &[u16]) -> Vec<u8> {
    let maxval = (1u32 << bit_depth) - 1;
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        out.extend(codes.iter().flat_map(|c| c.to_be_bytes()));
    } else {
        out.extend(codes.iter().map(|&c| c as u8));
    }
    out
}

/// Writes `frame_000000.pgm`, `frame_000001.pgm`, ... into `dir`. Float
/// sequences are quantized to 16 bits.
pub fn write_pgm_sequence(seq: &FrameSequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = seq.meta();
    let depth = if meta.bit_depth == 32 { 16 } else { meta.bit_depth };
    for n in 0..seq.len() {
        let codes = seq.codes_at_depth(n, depth);
        let mut f = fs::File::create(dir.join(format!("frame_{n:06}.pgm")))?;
        f.write_all(&encode_pgm(meta.width, meta.height, depth, &codes))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_frame_sequence, InputFormat};

    #[test]
    fn constant_three_frame_sequence() {
        let dir = tempfile::tempdir().unwrap();
        for n in 0..3 {
            fs::write(dir.path().join(format!("f{n}.pgm")), encode_pgm(2, 2, 8, &[128; 4])).unwrap();
        }
        let seq = load_frame_sequence(dir.path(), InputFormat::PgmSequence).unwrap();
        assert_eq!(seq.meta().frame_count, 3);
        for f in seq.frames() {
            assert!(f.luma.iter().all(|&v| v == 128.0 / 255.0));
        }
    }

    #[test]
    fn header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = b"P5\n# made by hand\n3 1\n# depth\n255\n".to_vec();
        bytes.extend([0u8, 255, 51]);
        let p = dir.path().join("a.pgm");
        fs::write(&p, bytes).unwrap();
        let img = read_pgm(&p).unwrap();
        assert_eq!((img.width, img.height, img.bit_depth), (3, 1, 8));
        assert_eq!(img.codes, vec![0, 255, 51]);
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.pgm"), encode_pgm(2, 2, 8, &[0; 4])).unwrap();
        fs::write(dir.path().join("b.pgm"), encode_pgm(3, 2, 8, &[0; 6])).unwrap();
        let err = load_frame_sequence(dir.path(), InputFormat::PgmSequence).unwrap_err();
        assert!(matches!(err, Error::MalformedHeader(_)));
    }

    #[test]
    fn short_raster_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = encode_pgm(4, 4, 8, &[0; 16]);
        bytes.truncate(bytes.len() - 3);
        fs::write(dir.path().join("a.pgm"), bytes).unwrap();
        let err = load_frame_sequence(dir.path(), InputFormat::PgmSequence).unwrap_err();
        assert!(matches!(err, Error::TruncatedStream(_)));
    }

    #[test]
    fn sixteen_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let codes: Vec<u16> = (0..6).map(|i| i * 10_000).collect();
        fs::write(dir.path().join("a.pgm"), encode_pgm(3, 2, 16, &codes)).unwrap();
        let seq = load_frame_sequence(dir.path(), InputFormat::PgmSequence).unwrap();
        assert_eq!(seq.meta().bit_depth, 16);
        assert!((seq.sample(0, 2, 1) - 50_000.0 / 65535.0).abs() < 1e-7);
    }
}
