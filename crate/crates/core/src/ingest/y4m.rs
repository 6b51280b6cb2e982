use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FrameRate, FrameSequence, LoadOptions, VideoMeta};
use crate::error::{Error, Result};

struct Header {
    width: usize,
    height: usize,
    frame_rate: FrameRate,
    bit_depth: u8,
    /// Bytes following the luma plane in every frame.
    chroma_bytes: usize,
}

fn parse_header(line: &str) -> Result<Header> {
    let mut tags = line.split_ascii_whitespace();
    if tags.next() != Some("YUV4MPEG2") {
        return Err(Error::MalformedHeader("missing YUV4MPEG2 signature".into()));
    }
    let (mut w, mut h, mut fps, mut colour) = (None, None, None, "420jpeg");
    for tag in tags {
        let (k, v) = tag.split_at(1);
        match k {
            "W" => w = v.parse::<usize>().ok(),
            "H" => h = v.parse::<usize>().ok(),
            "F" => fps = Some(v.parse::<FrameRate>().map_err(|_| Error::MalformedHeader(format!("frame rate {v:?}")))?),
            "C" => colour = v,
            _ => {}
        }
    }
    let (width, height) = match (w, h) {
        (Some(w), Some(h)) if w > 0 && h > 0 => (w, h),
        _ => return Err(Error::MalformedHeader("missing or zero W/H".into())),
    };
    let frame_rate = fps.ok_or_else(|| Error::MalformedHeader("missing F tag".into()))?;

    let (layout, bit_depth) = match colour.split_once('p') {
        Some((l, d)) if !l.is_empty() && d.chars().all(|c| c.is_ascii_digit()) && !d.is_empty() => {
            (l, d.parse::<u8>().map_err(|_| Error::MalformedHeader(format!("colour space {colour}")))?)
        }
        _ => (colour, 8),
    };
    let (layout, bit_depth) = match layout {
        "mono16" => ("mono", 16),
        l => (l, bit_depth),
    };
    if !(1..=16).contains(&bit_depth) {
        return Err(Error::MalformedHeader(format!("colour space {colour}")));
    }
    let (cw, ch) = ((width + 1) / 2, (height + 1) / 2);
    let chroma_samples = match layout {
        "mono" => 0,
        l if l.starts_with("420") => 2 * cw * ch,
        "422" => 2 * cw * height,
        "444" => 2 * width * height,
        "444alpha" => 3 * width * height,
        _ => return Err(Error::MalformedHeader(format!("unsupported colour space {colour}"))),
    };
    let bytes_per = if bit_depth > 8 { 2 } else { 1 };
    Ok(Header { width, height, frame_rate, bit_depth, chroma_bytes: chroma_samples * bytes_per })
}

pub(super) fn read_y4m(path: &Path, opts: &LoadOptions) -> Result<FrameSequence> {
    let mut r = BufReader::with_capacity(1 << 20, File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if !line.ends_with('\n') {
        return Err(Error::MalformedHeader("header line not terminated".into()));
    }
    let hdr = parse_header(line.trim_end())?;
    let max_frames = opts.frame_limit(hdr.frame_rate);
    let px = hdr.width * hdr.height;
    let wide = hdr.bit_depth > 8;
    let luma_bytes = px * if wide { 2 } else { 1 };

    let mut luma8 = Vec::new();
    let mut luma16 = Vec::new();
    let mut plane = vec![0u8; luma_bytes];
    let mut skip = vec![0u8; hdr.chroma_bytes];
    let mut frames = 0usize;
    loop {
        if max_frames.is_some_and(|m| frames >= m) {
            break;
        }
        line.clear();
        if r.read_line(&mut line)? == 0 {
            break;
        }
        if !line.starts_with("FRAME") {
            return Err(Error::MalformedHeader(format!("frame {frames}: expected FRAME marker")));
        }
        let truncated = |_| Error::TruncatedStream(format!("frame {frames} is incomplete"));
        r.read_exact(&mut plane).map_err(truncated)?;
        r.read_exact(&mut skip).map_err(truncated)?;
        if wide {
            luma16.extend(plane.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])));
        } else {
            luma8.extend_from_slice(&plane);
        }
        frames += 1;
    }
    if frames == 0 {
        return Err(Error::EmptySequence);
    }
    let meta = VideoMeta {
        width: hdr.width,
        height: hdr.height,
        frame_rate: hdr.frame_rate,
        frame_count: frames,
        bit_depth: hdr.bit_depth,
    };
    if wide {
        FrameSequence::from_u16(meta, luma16)
    } else {
        FrameSequence::from_u8(meta, luma8)
    }
}

/// Writes a monochrome Y4M stream (`Cmono`, or `Cmono16` for deeper or
/// float sequences).
pub fn write_y4m(seq: &FrameSequence, path: &Path) -> Result<()> {
    let meta = seq.meta();
    let depth = if meta.bit_depth <= 8 { 8 } else { 16 };
    let colour = if depth == 8 { "mono" } else { "mono16" };
    let mut w = BufWriter::with_capacity(1 << 20, File::create(path)?);
    writeln!(w, "YUV4MPEG2 W{} H{} F{}:{} Ip A1:1 C{colour}", meta.width, meta.height, meta.frame_rate.num, meta.frame_rate.den)?;
    for n in 0..seq.len() {
        w.write_all(b"FRAME\n")?;
        let codes = seq.codes_at_depth(n, depth);
        if depth == 8 {
            w.write_all(&codes.iter().map(|&c| c as u8).collect::<Vec<_>>())?;
        } else {
            w.write_all(&codes.iter().flat_map(|c| c.to_le_bytes()).collect::<Vec<_>>())?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_frame_sequence, InputFormat};

    #[test]
    fn header_passthrough() {
        let h = parse_header("YUV4MPEG2 W640 H480 F30000:1001 Ip A1:1 C420jpeg").unwrap();
        assert_eq!((h.width, h.height), (640, 480));
        assert_eq!(h.frame_rate, FrameRate::NTSC);
        assert!((h.frame_rate.hz() - 29.97).abs() < 1e-3);
        assert_eq!(h.chroma_bytes, 2 * 320 * 240);
    }

    #[test]
    fn colour_space_variants() {
        assert_eq!(parse_header("YUV4MPEG2 W4 H2 F25:1 C444").unwrap().chroma_bytes, 16);
        assert_eq!(parse_header("YUV4MPEG2 W4 H2 F25:1 Cmono").unwrap().chroma_bytes, 0);
        let p10 = parse_header("YUV4MPEG2 W4 H2 F25:1 C420p10").unwrap();
        assert_eq!((p10.bit_depth, p10.chroma_bytes), (10, 8));
        assert!(parse_header("YUV4MPEG2 W4 H2 F25:1 Cfoo").is_err());
        assert!(parse_header("YUV4MPEG2 W4 F25:1").is_err());
        assert!(parse_header("YUV4MPEG2 W4 H2").is_err());
    }

    #[test]
    fn reads_420_and_keeps_luma_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.y4m");
        let mut bytes = b"YUV4MPEG2 W2 H2 F30000:1001 C420jpeg\n".to_vec();
        for n in 0..3u8 {
            bytes.extend(b"FRAME\n");
            bytes.extend([n, n, n, n]);
            bytes.extend([200, 50]);
        }
        std::fs::write(&p, &bytes).unwrap();
        let seq = load_frame_sequence(&p, InputFormat::Y4m).unwrap();
        assert_eq!(seq.len(), 3);
        assert_eq!(seq.frame(2).luma, vec![2.0 / 255.0; 4]);

        bytes.truncate(bytes.len() - 1);
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_frame_sequence(&p, InputFormat::Y4m), Err(Error::TruncatedStream(_))));
    }

    #[test]
    fn write_then_read_round_trip() {
        let meta = VideoMeta { width: 3, height: 2, frame_rate: FrameRate::NTSC, frame_count: 2, bit_depth: 8 };
        let seq = FrameSequence::from_u8(meta, (0..12).map(|i| i * 20).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.y4m");
        write_y4m(&seq, &p).unwrap();
        assert_eq!(load_frame_sequence(&p, InputFormat::Y4m).unwrap(), seq);
    }
}
