//! Headerless planar luma. Geometry lives in a sidecar `<file>.desc`:
//!
//! ```text
//! width=640
//! height=480
//! fps_num=30000
//! fps_den=1001
//! bit_depth=8
//! frame_count=3597
//! ```
//!
//! Samples deeper than 8 bits are little-endian u16.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use super::{FrameRate, FrameSequence, LoadOptions, VideoMeta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawDescriptor {
    pub width: usize,
    pub height: usize,
    pub fps_num: u32,
    pub fps_den: u32,
    pub bit_depth: u8,
    pub frame_count: usize,
}

impl RawDescriptor {
    pub fn sidecar_path(raw: &Path) -> PathBuf {
        let mut s = raw.as_os_str().to_owned();
        s.push(".desc");
        PathBuf::from(s)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv: HashMap<&str, &str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim(), v.trim()))
            .collect();
        fn get<T: std::str::FromStr>(kv: &HashMap<&str, &str>, key: &str) -> Result<T> {
            kv.get(key)
                .ok_or_else(|| Error::MalformedHeader(format!("descriptor lacks {key}")))?
                .parse()
                .map_err(|_| Error::MalformedHeader(format!("descriptor field {key} is not a number")))
        }
        Ok(RawDescriptor {
            width: get(&kv, "width")?,
            height: get(&kv, "height")?,
            fps_num: get(&kv, "fps_num")?,
            fps_den: get(&kv, "fps_den")?,
            bit_depth: get(&kv, "bit_depth")?,
            frame_count: get(&kv, "frame_count")?,
        })
    }

    pub fn render(&self) -> String {
        format!(
            "width={}\nheight={}\nfps_num={}\nfps_den={}\nbit_depth={}\nframe_count={}\n",
            self.width, self.height, self.fps_num, self.fps_den, self.bit_depth, self.frame_count
        )
    }

    fn meta(&self) -> Result<VideoMeta> {
        let frame_rate = FrameRate::new(self.fps_num, self.fps_den).map_err(|e| Error::MalformedHeader(e.to_string()))?;
        let meta = VideoMeta {
            width: self.width,
            height: self.height,
            frame_rate,
            frame_count: self.frame_count,
            bit_depth: self.bit_depth,
        };
        if meta.bit_depth > 16 {
            return Err(Error::MalformedHeader(format!("bit depth {}", meta.bit_depth)));
        }
        meta.validate()?;
        Ok(meta)
    }
}

pub(super) fn read_raw_planar(path: &Path, opts: &LoadOptions) -> Result<FrameSequence> {
    let side = RawDescriptor::sidecar_path(path);
    if !side.exists() {
        return Err(Error::FileNotFound(side));
    }
    let desc = RawDescriptor::parse(&fs::read_to_string(&side)?)?;
    let mut meta = desc.meta()?;
    let bytes_per = if meta.bit_depth > 8 { 2 } else { 1 };
    let len = fs::metadata(path)?.len() as usize;
    let want = meta.pixels() * meta.frame_count * bytes_per;
    if len != want {
        return Err(Error::TruncatedStream(format!("{} holds {len} bytes, descriptor implies {want}", path.display())));
    }
    let keep = opts.frame_limit(meta.frame_rate).map_or(meta.frame_count, |m| m.clamp(1, meta.frame_count));
    meta.frame_count = keep;
    let mut data = vec![0u8; meta.pixels() * keep * bytes_per];
    fs::File::open(path)?.read_exact(&mut data)?;
    if bytes_per == 1 {
        FrameSequence::from_u8(meta, data.to_vec())
    } else {
        FrameSequence::from_u16(meta, data.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
    }
}

/// Writes samples to `path` and the descriptor to `<path>.desc`. Float
/// sequences are quantized to 16 bits.
pub fn write_raw_planar(seq: &FrameSequence, path: &Path) -> Result<()> {
    let meta = seq.meta();
    let depth = if meta.bit_depth == 32 { 16 } else { meta.bit_depth };
    let mut bytes = Vec::with_capacity(meta.pixels() * seq.len() * if depth > 8 { 2 } else { 1 });
    for n in 0..seq.len() {
        let codes = seq.codes_at_depth(n, depth);
        if depth > 8 {
            bytes.extend(codes.iter().flat_map(|c| c.to_le_bytes()));
        } else {
            bytes.extend(codes.iter().map(|&c| c as u8));
        }
    }
    fs::write(path, bytes)?;
    let desc = RawDescriptor {
        width: meta.width,
        height: meta.height,
        fps_num: meta.frame_rate.num,
        fps_den: meta.frame_rate.den,
        bit_depth: depth,
        frame_count: meta.frame_count,
    };
    fs::write(RawDescriptor::sidecar_path(path), desc.render())?;
    Ok(())
}
