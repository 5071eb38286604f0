//! On-disk descriptor containers.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! "FILD" | version u16 | D u32 | d u32
//! per frame: timestamp f64 | global f32×D | count u32 | count × (x f32 | y f32 | local f32×d)
//! ```
//!
//! Frames run until end of file. The text variant is line oriented:
//!
//! ```text
//! dims <D> <d>
//! frame <timestamp> <g1> … <gD>
//! local <x> <y> <v1> … <vd>
//! ```
//!
//! `local` lines attach to the preceding `frame`. Blank lines and lines
//! starting with `#` are ignored.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FrameError, FrameRecord, Keypoint, LocalDescriptor};

pub const MAGIC: &[u8; 4] = b"FILD";
pub const VERSION: u16 = 1;

/// Descriptor dimensions declared by a container header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerHeader {
    pub global_dim: usize,
    pub local_dim: usize,
}

pub struct ContainerWriter<W: Write> {
    inner: W,
    header: ContainerHeader,
    written: u64,
}

impl<W: Write> ContainerWriter<W> {
    pub fn new(mut inner: W, header: ContainerHeader) -> Result<Self, FrameError> {
        inner.write_all(MAGIC)?;
        inner.write_all(&VERSION.to_le_bytes())?;
        inner.write_all(&(header.global_dim as u32).to_le_bytes())?;
        inner.write_all(&(header.local_dim as u32).to_le_bytes())?;
        Ok(Self {
            inner,
            header,
            written: 0,
        })
    }

    pub fn write_frame(&mut self, record: &FrameRecord) -> Result<(), FrameError> {
        let frame = Some(self.written);
        if record.global.len() != self.header.global_dim {
            return Err(FrameError::DimensionMismatch {
                frame,
                what: "global",
                expected: self.header.global_dim,
                found: record.global.len(),
            });
        }
        let mut buf = Vec::with_capacity(
            12 + 4 * record.global.len() + record.locals.len() * 4 * (2 + self.header.local_dim),
        );
        buf.extend_from_slice(&record.timestamp.to_le_bytes());
        for v in &record.global {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(record.locals.len() as u32).to_le_bytes());
        for local in &record.locals {
            if local.values.len() != self.header.local_dim {
                return Err(FrameError::DimensionMismatch {
                    frame,
                    what: "local",
                    expected: self.header.local_dim,
                    found: local.values.len(),
                });
            }
            buf.extend_from_slice(&local.keypoint.x.to_le_bytes());
            buf.extend_from_slice(&local.keypoint.y.to_le_bytes());
            for v in &local.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        self.inner.write_all(&buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, FrameError> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streams [`FrameRecord`]s out of a binary container.
pub struct ContainerReader<R: Read> {
    inner: R,
    header: ContainerHeader,
    index: u64,
    done: bool,
}

impl<R: Read> ContainerReader<R> {
    pub fn new(mut inner: R) -> Result<Self, FrameError> {
        let mut head = [0u8; 14];
        inner
            .read_exact(&mut head)
            .map_err(|_| FrameError::Malformed {
                frame: None,
                reason: "truncated container header".into(),
            })?;
        if &head[0..4] != MAGIC {
            return Err(FrameError::Malformed {
                frame: None,
                reason: "bad magic bytes".into(),
            });
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != VERSION {
            return Err(FrameError::Malformed {
                frame: None,
                reason: format!("unsupported container version {version}"),
            });
        }
        let global_dim = u32::from_le_bytes(head[6..10].try_into().unwrap()) as usize;
        let local_dim = u32::from_le_bytes(head[10..14].try_into().unwrap()) as usize;
        Ok(Self {
            inner,
            header: ContainerHeader {
                global_dim,
                local_dim,
            },
            index: 0,
            done: false,
        })
    }

    pub fn header(&self) -> ContainerHeader {
        self.header
    }

    fn truncated(&self) -> FrameError {
        FrameError::Malformed {
            frame: Some(self.index),
            reason: "truncated frame block".into(),
        }
    }

    fn read_floats(&mut self, n: usize) -> Result<Vec<f32>, FrameError> {
        let mut bytes = vec![0u8; n * 4];
        self.inner
            .read_exact(&mut bytes)
            .map_err(|_| self.truncated())?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn read_frame(&mut self) -> Result<Option<FrameRecord>, FrameError> {
        let mut ts = [0u8; 8];
        // A clean EOF is only allowed on a frame boundary.
        let mut filled = 0;
        while filled < ts.len() {
            match self.inner.read(&mut ts[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => return Err(self.truncated()),
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let timestamp = f64::from_le_bytes(ts);
        let global = self.read_floats(self.header.global_dim)?;
        let mut count = [0u8; 4];
        self.inner
            .read_exact(&mut count)
            .map_err(|_| self.truncated())?;
        let count = u32::from_le_bytes(count) as usize;
        let mut locals = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let mut block = self.read_floats(2 + self.header.local_dim)?;
            let values = block.split_off(2);
            locals.push(LocalDescriptor::new(
                values,
                Keypoint::new(block[0], block[1]),
            ));
        }
        Ok(Some(FrameRecord {
            timestamp,
            global,
            locals,
        }))
    }
}

impl<R: Read> Iterator for ContainerReader<R> {
    type Item = Result<FrameRecord, FrameError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_frame() {
            Ok(Some(record)) => {
                self.index += 1;
                Some(Ok(record))
            }
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Parses the line-oriented text container.
pub fn read_text<R: BufRead>(reader: R) -> Result<(ContainerHeader, Vec<FrameRecord>), FrameError> {
    let mut header = None;
    let mut frames: Vec<FrameRecord> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let frame_idx = frames.len().checked_sub(1).map(|i| i as u64);
        let bad = |reason: String| FrameError::Malformed {
            frame: frame_idx,
            reason: format!("line {}: {reason}", lineno + 1),
        };
        let mut tokens = line.split_whitespace();
        let tag = tokens.next().unwrap_or_default();
        let nums: Vec<f64> = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| bad(format!("bad number {t:?}")))
            })
            .collect::<Result<_, _>>()?;
        match tag {
            "dims" => {
                if nums.len() != 2 || header.is_some() {
                    return Err(bad("expected a single `dims <D> <d>` line".into()));
                }
                header = Some(ContainerHeader {
                    global_dim: nums[0] as usize,
                    local_dim: nums[1] as usize,
                });
            }
            "frame" => {
                let h = header.ok_or_else(|| bad("`frame` before `dims`".into()))?;
                if nums.len() != 1 + h.global_dim {
                    return Err(FrameError::DimensionMismatch {
                        frame: Some(frames.len() as u64),
                        what: "global",
                        expected: h.global_dim,
                        found: nums.len().saturating_sub(1),
                    });
                }
                frames.push(FrameRecord {
                    timestamp: nums[0],
                    global: nums[1..].iter().map(|&v| v as f32).collect(),
                    locals: Vec::new(),
                });
            }
            "local" => {
                let h = header.ok_or_else(|| bad("`local` before `dims`".into()))?;
                let frame = frames
                    .last_mut()
                    .ok_or_else(|| bad("`local` before any `frame`".into()))?;
                if nums.len() != 2 + h.local_dim {
                    return Err(FrameError::DimensionMismatch {
                        frame: frame_idx,
                        what: "local",
                        expected: h.local_dim,
                        found: nums.len().saturating_sub(2),
                    });
                }
                frame.locals.push(LocalDescriptor::new(
                    nums[2..].iter().map(|&v| v as f32).collect(),
                    Keypoint::new(nums[0] as f32, nums[1] as f32),
                ));
            }
            other => return Err(bad(format!("unknown record tag {other:?}"))),
        }
    }
    let header = header.ok_or(FrameError::Malformed {
        frame: None,
        reason: "missing `dims` line".into(),
    })?;
    Ok((header, frames))
}

pub fn write_text<W: Write>(
    mut out: W,
    header: ContainerHeader,
    frames: &[FrameRecord],
) -> Result<(), FrameError> {
    writeln!(out, "dims {} {}", header.global_dim, header.local_dim)?;
    for f in frames {
        write!(out, "frame {}", f.timestamp)?;
        for v in &f.global {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
        for l in &f.locals {
            write!(out, "local {} {}", l.keypoint.x, l.keypoint.y)?;
            for v in &l.values {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Either flavour of container, sniffed from the first bytes of the file.
pub enum DescriptorSource {
    Binary(ContainerReader<BufReader<File>>),
    Text(std::vec::IntoIter<FrameRecord>),
}

impl DescriptorSource {
    pub fn open(path: impl AsRef<Path>) -> Result<(ContainerHeader, Self), FrameError> {
        let path = path.as_ref();
        let mut probe = [0u8; 4];
        let n = File::open(path)?.read(&mut probe)?;
        if n == 4 && &probe == MAGIC {
            let reader = ContainerReader::new(BufReader::new(File::open(path)?))?;
            Ok((reader.header(), Self::Binary(reader)))
        } else {
            let (header, frames) = read_text(BufReader::new(File::open(path)?))?;
            Ok((header, Self::Text(frames.into_iter())))
        }
    }
}

impl Iterator for DescriptorSource {
    type Item = Result<FrameRecord, FrameError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            Self::Binary(r) => r.next(),
            Self::Text(it) => it.next().map(Ok),
        }
    }
}

/// Writes `frames` as a binary container at `path`.
pub fn write_binary_file<'a>(
    path: impl AsRef<Path>,
    header: ContainerHeader,
    frames: impl IntoIterator<Item = &'a FrameRecord>,
) -> Result<(), FrameError> {
    let mut writer = ContainerWriter::new(BufWriter::new(File::create(path)?), header)?;
    for f in frames {
        writer.write_frame(f)?;
    }
    writer.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(ts: f64, locals: usize) -> FrameRecord {
        FrameRecord {
            timestamp: ts,
            global: vec![1.0, -2.0, 0.5],
            locals: (0..locals)
                .map(|i| LocalDescriptor::new(vec![i as f32, 1.0], Keypoint::new(3.0, i as f32)))
                .collect(),
        }
    }

    fn header() -> ContainerHeader {
        ContainerHeader {
            global_dim: 3,
            local_dim: 2,
        }
    }

    #[test]
    fn binary_layout_is_exact() {
        let mut w = ContainerWriter::new(Vec::new(), header()).unwrap();
        w.write_frame(&record(0.5, 1)).unwrap();
        let bytes = w.finish().unwrap();
        let mut expected = Vec::new();
        expected.extend_from_slice(b"FILD");
        expected.extend_from_slice(&1u16.to_le_bytes());
        expected.extend_from_slice(&3u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&0.5f64.to_le_bytes());
        for v in [1.0f32, -2.0, 0.5] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&1u32.to_le_bytes());
        for v in [3.0f32, 0.0, 0.0, 1.0] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes, expected);
    }

    #[test]
    fn binary_reads_back() {
        let frames = vec![record(0.0, 3), record(0.1, 0), record(0.2, 2)];
        let mut w = ContainerWriter::new(Vec::new(), header()).unwrap();
        for f in &frames {
            w.write_frame(f).unwrap();
        }
        let bytes = w.finish().unwrap();
        let reader = ContainerReader::new(bytes.as_slice()).unwrap();
        assert_eq!(reader.header(), header());
        let back: Vec<_> = reader.collect::<Result<_, _>>().unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn truncated_block_reports_frame_index() {
        let mut w = ContainerWriter::new(Vec::new(), header()).unwrap();
        w.write_frame(&record(0.0, 1)).unwrap();
        w.write_frame(&record(0.1, 2)).unwrap();
        let mut bytes = w.finish().unwrap();
        bytes.truncate(bytes.len() - 3);
        let items: Vec<_> = ContainerReader::new(bytes.as_slice()).unwrap().collect();
        assert_eq!(items.len(), 2);
        assert!(items[0].is_ok());
        assert!(matches!(
            items[1],
            Err(FrameError::Malformed { frame: Some(1), .. })
        ));
    }

    #[test]
    fn bad_magic() {
        assert!(
            ContainerReader::new(&b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00\x00\x00"[..]).is_err()
        );
    }

    #[test]
    fn text_reads_back() {
        let frames = vec![record(0.0, 2), record(1.5, 0)];
        let mut out = Vec::new();
        write_text(&mut out, header(), &frames).unwrap();
        let (h, back) = read_text(out.as_slice()).unwrap();
        assert_eq!(h, header());
        assert_eq!(back, frames);
    }

    #[test]
    fn text_dimension_error_names_frame() {
        let text = "dims 2 1\nframe 0 1 2\nframe 1 1 2 3\n";
        match read_text(text.as_bytes()) {
            Err(FrameError::DimensionMismatch {
                frame: Some(1),
                what: "global",
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
