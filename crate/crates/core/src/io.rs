//! Sequence file format and a grayscale PGM directory importer.
//!
//! A sequence file is a one-line ASCII header
//! `DYSEQ1 <height> <width> <frames> <channel_id>\n` followed by a raw
//! little-endian `f32` payload of `frames * height * width` values, frames
//! in order and each frame row-major.

use crate::pipeline::SequenceTensor;
use crate::{fl, Error, Result, Scalar};
use ndarray::Array2;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// Magic token opening every sequence file header.
pub const SEQ_MAGIC: &str = "DYSEQ1";

/// Writes a sequence. Whitespace in the channel id is replaced with `_` so
/// the header stays single-line parseable.
pub fn write_sequence<F: Scalar>(path: impl AsRef<Path>, seq: &SequenceTensor<F>) -> Result<()> {
    let channel: String = {
        let cleaned: String = seq
            .channel_id()
            .chars()
            .map(|c| if c.is_whitespace() { '_' } else { c })
            .collect();
        if cleaned.is_empty() { "unnamed".to_string() } else { cleaned }
    };
    let mut file = std::fs::File::create(path)?;
    writeln!(
        file,
        "{SEQ_MAGIC} {} {} {} {channel}",
        seq.height(),
        seq.width(),
        seq.t()
    )?;
    let mut payload = Vec::with_capacity(4 * seq.t() * seq.height() * seq.width());
    for &v in seq.pixels().iter() {
        let f = v.to_f64().unwrap_or(f64::NAN) as f32;
        payload.extend_from_slice(&f.to_le_bytes());
    }
    file.write_all(&payload)?;
    Ok(())
}

/// Reads a sequence file, validating the magic token and payload length.
pub fn read_sequence<F: Scalar>(path: impl AsRef<Path>) -> Result<SequenceTensor<F>> {
    let path = path.as_ref();
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != SEQ_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad sequence header (expected '{SEQ_MAGIC} H W T channel')",
            path.display()
        )));
    }
    let parse = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("{}: invalid {what} '{s}'", path.display())))
    };
    let h = parse(fields[1], "height")?;
    let w = parse(fields[2], "width")?;
    let t = parse(fields[3], "frame count")?;
    let channel = fields[4].to_string();
    if h == 0 || w == 0 || t == 0 {
        return Err(Error::Format(format!("{}: zero dimension in header", path.display())));
    }

    let expected = 4usize * h * w * t;
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "{}: payload is {} bytes, header implies {expected}",
            path.display(),
            payload.len()
        )));
    }
    let mut data = Array2::<F>::zeros((t, h * w));
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        data[[i / (h * w), i % (h * w)]] = fl::<F>(v as f64);
    }
    SequenceTensor::new(h, w, data, channel)
}

/// Writes a single frame as a one-frame sequence file.
pub fn write_frame<F: Scalar>(
    path: impl AsRef<Path>,
    frame: &Array2<F>,
    channel_id: &str,
) -> Result<()> {
    let seq = SequenceTensor::from_frames(std::slice::from_ref(frame), channel_id)?;
    write_sequence(path, &seq)
}

fn parse_pgm<F: Scalar>(path: &Path) -> Result<Array2<F>> {
    let bytes = std::fs::read(path)?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));

    // Header tokens (magic, width, height, maxval) with '#' comments.
    let mut pos = 0usize;
    let mut tokens = Vec::<String>::new();
    while tokens.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos > start {
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
    }
    if tokens.len() != 4 || tokens[0] != "P5" {
        return Err(bad("not a binary PGM (P5) file"));
    }
    let w: usize = tokens[1].parse().map_err(|_| bad("invalid width"))?;
    let h: usize = tokens[2].parse().map_err(|_| bad("invalid height"))?;
    let maxval: usize = tokens[3].parse().map_err(|_| bad("invalid maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit grayscale PGM is supported"));
    }
    pos += 1; // single whitespace byte after maxval
    if bytes.len() < pos || bytes.len() - pos != w * h {
        return Err(bad("pixel payload length mismatch"));
    }
    let scale = maxval as f64;
    Ok(Array2::from_shape_fn((h, w), |(r, c)| {
        fl::<F>(bytes[pos + r * w + c] as f64 / scale)
    }))
}

/// Imports every `.pgm` file in a directory (sorted by file name) as one
/// sequence with intensities scaled to `[0, 1]`.
pub fn import_pgm_dir<F: Scalar>(
    dir: impl AsRef<Path>,
    channel_id: &str,
) -> Result<SequenceTensor<F>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("pgm"))
                == Some(true)
        })
        .collect();
    if paths.is_empty() {
        return Err(Error::Format(format!("{}: no .pgm files found", dir.display())));
    }
    paths.sort();
    let frames: Vec<Array2<F>> =
        paths.iter().map(|p| parse_pgm(p)).collect::<Result<_>>()?;
    SequenceTensor::from_frames(&frames, channel_id)
}
