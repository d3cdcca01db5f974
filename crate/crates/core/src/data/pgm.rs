use std::path::Path;

use udfe_nn::Tensor;

use super::{io_err, DataError, DataResult};

/// Cursor over the whitespace/comment separated PGM header.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> DataResult<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        if text.is_empty() {
            return Err(DataError::Malformed(format!("missing PGM {what}")));
        }
        text.parse()
            .map_err(|_| DataError::DimensionOverflow(format!("PGM {what} `{text}`")))
    }
}

/// 8-bit binary PGM → `[1,H,W]`, mapping `[0, maxval]` linearly onto `[-1,1]`.
pub fn decode_pgm(bytes: &[u8]) -> DataResult<Tensor<f32>> {
    if !bytes.starts_with(b"P5") {
        return Err(DataError::UnknownMagic(bytes.iter().take(2).copied().collect()));
    }
    let mut hd = Header { bytes, pos: 2 };
    let w = hd.number("width")?;
    let h = hd.number("height")?;
    let maxval = hd.number("maxval")?;
    if w == 0 || h == 0 {
        return Err(DataError::Malformed("zero-sized PGM".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(DataError::Malformed(format!("maxval {maxval} is not an 8-bit depth")));
    }
    if hd.pos >= bytes.len() || !bytes[hd.pos].is_ascii_whitespace() {
        return Err(DataError::Malformed("missing separator after PGM header".into()));
    }
    let start = hd.pos + 1;
    let n = w
        .checked_mul(h)
        .ok_or_else(|| DataError::DimensionOverflow(format!("{w} x {h}")))?;
    let payload = &bytes[start..];
    if payload.len() < n {
        return Err(DataError::Truncated { expected: n, found: payload.len() });
    }
    let scale = 2.0 / maxval as f32;
    let data = payload[..n].iter().map(|&b| b as f32 * scale - 1.0).collect();
    Ok(Tensor::new(vec![1, h, w], data).expect("pgm shape"))
}

/// `[1,H,W]` or `[H,W]` in `[-1,1]` → 8-bit PGM; values are clamped and rounded.
pub fn encode_pgm(image: &Tensor<f32>) -> DataResult<Vec<u8>> {
    let (h, w) = match *image.shape() {
        [1, h, w] | [h, w] => (h, w),
        ref s => return Err(DataError::Invalid(format!("cannot write {s:?} as PGM"))),
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(
        image
            .data()
            .iter()
            .map(|&v| (((v.clamp(-1.0, 1.0) + 1.0) * 0.5) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn read_pgm(path: &Path) -> DataResult<Tensor<f32>> {
    decode_pgm(&std::fs::read(path).map_err(|e| io_err(path, e))?)
}

pub fn write_pgm(path: &Path, image: &Tensor<f32>) -> DataResult<()> {
    std::fs::write(path, encode_pgm(image)?).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_map_to_unit_range() {
        let t = decode_pgm(b"P5\n2 2\n255\n\x00\xff\x00\xff").unwrap();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data(), &[-1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn midpoint_byte() {
        let t = decode_pgm(b"P5 1 1 255\n\x80").unwrap();
        assert!((t.data()[0] - (128.0 / 255.0 * 2.0 - 1.0)).abs() < 1e-6);
        assert!((t.data()[0] - 0.00392).abs() < 1e-5);
    }

    #[test]
    fn comments_in_header_are_skipped() {
        let t = decode_pgm(b"P5\n# made by hand\n1 2\n255\n\x00\x00").unwrap();
        assert_eq!(t.shape(), &[1, 2, 1]);
    }

    #[test]
    fn errors_are_distinct() {
        assert!(matches!(decode_pgm(b"P6 1 1 255\n\x00"), Err(DataError::UnknownMagic(_))));
        assert!(matches!(
            decode_pgm(b"P5 4 4 255\n\x00\x00"),
            Err(DataError::Truncated { expected: 16, found: 2 })
        ));
        assert!(matches!(
            decode_pgm(b"P5 99999999999999999999999 1 255\n"),
            Err(DataError::DimensionOverflow(_))
        ));
        assert!(matches!(decode_pgm(b"P5 1 1 65535\n\x00\x00"), Err(DataError::Malformed(_))));
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let bytes: Vec<u8> = b"P5\n16 16\n255\n".iter().copied().chain(0..=255u8).collect();
        let t = decode_pgm(&bytes).unwrap();
        assert_eq!(encode_pgm(&t).unwrap(), bytes);
    }
}
