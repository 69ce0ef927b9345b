//! Binary netpbm codecs: P6 for frames, P5 for masks (pixel = class index).

use std::fs;
use std::path::Path;

use super::{Frame, MaskMap};
use crate::error::{Error, Result};

struct Header {
    width: usize,
    height: usize,
    payload_offset: usize,
}

fn is_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::MalformedHeader("file shorter than magic".into()));
    }
    if &bytes[..2] != magic {
        return Err(Error::WrongFormat {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[..2]).into_owned(),
        });
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (n, field) in fields.iter_mut().enumerate() {
        // whitespace and comments before each token
        let start_ws = pos;
        loop {
            match bytes.get(pos) {
                Some(&b) if is_space(b) => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' || b == b'\r' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        if pos == start_ws {
            return Err(Error::MalformedHeader(format!(
                "missing separator before header field {n}"
            )));
        }
        let digits_start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if pos == digits_start {
            return Err(Error::MalformedHeader(format!(
                "header field {n} is not a decimal integer"
            )));
        }
        let text = std::str::from_utf8(&bytes[digits_start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::MalformedHeader(format!("header field {n} out of range")))?;
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(pos) {
        Some(&b) if is_space(b) => pos += 1,
        _ => {
            return Err(Error::MalformedHeader(
                "missing whitespace after maxval".into(),
            ))
        }
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions(format!("{width}x{height} image")));
    }
    Ok(Header {
        width: width as usize,
        height: height as usize,
        payload_offset: pos,
    })
}

fn payload(bytes: &[u8], header: &Header, channels: usize) -> Result<Vec<u8>> {
    let expected = header.width * header.height * channels;
    let body = &bytes[header.payload_offset..];
    if body.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: body.len(),
        });
    }
    Ok(body[..expected].to_vec())
}

pub fn decode_frame(bytes: &[u8]) -> Result<Frame> {
    let header = parse_header(bytes, b"P6")?;
    let data = payload(bytes, &header, 3)?;
    Frame::new(header.width, header.height, data)
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.data());
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<MaskMap> {
    let header = parse_header(bytes, b"P5")?;
    let data = payload(bytes, &header, 1)?;
    MaskMap::new(
        header.width,
        header.height,
        data.into_iter().map(u16::from).collect(),
    )
}

pub fn encode_mask(mask: &MaskMap) -> Result<Vec<u8>> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.reserve(mask.data().len());
    for &c in mask.data() {
        out.push(u8::try_from(c).map_err(|_| Error::ClassOverflow(c))?);
    }
    Ok(out)
}

pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frame(&bytes)
}

pub fn save_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_frame(frame)).map_err(|e| Error::io(path, e))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<MaskMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mask(&bytes)
}

/// Writes `mask` as P5. Fails before touching the file if any index exceeds 255.
pub fn save_mask(mask: &MaskMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_mask(mask)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_red_pixel() {
        let f = decode_frame(b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        assert_eq!(f, Frame::new(1, 1, vec![255, 0, 0]).unwrap());
    }

    #[test]
    fn header_comments_and_mixed_whitespace() {
        let f = decode_frame(b"P6 # a comment\n1\t# more\n 1 255\n\x01\x02\x03").unwrap();
        assert_eq!(f.data(), &[1, 2, 3]);
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0u8; 9]);
        assert!(matches!(
            decode_frame(&bytes),
            Err(Error::Truncated {
                expected: 12,
                found: 9
            })
        ));
    }

    #[test]
    fn wrong_magic() {
        assert!(matches!(
            decode_frame(b"P5\n1 1\n255\n\x00"),
            Err(Error::WrongFormat { .. })
        ));
        assert!(matches!(
            decode_mask(b"P6\n1 1\n255\n\x00\x00\x00"),
            Err(Error::WrongFormat { .. })
        ));
    }

    #[test]
    fn maxval_other_than_255() {
        assert!(matches!(
            decode_frame(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00"),
            Err(Error::UnsupportedMaxval(65535))
        ));
    }

    #[test]
    fn malformed_headers() {
        for bad in [
            &b"P6"[..],
            b"P6\nx 1\n255\n",
            b"P6\n1 1\n255",
            b"P61 1 255\n\x00\x00\x00",
            b"P",
        ] {
            assert!(
                matches!(decode_frame(bad), Err(Error::MalformedHeader(_))),
                "{:?}",
                String::from_utf8_lossy(bad)
            );
        }
    }

    #[test]
    fn zero_mask_payload() {
        let m = MaskMap::filled(4, 4, 0).unwrap();
        let bytes = encode_mask(&m).unwrap();
        let header = b"P5\n4 4\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0u8; 16]);
    }

    #[test]
    fn mask_overflow() {
        let m = MaskMap::new(2, 1, vec![3, 300]).unwrap();
        assert!(matches!(encode_mask(&m), Err(Error::ClassOverflow(300))));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        assert!(save_mask(&m, &p).is_err());
        assert!(!p.exists());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = MaskMap::new(3, 2, vec![0, 1, 2, 3, 255, 7]).unwrap();
        let p = dir.path().join("m.pgm");
        save_mask(&m, &p).unwrap();
        assert_eq!(load_mask(&p).unwrap(), m);
        assert!(matches!(
            load_mask(dir.path().join("missing.pgm")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn frame_bytes_round_trip(w in 1usize..9, h in 1usize..9, bytes in proptest::collection::vec(any::<u8>(), 192)) {
            let data = bytes[..w * h * 3].to_vec();
            let f = Frame::new(w, h, data).unwrap();
            let bytes = encode_frame(&f);
            prop_assert_eq!(decode_frame(&bytes).unwrap(), f.clone());
            prop_assert_eq!(encode_frame(&decode_frame(&bytes).unwrap()), bytes);
        }

        #[test]
        fn mask_bytes_round_trip(w in 1usize..9, h in 1usize..9, cells in proptest::collection::vec(0u16..=255, 64)) {
            let m = MaskMap::new(w, h, cells[..w * h].to_vec()).unwrap();
            let bytes = encode_mask(&m).unwrap();
            prop_assert_eq!(decode_mask(&bytes).unwrap(), m);
        }
    }
}
