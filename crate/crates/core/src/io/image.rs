use super::FormatError;
use crate::masking::{DynamicMask, FlowField, LabelMap};

const FLOW_MAGIC: &[u8; 4] = b"DPFL";

struct PgmHeader {
    width: u32,
    height: u32,
    maxval: u32,
    frame: Option<u32>,
    /// Offset of the first raster byte.
    data: usize,
}

/// Parses a binary (P5) PGM header. A `# frame N` comment records the frame index.
fn pgm_header(bytes: &[u8]) -> Result<PgmHeader, FormatError> {
    if !bytes.starts_with(b"P5") {
        return Err(FormatError::byte(0, "missing P5 magic"));
    }
    let mut pos = 2;
    let mut frame = None;
    let mut numbers = [0u32; 3];
    for (k, slot) in numbers.iter_mut().enumerate() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |e| pos + e);
                    let comment = String::from_utf8_lossy(&bytes[pos + 1..end]);
                    if let Some(v) = comment.trim().strip_prefix("frame ") {
                        frame = Some(v.trim().parse().map_err(|_| FormatError::byte(pos, format!("bad frame comment {v:?}")))?);
                    }
                    pos = end;
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let what = ["width", "height", "maxval"][k];
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *slot = text.parse().map_err(|_| FormatError::byte(start, format!("expected {what}")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(FormatError::byte(pos, "expected whitespace after maxval"));
    }
    let [width, height, maxval] = numbers;
    if maxval == 0 || maxval > 65535 {
        return Err(FormatError::byte(pos, format!("maxval {maxval} outside 1..=65535")));
    }
    Ok(PgmHeader { width, height, maxval, frame, data: pos + 1 })
}

fn raster<'a>(bytes: &'a [u8], h: &PgmHeader, bytes_per_pixel: usize) -> Result<&'a [u8], FormatError> {
    let need = h.width as usize * h.height as usize * bytes_per_pixel;
    let have = bytes.len() - h.data;
    if have < need {
        return Err(FormatError::byte(bytes.len(), format!("raster truncated: {have} of {need} bytes")));
    }
    if have > need {
        return Err(FormatError::byte(h.data + need, format!("{} trailing bytes after raster", have - need)));
    }
    Ok(&bytes[h.data..])
}

fn check_dims(h: &PgmHeader, expected: Option<(u32, u32)>) -> Result<(), FormatError> {
    match expected {
        Some(e) if e != (h.width, h.height) => Err(FormatError::DimensionMismatch { expected: e, got: (h.width, h.height) }),
        _ => Ok(()),
    }
}

fn pgm_prefix(frame: Option<u32>, width: u32, height: u32, maxval: u32) -> Vec<u8> {
    let frame = frame.map(|f| format!("# frame {f}\n")).unwrap_or_default();
    format!("P5\n{frame}{width} {height}\n{maxval}\n").into_bytes()
}

/// 8-bit PGM with 255 for masked pixels and 0 elsewhere.
pub fn write_mask_pgm(mask: &DynamicMask) -> Vec<u8> {
    let mut out = pgm_prefix(Some(mask.frame_index), mask.width, mask.height, 255);
    out.extend(mask.bits.iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Any nonzero pixel is masked. `expected` checks the frame size; the frame
/// index comes from the `# frame` comment (0 when absent).
pub fn read_mask_pgm(bytes: &[u8], expected: Option<(u32, u32)>) -> Result<DynamicMask, FormatError> {
    let h = pgm_header(bytes)?;
    if h.maxval > 255 {
        return Err(FormatError::byte(0, format!("mask maxval {} needs 8-bit samples", h.maxval)));
    }
    check_dims(&h, expected)?;
    let bits = raster(bytes, &h, 1)?.iter().map(|&b| b != 0).collect();
    Ok(DynamicMask { frame_index: h.frame.unwrap_or(0), width: h.width, height: h.height, bits })
}

/// 16-bit big-endian PGM of class ids.
pub fn write_labelmap_pgm(labels: &LabelMap) -> Vec<u8> {
    let mut out = pgm_prefix(None, labels.width, labels.height, 65535);
    out.extend(labels.ids.iter().flat_map(|id| id.to_be_bytes()));
    out
}

/// Accepts 8-bit or 16-bit samples.
pub fn read_labelmap_pgm(bytes: &[u8], expected: Option<(u32, u32)>) -> Result<LabelMap, FormatError> {
    let h = pgm_header(bytes)?;
    check_dims(&h, expected)?;
    let wide = h.maxval > 255;
    let data = raster(bytes, &h, if wide { 2 } else { 1 })?;
    let ids = if wide { data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect() } else { data.iter().map(|&b| b as u16).collect() };
    Ok(LabelMap { width: h.width, height: h.height, ids })
}

/// `DPFL`, little-endian u32 width and height, then row-major f32 `(u, v)`.
pub fn write_flow(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + flow.data.len() * 8);
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&flow.width.to_le_bytes());
    out.extend_from_slice(&flow.height.to_le_bytes());
    for [u, v] in &flow.data {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// The format stores no frame index, so the caller supplies it.
pub fn read_flow(bytes: &[u8], frame: u32) -> Result<FlowField, FormatError> {
    if bytes.len() < 4 || &bytes[..4] != FLOW_MAGIC {
        return Err(FormatError::byte(0, "missing DPFL magic"));
    }
    if bytes.len() < 12 {
        return Err(FormatError::byte(bytes.len(), "header truncated"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("four bytes"));
    let (width, height) = (word(4), word(8));
    let need = (width as u64 * height as u64).checked_mul(8).ok_or_else(|| FormatError::byte(4, "frame size overflows"))?;
    let have = (bytes.len() - 12) as u64;
    if have < need {
        let whole = 12 + (have / 8 * 8) as usize;
        return Err(FormatError::byte(whole, format!("flow data truncated: {have} of {need} bytes")));
    }
    if have > need {
        return Err(FormatError::byte(12 + need as usize, format!("{} trailing bytes", have - need)));
    }
    let data = bytes[12..]
        .chunks_exact(8)
        .map(|c| [f32::from_le_bytes(c[..4].try_into().unwrap()), f32::from_le_bytes(c[4..].try_into().unwrap())])
        .collect();
    Ok(FlowField { frame, width, height, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_round_trip() {
        let mut m = DynamicMask::empty(17, 5, 3);
        m.set(0, 0, true);
        m.set(4, 2, true);
        let bytes = write_mask_pgm(&m);
        assert_eq!(read_mask_pgm(&bytes, Some((5, 3))).unwrap(), m);
        assert_eq!(write_mask_pgm(&read_mask_pgm(&bytes, None).unwrap()), bytes);
    }

    #[test]
    fn mask_size_must_match() {
        let bytes = write_mask_pgm(&DynamicMask::empty(0, 5, 3));
        match read_mask_pgm(&bytes, Some((3, 5))) {
            Err(FormatError::DimensionMismatch { expected, got }) => assert_eq!((expected, got), ((3, 5), (5, 3))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn foreign_pgm_headers() {
        let mut bytes = b"P5 # made elsewhere\n2 # w\n 2\n255\n".to_vec();
        bytes.extend([0, 9, 0, 0]);
        let m = read_mask_pgm(&bytes, None).unwrap();
        assert_eq!((m.frame_index, m.bits), (0, vec![false, true, false, false]));
    }

    #[test]
    fn malformed_pgm_is_positioned() {
        let good = write_mask_pgm(&DynamicMask::empty(0, 4, 4));
        assert!(matches!(read_mask_pgm(&good[..good.len() - 1], None), Err(FormatError::Byte { offset, .. }) if offset == good.len() - 1));
        assert!(matches!(read_mask_pgm(b"P2\n1 1\n255\n0", None), Err(FormatError::Byte { offset: 0, .. })));
        assert!(matches!(read_mask_pgm(b"P5\n1 x\n255\n0", None), Err(FormatError::Byte { offset: 5, .. })));
        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(read_mask_pgm(&extra, None), Err(FormatError::Byte { offset, .. }) if offset == good.len()));
    }

    #[test]
    fn labelmap_round_trip() {
        let l = LabelMap { width: 3, height: 2, ids: vec![0, 1, 255, 256, 65535, 12] };
        let bytes = write_labelmap_pgm(&l);
        assert_eq!(read_labelmap_pgm(&bytes, Some((3, 2))).unwrap(), l);
        let narrow = [b"P5\n2 1\n255\n".as_slice(), &[7, 200]].concat();
        assert_eq!(read_labelmap_pgm(&narrow, None).unwrap().ids, vec![7, 200]);
    }

    #[test]
    fn flow_round_trip_is_bitwise() {
        let mut f = FlowField::zeros(4, 3, 2);
        f.set(0, 0, [1.5, -0.25]);
        f.set(2, 1, [f32::MIN_POSITIVE, 3e38]);
        let bytes = write_flow(&f);
        assert_eq!(&bytes[..4], b"DPFL");
        assert_eq!(bytes.len(), 12 + 6 * 8);
        let back = read_flow(&bytes, 4).unwrap();
        assert_eq!(back, f);
        assert_eq!(write_flow(&back), bytes);
    }

    #[test]
    fn truncated_flow_names_the_offset() {
        let bytes = write_flow(&FlowField::zeros(0, 3, 2));
        match read_flow(&bytes[..30], 0) {
            Err(FormatError::Byte { offset, message }) => {
                assert_eq!(offset, 28);
                assert!(message.contains("truncated"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_flow(&bytes[..7], 0), Err(FormatError::Byte { offset: 7, .. })));
        assert!(matches!(read_flow(b"XXXX", 0), Err(FormatError::Byte { offset: 0, .. })));
    }
}
