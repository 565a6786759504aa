//! Minimal EXIF reader: image dimensions plus the GPS and capture-time tags.
//!
//! Supports the TIFF block found in a JPEG APP1 `Exif\0\0` segment, a PNG
//! `eXIf` chunk, or a bare TIFF file. Nothing beyond IFD0, the Exif sub-IFD
//! and the GPS sub-IFD is read.

use std::io::Cursor;

use super::GpsCoord;

#[derive(Debug, thiserror::Error)]
pub enum MetadataError {
    #[error("unparsable image container: {0}")]
    Container(String),
}

/// Result of [`extract_metadata`]. `warning` is set when the container decoded
/// but its metadata block was malformed and had to be ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetadata {
    pub width: u32,
    pub height: u32,
    pub gps: Option<GpsCoord>,
    pub captured_at: Option<String>,
    pub warning: Option<String>,
}

const TAG_DATETIME: u16 = 0x0132;
const TAG_EXIF_IFD: u16 = 0x8769;
const TAG_GPS_IFD: u16 = 0x8825;
const TAG_DATETIME_ORIGINAL: u16 = 0x9003;
const GPS_LAT_REF: u16 = 1;
const GPS_LAT: u16 = 2;
const GPS_LON_REF: u16 = 3;
const GPS_LON: u16 = 4;

pub fn extract_metadata(bytes: &[u8]) -> Result<ImageMetadata, MetadataError> {
    let (width, height) = image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| MetadataError::Container(e.to_string()))?
        .into_dimensions()
        .map_err(|e| MetadataError::Container(e.to_string()))?;
    if width == 0 || height == 0 {
        return Err(MetadataError::Container("zero-sized image".into()));
    }

    let mut meta = ImageMetadata { width, height, gps: None, captured_at: None, warning: None };
    match find_tiff_block(bytes) {
        Ok(None) => {}
        Ok(Some(tiff)) => match parse_tiff(tiff) {
            Ok(tags) => {
                meta.gps = tags.gps;
                meta.captured_at = tags.captured_at;
            }
            Err(reason) => meta.warning = Some(format!("malformed EXIF block: {reason}")),
        },
        Err(reason) => meta.warning = Some(format!("malformed metadata segment: {reason}")),
    }
    Ok(meta)
}

fn find_tiff_block(bytes: &[u8]) -> Result<Option<&[u8]>, String> {
    if bytes.starts_with(&[0xFF, 0xD8]) {
        return jpeg_exif(bytes);
    }
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        return png_exif(bytes);
    }
    if bytes.starts_with(b"II*\0") || bytes.starts_with(b"MM\0*") {
        return Ok(Some(bytes));
    }
    Ok(None)
}

fn jpeg_exif(bytes: &[u8]) -> Result<Option<&[u8]>, String> {
    let mut pos = 2;
    while pos + 4 <= bytes.len() {
        if bytes[pos] != 0xFF {
            return Err(format!("expected JPEG marker at offset {pos}"));
        }
        let marker = bytes[pos + 1];
        if marker == 0xFF {
            pos += 1;
            continue;
        }
        // start of scan or end of image: no metadata past this point
        if marker == 0xDA || marker == 0xD9 {
            return Ok(None);
        }
        if (0xD0..=0xD7).contains(&marker) || marker == 0x01 {
            pos += 2;
            continue;
        }
        let len = u16::from_be_bytes([bytes[pos + 2], bytes[pos + 3]]) as usize;
        if len < 2 || pos + 2 + len > bytes.len() {
            return Err(format!("segment 0x{marker:02X} overruns the file"));
        }
        let payload = &bytes[pos + 4..pos + 2 + len];
        if marker == 0xE1 && payload.starts_with(b"Exif\0\0") {
            return Ok(Some(&payload[6..]));
        }
        pos += 2 + len;
    }
    Ok(None)
}

fn png_exif(bytes: &[u8]) -> Result<Option<&[u8]>, String> {
    let mut pos = 8;
    while pos + 8 <= bytes.len() {
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let kind = &bytes[pos + 4..pos + 8];
        let end = pos + 8 + len;
        if end + 4 > bytes.len() {
            return Err("PNG chunk overruns the file".into());
        }
        if kind == b"eXIf" {
            return Ok(Some(&bytes[pos + 8..end]));
        }
        if kind == b"IEND" {
            break;
        }
        pos = end + 4;
    }
    Ok(None)
}

#[derive(Debug, Default)]
struct ParsedTags {
    gps: Option<GpsCoord>,
    captured_at: Option<String>,
}

struct Tiff<'a> {
    data: &'a [u8],
    big_endian: bool,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    tag: u16,
    kind: u16,
    count: u32,
    // offset of the 4-byte value/offset field within the TIFF block
    field: usize,
}

impl<'a> Tiff<'a> {
    fn u16_at(&self, off: usize) -> Result<u16, String> {
        let b: [u8; 2] = self
            .data
            .get(off..off + 2)
            .ok_or_else(|| format!("read past end at {off}"))?
            .try_into()
            .unwrap();
        Ok(if self.big_endian { u16::from_be_bytes(b) } else { u16::from_le_bytes(b) })
    }

    fn u32_at(&self, off: usize) -> Result<u32, String> {
        let b: [u8; 4] = self
            .data
            .get(off..off + 4)
            .ok_or_else(|| format!("read past end at {off}"))?
            .try_into()
            .unwrap();
        Ok(if self.big_endian { u32::from_be_bytes(b) } else { u32::from_le_bytes(b) })
    }

    fn entries(&self, ifd: usize) -> Result<Vec<Entry>, String> {
        let n = self.u16_at(ifd)? as usize;
        (0..n)
            .map(|i| {
                let at = ifd + 2 + i * 12;
                Ok(Entry {
                    tag: self.u16_at(at)?,
                    kind: self.u16_at(at + 2)?,
                    count: self.u32_at(at + 4)?,
                    field: at + 8,
                })
            })
            .collect()
    }

    fn type_size(kind: u16) -> Option<usize> {
        match kind {
            1 | 2 | 6 | 7 => Some(1),
            3 | 8 => Some(2),
            4 | 9 | 11 => Some(4),
            5 | 10 | 12 => Some(8),
            _ => None,
        }
    }

    fn value_bytes(&self, e: &Entry) -> Result<&'a [u8], String> {
        let size = Self::type_size(e.kind).ok_or_else(|| format!("unknown type {} for tag 0x{:04X}", e.kind, e.tag))?;
        let total = size.checked_mul(e.count as usize).ok_or("count overflow")?;
        let start = if total <= 4 { e.field } else { self.u32_at(e.field)? as usize };
        self.data
            .get(start..start + total)
            .ok_or_else(|| format!("tag 0x{:04X} value out of bounds", e.tag))
    }

    fn ascii(&self, e: &Entry) -> Result<String, String> {
        if e.kind != 2 {
            return Err(format!("tag 0x{:04X} is not ASCII", e.tag));
        }
        let raw = self.value_bytes(e)?;
        let end = raw.iter().position(|&b| b == 0).unwrap_or(raw.len());
        Ok(String::from_utf8_lossy(&raw[..end]).trim().to_string())
    }

    fn offset(&self, e: &Entry) -> Result<usize, String> {
        match e.kind {
            4 | 13 => Ok(self.u32_at(e.field)? as usize),
            _ => Err(format!("tag 0x{:04X} is not an offset", e.tag)),
        }
    }

    fn rationals(&self, e: &Entry) -> Result<Vec<f64>, String> {
        if e.kind != 5 {
            return Err(format!("tag 0x{:04X} is not RATIONAL", e.tag));
        }
        let raw = self.value_bytes(e)?;
        let base = raw.as_ptr() as usize - self.data.as_ptr() as usize;
        (0..e.count as usize)
            .map(|i| {
                let num = self.u32_at(base + i * 8)? as f64;
                let den = self.u32_at(base + i * 8 + 4)? as f64;
                if den == 0.0 {
                    Err("zero denominator".to_string())
                } else {
                    Ok(num / den)
                }
            })
            .collect()
    }
}

fn parse_tiff(data: &[u8]) -> Result<ParsedTags, String> {
    let big_endian = match data.get(0..2) {
        Some(b"II") => false,
        Some(b"MM") => true,
        _ => return Err("missing byte-order mark".into()),
    };
    let tiff = Tiff { data, big_endian };
    if tiff.u16_at(2)? != 42 {
        return Err("bad TIFF magic".into());
    }
    let ifd0 = tiff.u32_at(4)? as usize;
    let mut out = ParsedTags::default();
    let mut datetime = None;
    for e in tiff.entries(ifd0)? {
        match e.tag {
            TAG_DATETIME => datetime = Some(tiff.ascii(&e)?),
            TAG_EXIF_IFD => {
                let sub = tiff.offset(&e)?;
                for se in tiff.entries(sub)? {
                    if se.tag == TAG_DATETIME_ORIGINAL {
                        out.captured_at = normalize_exif_datetime(&tiff.ascii(&se)?);
                    }
                }
            }
            TAG_GPS_IFD => out.gps = parse_gps(&tiff, tiff.offset(&e)?)?,
            _ => {}
        }
    }
    if out.captured_at.is_none() {
        out.captured_at = datetime.as_deref().and_then(normalize_exif_datetime);
    }
    Ok(out)
}

fn parse_gps(tiff: &Tiff<'_>, ifd: usize) -> Result<Option<GpsCoord>, String> {
    let (mut lat, mut lon, mut lat_ref, mut lon_ref) = (None, None, None, None);
    for e in tiff.entries(ifd)? {
        match e.tag {
            GPS_LAT_REF => lat_ref = Some(tiff.ascii(&e)?),
            GPS_LON_REF => lon_ref = Some(tiff.ascii(&e)?),
            GPS_LAT => lat = Some(dms_to_degrees(&tiff.rationals(&e)?)?),
            GPS_LON => lon = Some(dms_to_degrees(&tiff.rationals(&e)?)?),
            _ => {}
        }
    }
    let (Some(lat), Some(lon)) = (lat, lon) else {
        return Ok(None);
    };
    let lat = if lat_ref.as_deref() == Some("S") { -lat } else { lat };
    let lon = if lon_ref.as_deref() == Some("W") { -lon } else { lon };
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(format!("GPS coordinate out of range ({lat}, {lon})"));
    }
    Ok(Some(GpsCoord { lat, lon }))
}

fn dms_to_degrees(parts: &[f64]) -> Result<f64, String> {
    match parts {
        [d] => Ok(*d),
        [d, m] => Ok(d + m / 60.0),
        [d, m, s, ..] => Ok(d + m / 60.0 + s / 3600.0),
        [] => Err("empty GPS coordinate".into()),
    }
}

/// `YYYY:MM:DD HH:MM:SS` to `YYYY-MM-DDTHH:MM:SS`.
fn normalize_exif_datetime(raw: &str) -> Option<String> {
    chrono::NaiveDateTime::parse_from_str(raw, "%Y:%m:%d %H:%M:%S")
        .ok()
        .map(|t| t.format("%Y-%m-%dT%H:%M:%S").to_string())
}
